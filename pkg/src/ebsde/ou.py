"""Ornstein-Uhlenbeck model and its dense Gaussian transition algebra.

The state follows the linear SDE

    dX_t = -A X_t dt + Sigma dW_t,

where every eigenvalue of A has real part > 0 (so -A is Hurwitz) and
Sigma is invertible.  Conditionally on X_0 = x, the state at time t is
Gaussian with mean e^{-At} x and covariance

    Sigma_t = Sigma_inf - e^{-At} Sigma_inf e^{-A^T t},

an exact algebraic consequence of the Lyapunov identity
A Sigma_inf + Sigma_inf A^T = Sigma Sigma^T satisfied by the stationary
covariance Sigma_inf.

Exact transitions are sampled jointly with the rescaled score row vector

    u_tilde(s) = e^{a s} (X_s - e^{-As} x)^T Sigma_s^{-1} e^{-As},

where a is the spectral abscissa of A.  Both quantities use the same
Gaussian increment.  The growing factor e^{a s} is folded into
e^{a s} e^{-As}, whose eigen-exponents have nonpositive real part, so the
evaluation stays finite for arbitrarily large s.

Everything here is O(d^3) dense linear algebra on small matrices; batched
sampling vectorizes over the time axis with stacked (m, d, d) operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    FactorizationFailure,
    NonPositiveTime,
    NotHurwitz,
    SingularDiffusion,
)

_HURWITZ_MARGIN = 1e-10
_COND_LIMIT = 1e12          # conditioning tolerance for Sigma invertibility
_EIG_COND_LIMIT = 1e8       # eigenbasis conditioning for the batched path
_UNDERFLOW_AT = 800.0       # a*t beyond which e^{-At} is returned as 0


@dataclass(frozen=True)
class OuModel:
    """Immutable Ornstein-Uhlenbeck model with precomputed spectral data.

    Fields
    ------
    dim : state dimension d.
    A : (d, d) drift matrix; the state follows dX = -A X dt + Sigma dW.
    Sigma : (d, d) invertible diffusion matrix.
    a : spectral abscissa, min over real parts of the spectrum of A (> 0).
    C_A : smallest known constant with ||e^{-At}|| <= C_A e^{-at}; >= 1.
    Sigma_inf : stationary covariance (symmetric positive definite).
    ca_is_estimate : True when C_A came from the internal grid search,
        which only ever produces a lower estimate of the true constant.
    """

    dim: int
    A: np.ndarray
    Sigma: np.ndarray
    a: float
    C_A: float
    Sigma_inf: np.ndarray
    ca_is_estimate: bool
    # derived plumbing, populated once by build_model
    _Q: np.ndarray = field(repr=False, default=None)        # Sigma Sigma^T
    _Q_inv: np.ndarray = field(repr=False, default=None)
    _L_Q: np.ndarray = field(repr=False, default=None)      # chol(Q)
    _L_inf: np.ndarray = field(repr=False, default=None)    # chol(Sigma_inf)
    _iso_rate: float | None = field(repr=False, default=None)
    _eig: tuple | None = field(repr=False, default=None)    # (lam, V, Vinv)
    _t_min: float = field(repr=False, default=0.0)


def _lyapunov_kron(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve A X + X A^T = Q by the Kronecker-vectorized linear system."""
    d = A.shape[0]
    eye = np.eye(d)
    K = np.kron(eye, A) + np.kron(A, eye)
    x = np.linalg.solve(K, Q.reshape(-1, order="F"))
    X = x.reshape((d, d), order="F")
    return 0.5 * (X + X.T)


def _estimate_ca(A: np.ndarray, a: float, t_grid_size: int) -> float:
    """Grid maximization of ||e^{-At}|| e^{at}; lower estimate of C_A."""
    lo, hi = 1e-4 / a, 50.0 / a

    def h(t: float) -> float:
        return np.linalg.norm(scipy.linalg.expm(-A * t), 2) * math.exp(a * t)

    ts = np.geomspace(lo, hi, t_grid_size)
    vals = np.array([h(t) for t in ts])
    best = int(np.argmax(vals))
    # local refinement around the coarse argmax
    for _ in range(3):
        left = ts[max(best - 1, 0)]
        right = ts[min(best + 1, len(ts) - 1)]
        if right <= left:
            break
        ts = np.linspace(left, right, 41)
        vals = np.array([h(t) for t in ts])
        best = int(np.argmax(vals))
    return max(1.0, float(vals[best]))


def build_model(
    A,
    Sigma,
    C_A: float | None = None,
    ca_grid_size: int = 200,
) -> OuModel:
    """Validate (A, Sigma) and assemble an OuModel.

    Raises NotHurwitz when some eigenvalue of A has real part <= 0 and
    SingularDiffusion when Sigma is not invertible within the conditioning
    tolerance.  When C_A is not supplied it is estimated by a grid search
    (a lower estimate; see estimate_CA).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if A.shape[0] != A.shape[1] or A.shape != Sigma.shape:
        raise ValueError("A and Sigma must be square matrices of equal size")
    d = A.shape[0]

    eigvals = np.linalg.eigvals(A)
    a = float(eigvals.real.min())
    if a <= _HURWITZ_MARGIN:
        raise NotHurwitz(
            f"spectral abscissa {a:.3e} <= {_HURWITZ_MARGIN:.0e}; -A is not Hurwitz"
        )
    if np.linalg.cond(Sigma) > _COND_LIMIT:
        raise SingularDiffusion("Sigma is singular within conditioning tolerance")

    Q = Sigma @ Sigma.T
    Sigma_inf = _lyapunov_kron(A, Q)
    if np.linalg.eigvalsh(Sigma_inf).min() <= 0.0:
        raise FactorizationFailure("stationary covariance is not positive definite")

    symmetric = np.allclose(A, A.T, atol=1e-12 * max(np.linalg.norm(A, 2), 1.0))
    if C_A is None:
        ca = _estimate_ca(A, a, ca_grid_size)
        ca_is_estimate = True
    else:
        ca = float(C_A)
        if ca < 1.0:
            raise ValueError("C_A must be >= 1")
        if ca == 1.0 and not symmetric:
            raise ValueError(
                "C_A = 1 is accepted only for symmetric A; pass a value > 1 "
                "or let the model estimate it"
            )
        ca_is_estimate = False

    # fast-path classification for batched sampling
    norm_A = np.linalg.norm(A, 2)
    trace_rate = float(np.trace(A)) / d
    iso_rate = None
    if np.linalg.norm(A - trace_rate * np.eye(d), 2) <= 1e-12 * max(norm_A, 1.0):
        iso_rate = trace_rate

    eig = None
    if iso_rate is None:
        if symmetric:
            lam, V = np.linalg.eigh(A)
            eig = (lam.astype(complex), V.astype(complex), V.T.astype(complex))
        else:
            lam, V = np.linalg.eig(A)
            sv = np.linalg.svd(V, compute_uv=False)
            if sv[-1] > 0 and sv[0] / sv[-1] < _EIG_COND_LIMIT:
                Vinv = np.linalg.inv(V)
                recon = (V * lam) @ Vinv
                if np.linalg.norm(recon.real - A, 2) <= 1e-10 * max(norm_A, 1.0):
                    eig = (lam, V, Vinv)
            # eig stays None for defective A; sampling falls back to a loop

    return OuModel(
        dim=d,
        A=A,
        Sigma=Sigma,
        a=a,
        C_A=ca,
        Sigma_inf=Sigma_inf,
        ca_is_estimate=ca_is_estimate,
        _Q=Q,
        _Q_inv=np.linalg.inv(Q),
        _L_Q=np.linalg.cholesky(Q),
        _L_inf=np.linalg.cholesky(Sigma_inf),
        _iso_rate=iso_rate,
        _eig=eig,
        _t_min=1e-6 / max(norm_A, 1e-300),
    )


def estimate_CA(model: OuModel, t_grid_size: int = 200) -> float:
    """Max over a refined log t-grid of ||e^{-At}|| e^{at}, clamped at 1.

    This is a lower estimate of the true C_A: the supremum is only probed
    on a finite grid (it converges from below under grid refinement, and
    is unbounded for matrices whose abscissa eigenvalue is defective).
    """
    return _estimate_ca(model.A, model.a, t_grid_size)


def mat_exp_neg(model: OuModel, t: float) -> np.ndarray:
    """Propagator e^{-At} for t >= 0; exact identity at t = 0."""
    if t < 0:
        raise NonPositiveTime("t must be >= 0")
    if t == 0.0:
        return np.eye(model.dim)
    if model.a * t > _UNDERFLOW_AT:
        return np.zeros((model.dim, model.dim))
    return scipy.linalg.expm(-model.A * t)


def cov_t(model: OuModel, t: float) -> np.ndarray:
    """Transition covariance Sigma_t; symmetric positive definite.

    Uses the algebraic identity Sigma_inf - e^{-At} Sigma_inf e^{-A^T t};
    below the small-time threshold this cancels catastrophically, so the
    second-order expansion t Q + t^2/2 (-A Q - Q A^T) is returned instead
    (relative error O(t^2 ||A||^2)).
    """
    if t <= 0:
        raise NonPositiveTime("t must be > 0")
    if t < model._t_min:
        Q = model._Q
        corr = -model.A @ Q - Q @ model.A.T
        S = t * Q + 0.5 * t * t * corr
    else:
        E = mat_exp_neg(model, t)
        S = model.Sigma_inf - E @ model.Sigma_inf @ E.T
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class StateWeightSample:
    """One exact transition draw and its score row vector.

    x_s is e^{-As}x plus a centered Gaussian with covariance Sigma_s;
    u_tilde is e^{as} (x_s - e^{-As}x)^T Sigma_s^{-1} e^{-As} computed from
    the same Gaussian increment.
    """

    x_s: np.ndarray
    u_tilde: np.ndarray
    s: float


def _propagator_pair_loop(model: OuModel, s: np.ndarray):
    """Per-sample expm fallback for defective drift matrices."""
    d = model.dim
    aI = model.a * np.eye(d)
    E = np.empty((len(s), d, d))
    E_shift = np.empty((len(s), d, d))
    for i, si in enumerate(s):
        E[i] = scipy.linalg.expm(-model.A * si)
        E_shift[i] = scipy.linalg.expm((aI - model.A) * si)  # = e^{as} e^{-As}
    return E, E_shift


def _propagator_pair(model: OuModel, s: np.ndarray):
    """Batched (e^{-As}, e^{as} e^{-As}) for a vector of times s."""
    lam, V, Vinv = model._eig
    phase = np.exp(-lam[None, :] * s[:, None])              # decaying
    phase_shift = np.exp((model.a - lam)[None, :] * s[:, None])  # |.| <= 1
    E = ((V[None, :, :] * phase[:, None, :]) @ Vinv).real
    E_shift = ((V[None, :, :] * phase_shift[:, None, :]) @ Vinv).real
    return E, E_shift


def _sample_batch(model: OuModel, x: np.ndarray, s: np.ndarray, rng):
    """Draw states and score rows at times s (all from the same start x).

    Consumes exactly len(s) * d standard normals from rng.  Returns
    (X, U) with shapes (m, d): X[i] ~ N(e^{-A s_i} x, Sigma_{s_i}) and
    U[i] the matching u_tilde row.
    """
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float).reshape(model.dim)
    m, d = len(s), model.dim

    if model._iso_rate is not None:
        # A = a I: Sigma_s = c(s) Q with c = (1 - e^{-2as}) / (2a), and the
        # e^{as} e^{-as} factors cancel exactly in u_tilde.
        rate = model._iso_rate
        decay = np.exp(-rate * s)
        c = -np.expm1(-2.0 * rate * s) / (2.0 * rate)
        xi = rng.standard_normal((m, d))
        G = np.sqrt(c)[:, None] * (xi @ model._L_Q.T)
        X = decay[:, None] * x[None, :] + G
        U = (G @ model._Q_inv) / c[:, None]
        return X, U

    if model._eig is not None:
        E, E_shift = _propagator_pair(model, s)
    else:
        E, E_shift = _propagator_pair_loop(model, s)

    Sinf = model.Sigma_inf
    cov = Sinf[None, :, :] - E @ Sinf @ E.transpose(0, 2, 1)
    small = s < model._t_min
    if small.any():
        Q = model._Q
        corr = -model.A @ Q - Q @ model.A.T
        ss = s[small]
        cov[small] = ss[:, None, None] * Q + 0.5 * (ss**2)[:, None, None] * corr
    cov = 0.5 * (cov + cov.transpose(0, 2, 1))

    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(
            "transition covariance numerically indefinite"
        ) from exc

    xi = rng.standard_normal((m, d))
    G = (L @ xi[:, :, None])[:, :, 0]
    X = np.einsum("mij,j->mi", E, x) + G
    y = np.linalg.solve(cov, G[:, :, None])[:, :, 0]
    U = np.einsum("mi,mij->mj", y, E_shift)
    return X, U


def sample_state_and_weight(model: OuModel, x, s: float, rng) -> StateWeightSample:
    """One exact transition of duration s > 0 from x, with its score row.

    Deterministic given the rng state; consumes d standard normals.
    """
    if s <= 0:
        raise NonPositiveTime("s must be > 0")
    X, U = _sample_batch(model, np.asarray(x, dtype=float), np.array([s]), rng)
    return StateWeightSample(x_s=X[0], u_tilde=U[0], s=float(s))
