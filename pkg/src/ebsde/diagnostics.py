"""Diagnostics around the solver: contraction bounds, ergodic cost, value
reconstruction, and node-error metrics.

Contraction bounds for the infinite-horizon fixed-point map come in two
branches keyed by the weight family:

    exponential rho(x) = e^{alpha |x|} (requires C_A = 1):
        kappa <= K_fz ||Sigma|| sqrt(d)
                 (2 e^{alpha^2 ||Q|| / (2 a^2)} F(alpha ||Q||^{1/2} / a))^{d/2}
                 (c1 / a + sqrt(pi) c2 / sqrt(a))

    polynomial rho(x) = (1 + alpha |x|)^beta (any C_A >= 1):
        kappa <= C_A K_fz ||Sigma|| sqrt(d)
                 E[(C_A + alpha C_A (||Q|| / 2a)^{1/2} |Y|)^{2 beta}]^{1/2}
                 (c1 / a + sqrt(pi) c2 / sqrt(a)),   Y ~ N(0, I_d),

with Q = Sigma Sigma^T, F the standard normal CDF, and (c1, c2) any pair
satisfying ||Sigma_s^{-1}||^{1/2} <= c1 + c2 / sqrt(s) for all s > 0.  The
pair is fitted by least squares on a log time-ladder and then inflated so
the inequality holds everywhere on the ladder.

The ergodic cost is the invariant-measure average of the driver at the
candidate gradient,

    lambda = int f(x, v(x) Sigma) N(0, Sigma_inf)(dx),

and the value function is recovered from its gradient as the line
integral u(x) = int_0^1 v(t x) x dt, normalized by u(0) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.optimize
import scipy.stats
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from .errors import BranchMismatch, MarginTooLarge, QuadratureDimTooLarge
from .grid import GridFunction
from .ou import OuModel, cov_t
from .streams import substream
from .weights import EXPONENTIAL, POLYNOMIAL, WeightFunction

_SQRT_PI = math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# contraction constants
# ---------------------------------------------------------------------------


def fit_c1_c2(model: OuModel, n_ladder: int = 200) -> tuple[float, float]:
    """Fit (c1, c2) with ||Sigma_s^{-1}||^{1/2} <= c1 + c2/sqrt(s) on a ladder.

    Least squares on the basis {1, s^{-1/2}} over a log ladder
    s in [1e-6, 50/a], clipped to nonnegative coefficients and inflated by
    the worst observed violation ratio so the bound holds on the ladder.
    """
    s = np.geomspace(1e-6, 50.0 / model.a, n_ladder)
    y = np.array([np.linalg.norm(np.linalg.inv(cov_t(model, si)), 2) ** 0.5 for si in s])
    basis = np.column_stack([np.ones_like(s), 1.0 / np.sqrt(s)])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    c1, c2 = float(max(coef[0], 0.0)), float(max(coef[1], 0.0))
    pred = c1 + c2 / np.sqrt(s)
    ratio = float((y / pred).max())
    if ratio > 1.0:
        c1, c2 = c1 * ratio, c2 * ratio
    return c1, c2


@dataclass(frozen=True)
class KappaReport:
    """Branch-specific upper bound on the contraction modulus."""

    branch: str                 # "exponential" or "polynomial"
    alpha: float
    beta: float
    kappa_upper: float
    contractive: bool
    inputs: dict
    c1: float
    c2: float
    ca_is_estimate: bool

    def __post_init__(self):
        if self.kappa_upper < 0:
            raise ValueError("kappa_upper must be nonnegative")


def _time_integral_factor(a: float, c1: float, c2: float) -> float:
    # int_0^inf e^{-as} (c1 + c2 / sqrt(s)) ds
    return c1 / a + _SQRT_PI * c2 / math.sqrt(a)


def kappa_upper_bound(
    model: OuModel, driver, weight: WeightFunction, n_ladder: int = 200
) -> KappaReport:
    """Upper bound for the contraction modulus under the given weight.

    The exponential branch demands C_A = 1 (within 1e-6) and raises
    BranchMismatch otherwise; the polynomial branch accepts any C_A but is
    only a valid bound when C_A itself is valid: when the model's C_A is
    a grid estimate the reported kappa may be underestimated, which the
    report flags via ca_is_estimate.
    """
    a, d = model.a, model.dim
    sigma_norm = float(np.linalg.norm(model.Sigma, 2))
    q_norm = float(np.linalg.norm(model._Q, 2))
    c1, c2 = fit_c1_c2(model, n_ladder)
    tail = _time_integral_factor(a, c1, c2)
    alpha, beta = weight.alpha, weight.beta

    if weight.kind == EXPONENTIAL:
        if model.C_A > 1.0 + 1e-6:
            raise BranchMismatch(
                f"exponential weight requires C_A = 1, model has C_A = {model.C_A:.6g}"
            )
        gauss = 2.0 * math.exp(alpha**2 * q_norm / (2.0 * a**2)) * scipy.stats.norm.cdf(
            alpha * math.sqrt(q_norm) / a
        )
        kappa = driver.K_fz * sigma_norm * math.sqrt(d) * gauss ** (d / 2.0) * tail
        branch, beta_out = EXPONENTIAL, math.nan
    else:
        ca = model.C_A
        scale = alpha * ca * math.sqrt(q_norm / (2.0 * a))
        chi = scipy.stats.chi(df=d)
        val, abserr = scipy.integrate.quad(
            lambda r: (ca + scale * r) ** (2.0 * beta) * chi.pdf(r), 0.0, np.inf
        )
        kappa = driver.K_fz * ca * sigma_norm * math.sqrt(d) * math.sqrt(val) * tail
        branch, beta_out = POLYNOMIAL, beta

    return KappaReport(
        branch=branch,
        alpha=alpha,
        beta=beta_out,
        kappa_upper=float(kappa),
        contractive=bool(kappa < 1.0),
        inputs={
            "K_fz": driver.K_fz,
            "sigma_norm": sigma_norm,
            "d": d,
            "a": a,
            "C_A": model.C_A,
        },
        c1=c1,
        c2=c2,
        ca_is_estimate=model.ca_is_estimate,
    )


def isotropic_time_infimum() -> tuple[float, float]:
    """(inf, argmin) of t -> (sqrt(2) + sqrt(pi t)) / sqrt(1 - e^{-t})."""

    def obj(t: float) -> float:
        return (math.sqrt(2.0) + _SQRT_PI * math.sqrt(t)) / math.sqrt(-math.expm1(-t))

    res = scipy.optimize.minimize_scalar(obj, bounds=(1e-8, 50.0), method="bounded")
    return float(res.fun), float(res.x)


def kappa_isotropic_bound(a: float, sigma: float, d: int, K_fz: float, alpha: float) -> float:
    """Closed-form bound for the isotropic model Sigma = sigma I, A = a I:

        kappa <= K_fz sqrt(d/a) (2 e^{alpha^2 sigma^2 / (2 a^2)}
                 F(alpha sigma / a))^{d/2}
                 inf_t (sqrt(2) + sqrt(pi t)) / sqrt(1 - e^{-t}).
    """
    if K_fz == 0.0:
        return 0.0
    gauss = 2.0 * math.exp(alpha**2 * sigma**2 / (2.0 * a**2)) * scipy.stats.norm.cdf(
        alpha * sigma / a
    )
    inf_val, _ = isotropic_time_infimum()
    return K_fz * math.sqrt(d / a) * gauss ** (d / 2.0) * inf_val


# ---------------------------------------------------------------------------
# ergodic cost and value reconstruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCMethod:
    """Monte-Carlo averaging over the invariant Gaussian."""

    m: int = 1_000_000
    seed: int = 0


@dataclass(frozen=True)
class QuadratureMethod:
    """Tensor Gauss-Hermite over the invariant Gaussian (d <= 2)."""

    points: int = 64


@dataclass(frozen=True)
class LambdaEstimate:
    value: float
    stderr: float
    method: str


def _invariant_gh_nodes(model: OuModel, points: int):
    """Tensor GH nodes/weights for expectations against N(0, Sigma_inf)."""
    h, w = hermgauss(points)
    d = model.dim
    if d == 1:
        U = (math.sqrt(2.0) * h)[:, None]
        W = w / _SQRT_PI
    else:
        H1, H2 = np.meshgrid(h, h, indexing="ij")
        U = math.sqrt(2.0) * np.column_stack([H1.ravel(), H2.ravel()])
        W1, W2 = np.meshgrid(w, w, indexing="ij")
        W = (W1 * W2).ravel() / math.pi
    X = U @ model._L_inf.T
    return X, W


def lambda_estimate(model: OuModel, driver, v, method) -> LambdaEstimate:
    """Invariant-measure average of f(x, v(x) Sigma).

    v must be vectorized: (m, d) points -> (m, d) rows.  The Monte-Carlo
    method reports the empirical standard error; quadrature reports 0.
    """
    if isinstance(method, MCMethod):
        rng = substream(method.seed, 0x1A)
        xi = rng.standard_normal((method.m, model.dim)) @ model._L_inf.T
        vals = driver(xi, np.atleast_2d(v(xi)) @ model.Sigma)
        return LambdaEstimate(
            value=float(np.mean(vals)),
            stderr=float(np.std(vals, ddof=1) / math.sqrt(method.m)),
            method="mc",
        )
    if isinstance(method, QuadratureMethod):
        if model.dim > 2:
            raise QuadratureDimTooLarge("tensor quadrature limited to d <= 2")
        X, W = _invariant_gh_nodes(model, method.points)
        vals = driver(X, np.atleast_2d(v(X)) @ model.Sigma)
        return LambdaEstimate(value=float(W @ vals), stderr=0.0, method="quadrature")
    raise TypeError(f"unknown lambda method {method!r}")


def reconstruct_u(v, x, quad_points: int = 64) -> float:
    """Line integral u(x) = int_0^1 v(t x) x dt (so u(0) = 0) by
    Gauss-Legendre with quad_points nodes."""
    if quad_points < 2:
        raise ValueError("quad_points must be >= 2")
    x = np.asarray(x, dtype=float).reshape(-1)
    if not x.any():
        return 0.0
    t, w = leggauss(quad_points)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    rows = np.atleast_2d(v(t[:, None] * x[None, :]))
    return float(w @ (rows @ x))


# ---------------------------------------------------------------------------
# error metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorRecord:
    """Sup and mean nodewise error over the margin-r interior sub-lattice."""

    n: int
    r: int
    sup_err: float
    mean_err: float

    def __post_init__(self):
        if not (self.sup_err >= self.mean_err >= 0.0):
            raise ValueError("expected sup_err >= mean_err >= 0")


def error_metrics(iterate: GridFunction, exact_v, r: int, n: int = 0) -> ErrorRecord:
    """Nodewise errors ||v_M(z) - v(z)|| over indices |i_k| <= N~ - r."""
    grid = iterate.grid
    if r < 0 or r >= grid.n_tilde:
        raise MarginTooLarge(f"margin r = {r} must satisfy 0 <= r < {grid.n_tilde}")
    mask = np.all(np.abs(grid.multi_indices) <= grid.n_tilde - r, axis=1)
    pts = grid.coordinates[mask]
    err = np.linalg.norm(iterate.values[mask] - np.atleast_2d(exact_v(pts)), axis=1)
    return ErrorRecord(n=n, r=r, sup_err=float(err.max()), mean_err=float(err.mean()))
