"""Deterministic quadrature evaluation of the fixed-point map in d = 1.

For a candidate gradient w, the infinite-horizon map is

    Phi_inf(w)(x) = int_0^inf e^{-as} E[ u_tilde(s) f(X^x_s, w(X^x_s) Sigma) ] ds,

where X^x_s ~ N(e^{-as} x, Sigma_s) and, in one dimension,
e^{-as} u_tilde(s) = (X_s - e^{-as} x) / Sigma_s.  The inner expectation
is Gauss-Hermite; the outer integral uses the substitution
tau = 1 - e^{-as} (so e^{-as} ds = d tau / a) with composite
Gauss-Legendre on geometrically graded panels toward tau = 0, where the
integrand has an integrable square-root-type kink inherited from the
1/sqrt(s) score bound.

This module exists to validate the Monte-Carlo estimator and to measure
fixed-point residuals without sampling noise; it is scaffolding, not the
product, hence the d = 1 restriction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from .errors import DimTooLarge, NonConvergence
from .ou import OuModel

_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class QuadSpec:
    """Quadrature resolution for the nested evaluation.

    time_panels geometric panels (ratio panel_ratio toward tau = 0), each
    with time_points Gauss-Legendre nodes; space_points Gauss-Hermite
    nodes for the inner Gaussian expectation; T = inf drops the transport
    term, finite T keeps it.
    """

    time_panels: int = 14
    time_points: int = 16
    space_points: int = 64
    T: float = math.inf
    panel_ratio: float = 3.0

    def __post_init__(self):
        if self.time_points < 4 or self.space_points < 4:
            raise ValueError("quadrature point counts must be >= 4")
        if self.time_panels < 1:
            raise ValueError("time_panels must be >= 1")

    def refined(self) -> "QuadSpec":
        return replace(
            self,
            time_panels=self.time_panels + 4,
            time_points=2 * self.time_points,
            space_points=2 * self.space_points,
        )


def _tau_nodes(spec: QuadSpec, a: float):
    """Composite GL nodes/weights on (0, tau_max), graded toward 0."""
    tau_max = 1.0 if math.isinf(spec.T) else -math.expm1(-a * spec.T)
    edges = [tau_max * spec.panel_ratio ** -(spec.time_panels - k) for k in
             range(spec.time_panels)] + [tau_max]
    edges[0] = 0.0
    g, w = leggauss(spec.time_points)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (hi - lo) * g + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _phi_quad(model: OuModel, driver, w, x: float, spec: QuadSpec) -> float:
    a = float(model.A[0, 0])
    sigma = float(model.Sigma[0, 0])
    q = sigma * sigma
    h, hw = hermgauss(spec.space_points)
    xi = math.sqrt(2.0) * h          # standard normal nodes
    gw = hw / _SQRT_PI               # standard normal weights

    tau, tw = _tau_nodes(spec, a)
    s = -np.log1p(-tau) / a
    decay = 1.0 - tau                # = e^{-as}
    var = -np.expm1(-2.0 * a * s) * q / (2.0 * a)
    std = np.sqrt(var)

    mean = decay * x
    # nodes: (n_s, n_xi)
    X = mean[:, None] + std[:, None] * xi[None, :]
    W = np.atleast_2d(w(X.reshape(-1, 1))).reshape(X.shape)
    F = driver(
        X.reshape(-1, 1), (W * sigma).reshape(-1, 1)
    ).reshape(X.shape)
    # E[u_tilde f] e^{-as} = E[(X - m) f] / Sigma_s, all scalars in d = 1
    inner = (std[:, None] * xi[None, :] * F) @ gw / var
    total = float(tw @ inner / a)

    if math.isfinite(spec.T):
        sT = spec.T
        varT = -math.expm1(-2.0 * a * sT) * q / (2.0 * a)
        XT = math.exp(-a * sT) * x + math.sqrt(varT) * xi
        WT = np.atleast_2d(w(XT.reshape(-1, 1))).reshape(-1)
        total += math.exp(-a * sT) * float(gw @ WT)
    return total


def phi_infinity(
    model: OuModel,
    driver,
    w,
    x: float,
    spec: QuadSpec = QuadSpec(),
    check_convergence: bool = False,
    rtol: float = 1e-4,
) -> float:
    """Evaluate Phi_T(w)(x) by nested quadrature (T from spec, default inf).

    w must be vectorized: (m, 1) points -> (m, 1) rows.  With
    check_convergence the spec is refined once and NonConvergence is
    raised when the two evaluations disagree beyond rtol (absolute for
    small values); the refined value is returned.
    """
    if model.dim != 1:
        raise DimTooLarge("the quadrature oracle is implemented for d = 1 only")
    value = _phi_quad(model, driver, w, float(x), spec)
    if not check_convergence:
        return value
    refined = _phi_quad(model, driver, w, float(x), spec.refined())
    if abs(refined - value) > max(rtol, rtol * abs(refined)):
        raise NonConvergence(
            f"refinement moved Phi(w)({x}) by {abs(refined - value):.3e}"
        )
    return refined


def fixed_point_residual(
    model: OuModel, driver, w, x_list, spec: QuadSpec = QuadSpec()
) -> float:
    """max over the probe set of |Phi_inf(w)(x) - w(x)|."""
    res = 0.0
    for x in x_list:
        wx = float(np.atleast_2d(w(np.array([[float(x)]])))[0, 0])
        res = max(res, abs(phi_infinity(model, driver, w, float(x), spec) - wx))
    return res
