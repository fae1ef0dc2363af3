"""Gamma-randomized time horizon and its scalar importance weight.

A damped time integral is turned into a single-draw expectation: for
integrable phi and theta in (0, a),

    int_0^T phi(s) e^{-as} ds
        = E[ 1_{G <= T theta} phi(G/theta) e^{-(a/theta - 1) G}
             (sqrt(pi)/theta) sqrt(G) ],

where G ~ Gamma(1/2, 1).  The sampler draws G = N^2 / 2 from a single
standard normal N, which has exactly the Gamma(1/2, 1) law and keeps the
draw reproducible across platforms given the normal source.

theta >= a is statistically delicate (the weight's exponent flips sign);
a soft mode permits it with an explicit warning because moderate
overshoots behave fine in practice, but nothing is asserted about the
estimator variance there.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .errors import ConfigError, QuadratureFailure

_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class RandomizerConfig:
    """Time-randomization rate theta paired with the model's abscissa a.

    Strict mode (default) enforces 0 < theta < a.  With allow_soft=True,
    theta >= a is permitted and flagged via exceeds_rate.
    """

    theta: float
    a: float
    allow_soft: bool = False

    def __post_init__(self):
        if not (self.theta > 0.0):
            raise ConfigError("theta must be > 0")
        if not (self.a > 0.0):
            raise ConfigError("a must be > 0")
        if self.theta >= self.a:
            if not self.allow_soft:
                raise ConfigError(
                    f"theta = {self.theta} >= a = {self.a}; required theta in (0, a) "
                    "(pass allow_soft=True to override)"
                )
            warnings.warn(
                f"theta = {self.theta} >= a = {self.a}: variance of the randomized "
                "estimator is not guaranteed finite",
                stacklevel=2,
            )

    @property
    def exceeds_rate(self) -> bool:
        return self.theta >= self.a


def default_theta(a: float) -> float:
    """Default randomization rate 0.9 a."""
    return 0.9 * a


@dataclass(frozen=True)
class TimeDraw:
    """One randomized time: Gamma(1/2,1) variate g, time s = g/theta, and
    the positive multiplier (sqrt(pi)/theta) sqrt(g) e^{-(a/theta-1) g}."""

    g: float
    s: float
    weight: float


def _weight(cfg: RandomizerConfig, g):
    return (_SQRT_PI / cfg.theta) * np.sqrt(g) * np.exp(-(cfg.a / cfg.theta - 1.0) * g)


def _draw_g_batch(cfg: RandomizerConfig, rng, m: int) -> np.ndarray:
    g = 0.5 * rng.standard_normal(m) ** 2
    # g = 0 has probability zero but can occur in floating point; resample
    while True:
        zero = g == 0.0
        if not zero.any():
            return g
        g[zero] = 0.5 * rng.standard_normal(int(zero.sum())) ** 2


def _draw_time_batch(cfg: RandomizerConfig, rng, m: int):
    """Vectorized draws; returns (g, s, weight) arrays of length m."""
    g = _draw_g_batch(cfg, rng, m)
    return g, g / cfg.theta, _weight(cfg, g)


def draw_time(cfg: RandomizerConfig, rng) -> TimeDraw:
    """Draw one randomized time (one standard normal consumed, G first)."""
    g, s, w = _draw_time_batch(cfg, rng, 1)
    return TimeDraw(g=float(g[0]), s=float(s[0]), weight=float(w[0]))


def expectation_identity_check(
    cfg: RandomizerConfig,
    phi,
    T: float,
    n_mc: int,
    rng=None,
):
    """Self-test of the randomization identity; returns (mc, quadrature).

    The Monte-Carlo side averages 1_{G <= T theta} phi(G/theta) * weight
    over n_mc draws; the deterministic side integrates phi(s) e^{-as} on
    [0, T] adaptively.  phi must accept numpy arrays.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    g, s, w = _draw_time_batch(cfg, rng, n_mc)
    inside = g <= T * cfg.theta if math.isfinite(T) else np.ones_like(g, dtype=bool)
    mc = float(np.mean(np.where(inside, np.asarray(phi(s)) * w, 0.0)))

    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.integrate.IntegrationWarning)
        try:
            val, abserr = scipy.integrate.quad(
                lambda t: phi(t) * math.exp(-cfg.a * t),
                0.0,
                T if math.isfinite(T) else np.inf,
                limit=200,
            )
        except scipy.integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    if abserr > max(1e-8, 1e-6 * abs(val)):
        raise QuadratureFailure(f"quadrature error estimate {abserr:.2e} too large")
    return mc, float(val)
