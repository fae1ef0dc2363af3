"""Monte-Carlo Picard iteration on the grid.

One single-sample estimator draw at node z for a candidate gradient phi is

    R^z(phi) = (sqrt(pi)/theta) sqrt(G) e^{-(a/theta - 1) G}
               u_tilde(G/theta) f(X^z_{G/theta}, phi(X^z_{G/theta}) Sigma),

with G ~ Gamma(1/2, 1) drawn first and the state increment second, both
from the caller's stream.  A node update averages M_z independent draws
and projects the mean onto the centered Euclidean ball of radius B
(identity when B = inf).  The Picard sweep is Jacobi-style: every node of
iterate n+1 reads the interpolation of the frozen iterate n.

Randomness is organized as one Philox substream per (seed, iteration,
node), drawn vectorized within the node (time variates first, then state
increments).  Distinct keys make the draws independent across iterations
and nodes, and node-keyed streams make any parallel schedule bitwise
identical to the sequential one.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from .errors import ConfigError
from .grid import Grid, GridFunction, interpolate_many, zero_grid_function
from .ou import OuModel, _sample_batch
from .randomizer import RandomizerConfig, _draw_time_batch
from .streams import substream
from .weights import WeightFunction


@dataclass(frozen=True)
class Driver:
    """Nonlinearity f(x, z) with declared Lipschitz constants.

    f must be vectorized: given x of shape (m, d) and z of shape (m, d)
    (rows are the 1 x d second argument) it returns shape (m,).  The
    exact_* hooks are optional references for builtin test problems.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    K_fx: float
    K_fz: float
    label: str = "driver"
    exact_u: Callable | None = None
    exact_v: Callable | None = None
    exact_lambda: float | None = None

    def __call__(self, x, z):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        zb = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.asarray(self.f(xb, zb), dtype=float).reshape(xb.shape[0])
        return float(out[0]) if single else out


def spot_check_lipschitz_z(
    driver: Driver,
    dim: int,
    rng,
    n_pairs: int = 256,
    radius: float = 4.0,
    slack: float = 1.05,
) -> bool:
    """Soft validation of |f(x,z) - f(x,z')| <= K_fz ||z - z'|| on random pairs.

    Returns True when every sampled ratio is within the declared constant
    times the slack; otherwise warns and returns False.
    """
    x = rng.uniform(-radius, radius, size=(n_pairs, dim))
    z1 = rng.uniform(-radius, radius, size=(n_pairs, dim))
    z2 = rng.uniform(-radius, radius, size=(n_pairs, dim))
    num = np.abs(driver(x, z1) - driver(x, z2))
    den = np.linalg.norm(z1 - z2, axis=1)
    worst = float((num / np.maximum(den, 1e-300)).max())
    if worst > driver.K_fz * slack:
        warnings.warn(
            f"driver {driver.label!r}: observed z-Lipschitz ratio {worst:.4g} "
            f"exceeds declared K_fz = {driver.K_fz} (+5% slack)",
            stacklevel=2,
        )
        return False
    return True


@dataclass(frozen=True)
class ConstantSamples:
    """M_z = m at every node."""

    m: int

    def counts(self, grid: Grid) -> np.ndarray:
        if self.m < 1:
            raise ConfigError("sample count must be >= 1")
        return np.full(grid.n_nodes, self.m, dtype=np.int64)


@dataclass(frozen=True)
class WeightedSamples:
    """M_z = ceil(m_tilde (1 + |z|)^2 / rho(z)^2), floored at 1."""

    m_tilde: int
    rho: WeightFunction

    def counts(self, grid: Grid) -> np.ndarray:
        if self.m_tilde < 1:
            raise ConfigError("m_tilde must be >= 1")
        z = grid.coordinates
        r = np.linalg.norm(z, axis=1)
        raw = self.m_tilde * (1.0 + r) ** 2 / np.asarray(self.rho(z)) ** 2
        return np.maximum(np.ceil(raw).astype(np.int64), 1)


@dataclass(frozen=True)
class SchemeConfig:
    """All scheme knobs.

    B is the truncation radius (inf disables truncation, the practical
    default; 0 forces the zero map).  workers > 1 runs node updates on a
    thread pool; results are bitwise independent of the schedule.
    common_random_numbers reuses the iteration-0 streams at every Picard
    step; it is experimental and off by default.
    """

    theta: float
    n_iter: int
    sample_policy: ConstantSamples | WeightedSamples
    seed: int
    B: float = math.inf
    workers: int = 1
    theta_soft: bool = False
    common_random_numbers: bool = False
    stop_tol: float | None = None
    validate_driver: bool = True

    def __post_init__(self):
        if self.n_iter < 1:
            raise ConfigError("n_iter must be >= 1")
        if self.B < 0:
            raise ConfigError("truncation radius B must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass(frozen=True)
class PicardState:
    """Snapshot of one Picard iterate."""

    iterate: GridFunction
    iteration_index: int
    per_node_sample_counts: np.ndarray
    rng_root: int


@dataclass
class IterationRecord:
    n: int
    wall_time_s: float
    sup_err: dict[int, float] = field(default_factory=dict)   # r -> sup error
    mean_err: dict[int, float] = field(default_factory=dict)  # r -> mean error


@dataclass
class RunReport:
    """Per-iteration error and timing records for one Picard run."""

    records: list[IterationRecord] = field(default_factory=list)
    early_stop_n: int | None = None
    seed: int = 0

    def iteration_rows(self):
        """Rows (n, sup_err_r0, sup_err_r1, sup_err_r2, mean_err, wall_time_s)."""
        rows = []
        for rec in self.records:
            rows.append(
                (
                    rec.n,
                    rec.sup_err.get(0),
                    rec.sup_err.get(1),
                    rec.sup_err.get(2),
                    rec.mean_err.get(1, rec.mean_err.get(0)),
                    rec.wall_time_s,
                )
            )
        return rows


def _truncate_ball(row: np.ndarray, B: float) -> np.ndarray:
    """Euclidean projection of a row vector onto the closed ball B(0, B)."""
    if not math.isfinite(B):
        return row
    if B == 0.0:
        return np.zeros_like(row)
    nrm = float(np.linalg.norm(row))
    return row if nrm <= B else row * (B / nrm)


def _sample_R_batch(model, rcfg, driver, z, phi, m, rng):
    """m independent single-sample estimator draws; returns (m, d) rows."""
    g, s, w = _draw_time_batch(rcfg, rng, m)
    X, U = _sample_batch(model, z, s, rng)
    Z = phi(X) @ model.Sigma
    vals = driver(X, Z)
    return (w * vals)[:, None] * U


def sample_R(model: OuModel, rcfg: RandomizerConfig, driver: Driver, z, phi, rng):
    """One estimator draw R^z(phi); returns a (d,) row vector.

    Consumes one standard normal for the randomized time, then d for the
    state increment, in that order, from rng.
    """
    return _sample_R_batch(
        model, rcfg, driver, np.asarray(z, dtype=float), phi, 1, rng
    )[0]


def node_update(
    model: OuModel,
    rcfg: RandomizerConfig,
    driver: Driver,
    z,
    phi,
    m_z: int,
    B: float,
    rng,
) -> np.ndarray:
    """Empirical mean of m_z estimator draws, projected onto the B-ball."""
    if m_z < 1:
        raise ConfigError("m_z must be >= 1")
    R = _sample_R_batch(model, rcfg, driver, np.asarray(z, dtype=float), phi, m_z, rng)
    return _truncate_ball(R.mean(axis=0), B)


def mc_node_stats(
    model: OuModel, rcfg: RandomizerConfig, driver: Driver, z, phi, m: int, rng
):
    """Untruncated node mean and its componentwise standard error."""
    R = _sample_R_batch(model, rcfg, driver, np.asarray(z, dtype=float), phi, m, rng)
    return R.mean(axis=0), R.std(axis=0, ddof=1) / math.sqrt(m)


def _interior_errors(gf: GridFunction, exact_v, r: int):
    mi = gf.grid.multi_indices
    mask = np.all(np.abs(mi) <= gf.grid.n_tilde - r, axis=1)
    pts = gf.grid.coordinates[mask]
    err = np.linalg.norm(gf.values[mask] - np.atleast_2d(exact_v(pts)), axis=1)
    return float(err.max()), float(err.mean())


def picard_run(
    model: OuModel,
    grid: Grid,
    driver: Driver,
    cfg: SchemeConfig,
    exact_v=None,
):
    """Run the scheme: v^0 = 0, then n_iter Jacobi sweeps of node updates.

    Every node of iteration n+1 averages fresh draws of R^z(P v^n) from
    the substream keyed by (seed, n+1, node index).  Returns the full
    iterate history and a RunReport; when exact_v is supplied the report
    carries interior sup/mean errors at margins r in {0, 1, 2}.
    """
    counts = cfg.sample_policy.counts(grid)
    if counts.min() < 1:
        raise ConfigError("every node needs at least one sample")
    rcfg = RandomizerConfig(theta=cfg.theta, a=model.a, allow_soft=cfg.theta_soft)
    if cfg.validate_driver:
        spot_check_lipschitz_z(driver, grid.dim, substream(cfg.seed, 0xD5C))

    coords = grid.coordinates
    history = [
        PicardState(
            iterate=zero_grid_function(grid),
            iteration_index=0,
            per_node_sample_counts=counts,
            rng_root=cfg.seed,
        )
    ]
    report = RunReport(seed=cfg.seed)
    margins = [r for r in (0, 1, 2) if r < grid.n_tilde]

    for n in range(cfg.n_iter):
        tic = time.perf_counter()
        prev = history[-1].iterate
        phi = lambda X, _gf=prev: interpolate_many(_gf, X)  # noqa: E731
        new_values = np.empty((grid.n_nodes, grid.dim))
        stream_iter = 0 if cfg.common_random_numbers else n + 1

        def update_one(i: int) -> None:
            rng = substream(cfg.seed, stream_iter, i)
            new_values[i] = node_update(
                model, rcfg, driver, coords[i], phi, int(counts[i]), cfg.B, rng
            )

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                list(pool.map(update_one, range(grid.n_nodes)))
        else:
            for i in range(grid.n_nodes):
                update_one(i)

        iterate = GridFunction(grid, new_values)
        history.append(
            PicardState(
                iterate=iterate,
                iteration_index=n + 1,
                per_node_sample_counts=counts,
                rng_root=cfg.seed,
            )
        )

        rec = IterationRecord(n=n + 1, wall_time_s=time.perf_counter() - tic)
        if exact_v is not None:
            for r in margins:
                sup_e, mean_e = _interior_errors(iterate, exact_v, r)
                rec.sup_err[r] = sup_e
                rec.mean_err[r] = mean_e
        report.records.append(rec)

        if cfg.stop_tol is not None and report.early_stop_n is None:
            dist = float(
                np.linalg.norm(iterate.values - prev.values, axis=1).max()
            )
            if dist < cfg.stop_tol:
                report.early_stop_n = n + 1  # reported, never silently applied

    return history, report
