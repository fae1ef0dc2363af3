"""Command-line harness: config ingestion, experiment runs, CSV emission.

Subcommands:

    solve <config.toml>            one Picard run with diagnostics
    sweep <config.toml> --param p --values v1,v2,...
    oracle <config.toml> --probe x1,x2,...
    kappa <config.toml>            contraction-bound report only
    selftest                       quick internal consistency checks

Configs are TOML with [model], [driver], [scheme] and [outputs] blocks;
unknown keys are rejected.  ``--set section.key=value`` overrides file
values from the command line.  Every run echoes its resolved values into
the output directory for provenance.  All outputs are CSV with a one-line
header and floats at 17 significant digits.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import importlib
import math
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .diagnostics import (
    MCMethod,
    QuadratureMethod,
    kappa_isotropic_bound,
    kappa_upper_bound,
    lambda_estimate,
    reconstruct_u,
)
from .errors import ConfigError, EbsdeError
from .grid import Grid, hat_basis, interpolate_many, save_grid_function
from .oracle import QuadSpec, phi_infinity
from .ou import build_model
from .picard import ConstantSamples, SchemeConfig, WeightedSamples, picard_run
from .problems import (
    builtin_driver_benchmark,
    builtin_driver_zero,
    pde_identity_residual,
)
from .randomizer import RandomizerConfig, expectation_identity_check
from .streams import substream
from .weights import WeightFunction

_SCHEMA = {
    "model": {"d", "a", "sigma", "a_file", "sigma_file", "c_a"},
    "driver": {"builtin", "gamma", "hook"},
    "scheme": {
        "theta",
        "n_tilde",
        "delta",
        "m",
        "m_tilde",
        "rho",
        "alpha",
        "beta",
        "b",
        "n_iter",
        "seed",
        "workers",
        "theta_soft",
    },
    "outputs": {
        "directory",
        "diagnostics",
        "oracle",
        "snapshots",
        "kappa_alpha",
        "kappa_beta",
    },
}

_DEFAULT_DIAGNOSTICS = ["errors", "lambda", "u_slice", "kappa"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _validate_schema(cfg: dict) -> None:
    for section, keys in cfg.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(keys, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(keys) - _SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    for required in ("model", "driver", "scheme"):
        if required not in cfg:
            raise ConfigError(f"missing config section [{required}]")


def _load_config(path: str, overrides: list[str]) -> dict:
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, raw = item.split("=", 1)
        section, name = key.split(".", 1)
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        cfg.setdefault(section, {})[name] = value
    _validate_schema(cfg)
    return cfg


def _read_matrix(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _build_model_from_config(cfg: dict):
    mc = cfg["model"]
    d = int(mc.get("d", 1))
    if "a_file" in mc:
        A = _read_matrix(mc["a_file"])
        d = A.shape[0]
    else:
        A = float(mc.get("a", 1.0)) * np.eye(d)
    if "sigma_file" in mc:
        Sigma = _read_matrix(mc["sigma_file"])
    else:
        Sigma = float(mc.get("sigma", 1.0)) * np.eye(d)
    return build_model(A, Sigma, C_A=mc.get("c_a"))


def _build_driver_from_config(cfg: dict, model):
    dc = cfg["driver"]
    if "hook" in dc:
        mod_name, _, attr = dc["hook"].partition(":")
        if not attr:
            raise ConfigError("driver hook must look like 'module:callable'")
        fn = getattr(importlib.import_module(mod_name), attr)
        kwargs = {k: v for k, v in dc.items() if k != "hook"}
        return fn(**kwargs)
    builtin = dc.get("builtin", "benchmark")
    if builtin == "benchmark":
        return builtin_driver_benchmark(
            gamma=float(dc.get("gamma", 1.0)), a=model.a, d=model.dim
        )
    if builtin == "zero":
        return builtin_driver_zero(model.dim)
    raise ConfigError(f"unknown builtin driver {builtin!r}")


def _build_scheme_from_config(cfg: dict, model):
    sc = cfg["scheme"]
    grid = Grid(
        dim=model.dim,
        delta=float(sc.get("delta", 0.2)),
        n_tilde=int(sc.get("n_tilde", 10)),
    )
    if "m_tilde" in sc:
        rho = WeightFunction(
            kind=sc.get("rho", "exponential"),
            alpha=float(sc.get("alpha", 1.0)),
            beta=float(sc.get("beta", 1.0)),
        )
        policy = WeightedSamples(m_tilde=int(sc["m_tilde"]), rho=rho)
    else:
        policy = ConstantSamples(m=int(sc.get("m", 10_000)))
    scheme = SchemeConfig(
        theta=float(sc.get("theta", 0.9 * model.a)),
        n_iter=int(sc.get("n_iter", 3)),
        sample_policy=policy,
        seed=int(sc.get("seed", 0)),
        B=float(sc.get("b", math.inf)),
        workers=int(sc.get("workers", 1)),
        theta_soft=bool(sc.get("theta_soft", False)),
    )
    return grid, scheme


def _echo_config(cfg: dict, out_dir: Path) -> None:
    lines = []
    for section in ("model", "driver", "scheme", "outputs"):
        if section not in cfg:
            continue
        lines.append(f"[{section}]")
        for k, v in cfg[section].items():
            if isinstance(v, bool):
                lines.append(f"{k} = {str(v).lower()}")
            elif isinstance(v, (int, float)):
                lines.append(f"{k} = {v}")
            elif isinstance(v, list):
                inner = ", ".join(f'"{s}"' for s in v)
                lines.append(f"{k} = [{inner}]")
            else:
                lines.append(f'{k} = "{v}"')
        lines.append("")
    (out_dir / "config_resolved.toml").write_text("\n".join(lines))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else _fmt(v) for v in row])


def run_solve(cfg: dict, out_dir: Path) -> dict:
    """Execute one configured run; returns a summary dict."""
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out_dir)
    oc = cfg.get("outputs", {})
    diagnostics = oc.get("diagnostics", _DEFAULT_DIAGNOSTICS)

    model = _build_model_from_config(cfg)
    driver = _build_driver_from_config(cfg, model)
    grid, scheme = _build_scheme_from_config(cfg, model)

    tic = time.perf_counter()
    history, report = picard_run(
        model, grid, driver, scheme, exact_v=driver.exact_v
    )
    wall = time.perf_counter() - tic
    final = history[-1].iterate

    if oc.get("snapshots", True):
        for state in history:
            save_grid_function(
                state.iterate, out_dir / f"snapshot_n{state.iteration_index}.csv"
            )

    if "errors" in diagnostics:
        _write_csv(
            out_dir / "report.csv",
            ["n", "sup_err_r0", "sup_err_r1", "sup_err_r2", "mean_err", "wall_time_s"],
            report.iteration_rows(),
        )

    summary = {"wall_time_s": wall, "out_dir": str(out_dir)}
    v_hat = lambda X: interpolate_many(final, X)  # noqa: E731

    if "lambda" in diagnostics:
        if model.dim <= 2:
            lam = lambda_estimate(model, driver, v_hat, QuadratureMethod(points=64))
        else:
            lam = lambda_estimate(
                model, driver, v_hat, MCMethod(m=1_000_000, seed=scheme.seed)
            )
        _write_csv(
            out_dir / "lambda.csv",
            ["method", "value", "stderr"],
            [(lam.method, lam.value, lam.stderr)],
        )
        summary["lambda"] = lam.value
        summary["lambda_se"] = lam.stderr

    if "u_slice" in diagnostics:
        xs = np.linspace(-grid.half_width, grid.half_width, 81)
        rows = []
        for x1 in xs:
            x = np.zeros(grid.dim)
            x[0] = x1
            u_val = reconstruct_u(v_hat, x, quad_points=64)
            v_val = v_hat(x[None, :])[0]
            rows.append((x1, u_val, *v_val))
        _write_csv(
            out_dir / "u_slice.csv",
            ["x", "u", *[f"v{k + 1}" for k in range(grid.dim)]],
            rows,
        )

    if "kappa" in diagnostics:
        alpha = float(oc.get("kappa_alpha", 0.1))
        beta = float(oc.get("kappa_beta", 1.0))
        if model.C_A <= 1.0 + 1e-6:
            weight = WeightFunction(kind="exponential", alpha=alpha)
        else:
            weight = WeightFunction(kind="polynomial", alpha=alpha, beta=beta)
        rep = kappa_upper_bound(model, driver, weight)
        _write_csv(
            out_dir / "kappa.csv",
            [
                "branch",
                "alpha",
                "beta",
                "kappa_upper",
                "contractive",
                "c1",
                "c2",
                "C_A",
                "ca_is_estimate",
            ],
            [
                (
                    rep.branch,
                    rep.alpha,
                    rep.beta,
                    rep.kappa_upper,
                    rep.contractive,
                    rep.c1,
                    rep.c2,
                    model.C_A,
                    rep.ca_is_estimate,
                )
            ],
        )
        summary["kappa_upper"] = rep.kappa_upper

    if cfg.get("outputs", {}).get("oracle", False) and model.dim == 1:
        probes = grid.coordinates[:, 0]
        rows = []
        for x in probes:
            val = phi_infinity(model, driver, v_hat, float(x))
            rows.append((x, val, float(v_hat(np.array([[x]]))[0, 0])))
        _write_csv(out_dir / "oracle.csv", ["x", "phi_infinity", "v_hat"], rows)

    if report.records and report.records[-1].sup_err:
        summary["sup_err_r1"] = report.records[-1].sup_err.get(1)
        summary["mean_err_r1"] = report.records[-1].mean_err.get(1)
    if report.early_stop_n is not None:
        summary["early_stop_n"] = report.early_stop_n
    return summary


_SWEEP_TARGETS = {
    "gamma": ("driver", "gamma"),
    "theta": ("scheme", "theta"),
    "delta": ("scheme", "delta"),
    "m": ("scheme", "m"),
    "n_tilde": ("scheme", "n_tilde"),
    "d": ("model", "d"),
}


def run_sweep(cfg: dict, param: str, values: list[float], out_dir: Path) -> list[dict]:
    """One run_solve per sweep value with per-value derived seeds."""
    if param not in _SWEEP_TARGETS:
        raise ConfigError(
            f"sweep parameter must be one of {sorted(_SWEEP_TARGETS)}, got {param!r}"
        )
    section, key = _SWEEP_TARGETS[param]
    base_seed = int(cfg.get("scheme", {}).get("seed", 0))
    results = []
    rows = []
    for k, value in enumerate(values):
        sub = {s: dict(v) for s, v in cfg.items()}
        cast = int(value) if param in ("m", "n_tilde", "d") else float(value)
        sub.setdefault(section, {})[key] = cast
        derived_seed = int(
            np.random.SeedSequence(entropy=(base_seed, 1000 + k)).generate_state(1)[0]
        )
        sub["scheme"]["seed"] = derived_seed
        sub_dir = out_dir / f"{param}_{value}"
        try:
            summary = run_solve(sub, sub_dir)
        except EbsdeError as exc:
            print(f"sweep point {param}={value} failed: {exc}", file=sys.stderr)
            summary = {"error": str(exc)}
        summary[param] = value
        summary["seed"] = derived_seed
        results.append(summary)
        rows.append(
            (
                param,
                value,
                derived_seed,
                summary.get("sup_err_r1"),
                summary.get("mean_err_r1"),
                summary.get("lambda"),
                summary.get("lambda_se"),
                summary.get("wall_time_s"),
            )
        )
    _write_csv(
        out_dir / "sweep.csv",
        [
            "param",
            "value",
            "seed",
            "sup_err_r1",
            "mean_err_r1",
            "lambda",
            "lambda_se",
            "wall_time_s",
        ],
        rows,
    )
    return results


def run_oracle(cfg: dict, probes: list[float], out_dir: Path) -> float:
    """Fixed-point residual of the exact gradient at the probe points."""
    model = _build_model_from_config(cfg)
    if model.dim != 1:
        raise ConfigError("the oracle subcommand requires d = 1")
    driver = _build_driver_from_config(cfg, model)
    if driver.exact_v is None:
        raise ConfigError("the oracle subcommand needs a driver with an exact gradient")
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = QuadSpec()
    rows = []
    worst = 0.0
    for x in probes:
        val = phi_infinity(model, driver, driver.exact_v, float(x), spec)
        tgt = float(np.atleast_2d(driver.exact_v(np.array([[x]])))[0, 0])
        worst = max(worst, abs(val - tgt))
        rows.append((x, val, tgt, abs(val - tgt)))
    _write_csv(
        out_dir / "oracle.csv", ["x", "phi_infinity", "exact_v", "abs_residual"], rows
    )
    return worst


def run_selftest() -> bool:
    """Fast internal consistency checks; prints one PASS/FAIL line each."""
    ok = True

    def check(name: str, passed: bool, detail: str = "") -> None:
        nonlocal ok
        ok = ok and passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")

    # randomization identity on three closed-form integrals
    rcfg = RandomizerConfig(theta=1.8, a=2.0)
    cases = [
        (lambda s: np.ones_like(s), math.inf, 0.5),
        (lambda s: s, math.inf, 0.25),
        (lambda s: np.ones_like(s), 1.0, (1.0 - math.exp(-2.0)) / 2.0),
    ]
    for i, (phi, T, expected) in enumerate(cases):
        mc, quad = expectation_identity_check(
            rcfg, phi, T, 400_000, rng=substream(11, i)
        )
        passed = abs(quad - expected) < 1e-7 and abs(mc - quad) < 0.01
        check(
            f"time-randomization identity #{i + 1}",
            passed,
            f"mc={mc:.5f} quad={quad:.5f} expected={expected:.5f}",
        )

    # elliptic identity of the builtin driver
    rng = np.random.default_rng(3)
    for d in (1, 2, 3):
        x = rng.uniform(-3, 3, size=(1000, d))
        res = pde_identity_residual(1.0, 2.0, d, x).max()
        check(f"builtin driver elliptic identity d={d}", res < 1e-9, f"max={res:.2e}")

    # interpolation sanity
    grid = Grid(dim=2, delta=0.25, n_tilde=4)
    pts = rng.uniform(-1, 1, size=(200, 2))
    pou = np.array(
        [
            sum(hat_basis(grid, z, p) for z in grid.coordinates)
            for p in pts[:20]
        ]
    )
    check("partition of unity", np.abs(pou - 1.0).max() < 1e-12)

    from .grid import GridFunction

    gf = GridFunction(grid, grid.coordinates.copy())
    err = np.abs(interpolate_many(gf, pts) - pts).max()
    check("interpolation reproduces linear functions", err < 1e-12, f"max={err:.2e}")
    return ok


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ebsde", description="Monte-Carlo Picard solver for ergodic BSDEs"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="TOML configuration file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            dest="overrides",
            metavar="SECTION.KEY=VALUE",
            help="override a config value",
        )
        p.add_argument("--out", default=None, help="output directory override")

    p_solve = sub.add_parser("solve", help="run the scheme once")
    add_common(p_solve)

    p_sweep = sub.add_parser("sweep", help="run the scheme over a parameter list")
    add_common(p_sweep)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")

    p_oracle = sub.add_parser("oracle", help="deterministic fixed-point residuals")
    add_common(p_oracle)
    p_oracle.add_argument(
        "--probe",
        required=True,
        help="comma-separated x values (use --probe=-1,0,1 for negatives)",
    )

    p_kappa = sub.add_parser("kappa", help="contraction-bound report")
    add_common(p_kappa)

    sub.add_parser("selftest", help="internal consistency checks")

    args = parser.parse_args(argv)

    try:
        if args.command == "selftest":
            return 0 if run_selftest() else 3

        cfg = _load_config(args.config, args.overrides)
        out_dir = Path(
            args.out or cfg.get("outputs", {}).get("directory", "ebsde_out")
        )

        if args.command == "solve":
            summary = run_solve(cfg, out_dir)
            for k, v in sorted(summary.items()):
                print(f"{k} = {v}")
            print("note: reconstructed u is normalized by u(0) = 0")
            return 0

        if args.command == "sweep":
            values = [float(v) for v in args.values.split(",")]
            run_sweep(cfg, args.param, values, out_dir)
            print(f"sweep results in {out_dir / 'sweep.csv'}")
            return 0

        if args.command == "oracle":
            probes = [float(v) for v in args.probe.split(",")]
            worst = run_oracle(cfg, probes, out_dir)
            print(f"max fixed-point residual: {worst:.6e}")
            return 0

        if args.command == "kappa":
            out_dir.mkdir(parents=True, exist_ok=True)
            model = _build_model_from_config(cfg)
            driver = _build_driver_from_config(cfg, model)
            oc = cfg.get("outputs", {})
            alpha = float(oc.get("kappa_alpha", 0.1))
            beta = float(oc.get("kappa_beta", 1.0))
            kind = "exponential" if model.C_A <= 1.0 + 1e-6 else "polynomial"
            rep = kappa_upper_bound(
                model, driver, WeightFunction(kind=kind, alpha=alpha, beta=beta)
            )
            print(
                f"branch={rep.branch} kappa_upper={rep.kappa_upper:.6g} "
                f"contractive={rep.contractive} (c1={rep.c1:.4g}, c2={rep.c2:.4g})"
            )
            if rep.ca_is_estimate:
                print(
                    "note: C_A is a grid lower estimate; the bound may be "
                    "underestimated"
                )
            iso = np.allclose(model.A, model.a * np.eye(model.dim)) and np.allclose(
                model.Sigma, model.Sigma[0, 0] * np.eye(model.dim)
            )
            if iso:
                rb = kappa_isotropic_bound(
                    model.a, float(model.Sigma[0, 0]), model.dim, driver.K_fz, alpha
                )
                print(f"isotropic closed-form bound: {rb:.6g}")
            return 0
    except (ConfigError, OSError, tomllib.TOMLDecodeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EbsdeError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
