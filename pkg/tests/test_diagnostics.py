import math

import numpy as np
import pytest

from ebsde import (
    BranchMismatch,
    Grid,
    GridFunction,
    MarginTooLarge,
    MCMethod,
    QuadratureDimTooLarge,
    QuadratureMethod,
    WeightFunction,
    build_model,
    builtin_driver_benchmark,
    cov_t,
    error_metrics,
    fit_c1_c2,
    isotropic_model,
    kappa_isotropic_bound,
    kappa_upper_bound,
    lambda_estimate,
    reconstruct_u,
    isotropic_time_infimum,
)
from ebsde.picard import Driver


def golden_section_min(f, lo, hi, tol=1e-10):
    """Independent 1-D minimization oracle."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return f(x), x


class TestIsotropicBound:
    def test_time_infimum_against_golden_section(self):
        obj = lambda t: (  # noqa: E731
            (math.sqrt(2) + math.sqrt(math.pi * t)) / math.sqrt(-math.expm1(-t))
        )
        oracle_val, oracle_t = golden_section_min(obj, 1e-6, 50.0)
        got_val, got_t = isotropic_time_infimum()
        assert got_val == pytest.approx(oracle_val, rel=1e-8)
        assert got_t == pytest.approx(oracle_t, abs=1e-3)
        assert got_val == pytest.approx(4.0067, abs=1e-3)
        assert got_t == pytest.approx(1.057, abs=0.01)

    def test_alpha_zero_limit_matches_4sqrt2_gamma(self):
        for gamma in (0.5, 1.0, 2.0):
            bound = kappa_isotropic_bound(
                a=2.0, sigma=1.0, d=1, K_fz=2.0 * gamma, alpha=1e-12
            )
            assert abs(bound - 4.0 * math.sqrt(2.0) * gamma) <= (
                0.01 * 4.0 * math.sqrt(2.0) * gamma
            )

    def test_kfz_zero(self):
        assert kappa_isotropic_bound(2.0, 1.0, 1, 0.0, 0.3) == 0.0

    def test_nominal_value(self):
        # alpha -> 0, d = 1, a = 2, K_fz = 2: about 5.66, not contractive
        assert kappa_isotropic_bound(2.0, 1.0, 1, 2.0, 1e-12) == pytest.approx(
            5.666, abs=0.01
        )

    def test_small_parameters_contractive(self):
        assert kappa_isotropic_bound(2.0, 1.0, 1, 0.1, 0.1) < 1.0

    def test_monotonicity(self):
        base = dict(a=2.0, sigma=1.0, d=1, K_fz=1.0, alpha=0.5)
        vals_k = [kappa_isotropic_bound(**{**base, "K_fz": k}) for k in (0.5, 1.0, 2.0)]
        assert vals_k[0] < vals_k[1] < vals_k[2]
        vals_s = [kappa_isotropic_bound(**{**base, "sigma": s}) for s in (0.5, 1.0, 2.0)]
        assert vals_s[0] < vals_s[1] < vals_s[2]
        vals_al = [kappa_isotropic_bound(**{**base, "alpha": a}) for a in (0.1, 0.5, 1.0)]
        assert vals_al[0] < vals_al[1] < vals_al[2]
        vals_a = [kappa_isotropic_bound(**{**base, "a": a}) for a in (1.0, 2.0, 4.0)]
        assert vals_a[0] > vals_a[1] > vals_a[2]


class TestKappaUpperBound:
    def test_c1_c2_inequality_on_ladder(self, nonsymmetric_model):
        c1, c2 = fit_c1_c2(nonsymmetric_model)
        s = np.geomspace(1e-6, 50.0 / nonsymmetric_model.a, 400)
        lhs = np.array(
            [
                np.linalg.norm(np.linalg.inv(cov_t(nonsymmetric_model, si)), 2) ** 0.5
                for si in s
            ]
        )
        assert np.all(lhs <= c1 + c2 / np.sqrt(s) + 1e-9)

    def test_branch_mismatch(self, nonsymmetric_model, bench_d1):
        weight = WeightFunction(kind="exponential", alpha=0.1)
        with pytest.raises(BranchMismatch):
            kappa_upper_bound(nonsymmetric_model, bench_d1, weight)

    def test_kfz_zero_contractive(self, model_d1):
        driver = Driver(f=lambda x, z: np.ones(len(np.atleast_2d(x))), K_fx=0.0,
                        K_fz=0.0)
        rep = kappa_upper_bound(
            model_d1, driver, WeightFunction(kind="exponential", alpha=0.1)
        )
        assert rep.kappa_upper == 0.0 and rep.contractive

    def test_exponential_branch_vs_isotropic_closed_form(self, model_d1, bench_d1):
        # the ladder fit is generally looser than the closed-form isotropic
        # bound, but must stay within a small factor of it
        rep = kappa_upper_bound(
            model_d1, bench_d1, WeightFunction(kind="exponential", alpha=1e-9)
        )
        closed = kappa_isotropic_bound(2.0, 1.0, 1, bench_d1.K_fz, 1e-9)
        assert rep.branch == "exponential"
        assert closed <= rep.kappa_upper <= 3.0 * closed
        assert not rep.contractive

    def test_polynomial_branch(self, nonsymmetric_model, bench_d2):
        rep = kappa_upper_bound(
            nonsymmetric_model,
            bench_d2,
            WeightFunction(kind="polynomial", alpha=0.5, beta=2.0),
        )
        assert rep.branch == "polynomial"
        assert rep.kappa_upper > 0
        assert rep.ca_is_estimate  # C_A came from the grid search

    def test_polynomial_beta_one_closed_form(self, model_d2):
        # beta = 1: E[(C_A + s |Y|)^2] = C_A^2 + 2 C_A s E|Y| + s^2 d has a
        # closed form against which the chi-quadrature can be checked
        driver = Driver(f=lambda x, z: np.zeros(len(np.atleast_2d(x))), K_fx=0.0,
                        K_fz=1.0)
        alpha, d, a = 0.7, 2, 2.0
        ca = 1.0
        m = build_model(a * np.eye(d), np.eye(d), C_A=None)
        rep = kappa_upper_bound(
            m, driver, WeightFunction(kind="polynomial", alpha=alpha, beta=1.0)
        )
        scale = alpha * m.C_A * math.sqrt(1.0 / (2 * a))
        e_absy = math.sqrt(2.0) * math.gamma((d + 1) / 2) / math.gamma(d / 2)
        closed = math.sqrt(m.C_A**2 + 2 * m.C_A * scale * e_absy + scale**2 * d)
        c1, c2 = rep.c1, rep.c2
        tail = c1 / a + math.sqrt(math.pi) * c2 / math.sqrt(a)
        expected = m.C_A * 1.0 * math.sqrt(d) * closed * tail
        assert rep.kappa_upper == pytest.approx(expected, rel=1e-6)
        assert ca <= m.C_A


class TestLambda:
    def test_constant_driver_exact(self, model_d2):
        driver = Driver(f=lambda x, z: np.full(len(np.atleast_2d(x)), 3.25),
                        K_fx=0.0, K_fz=0.0)
        v = lambda X: np.zeros_like(np.atleast_2d(X))  # noqa: E731
        quad = lambda_estimate(model_d2, driver, v, QuadratureMethod(points=16))
        assert quad.value == pytest.approx(3.25, abs=1e-12)
        mc = lambda_estimate(model_d2, driver, v, MCMethod(m=10_000, seed=1))
        assert mc.value == pytest.approx(3.25, abs=1e-12)
        assert mc.stderr == 0.0

    def test_exact_solution_gives_one(self, model_d1, bench_d1):
        lam = lambda_estimate(
            model_d1, bench_d1, bench_d1.exact_v, QuadratureMethod(points=64)
        )
        assert abs(lam.value - 1.0) < 1e-6

    def test_mc_quadrature_agreement(self, model_d1, bench_d1, model_d2, bench_d2):
        for model, driver in ((model_d1, bench_d1), (model_d2, bench_d2)):
            quad = lambda_estimate(
                model, driver, driver.exact_v, QuadratureMethod(points=64)
            )
            mc = lambda_estimate(
                model, driver, driver.exact_v, MCMethod(m=400_000, seed=3)
            )
            assert abs(mc.value - quad.value) < 4 * mc.stderr

    def test_quadrature_dim_guard(self, bench_d1):
        m3 = isotropic_model(3, 2.0)
        d3 = builtin_driver_benchmark(1.0, 2.0, 3)
        with pytest.raises(QuadratureDimTooLarge):
            lambda_estimate(m3, d3, d3.exact_v, QuadratureMethod())


class TestReconstructU:
    def test_zero_point(self, bench_d1):
        assert reconstruct_u(bench_d1.exact_v, np.zeros(1)) == 0.0

    def test_closed_form_at_one(self, bench_d1):
        # antiderivative of -2 t e^{-t^2} is e^{-t^2}: u(1) - u(0) = e^{-1} - 1
        got = reconstruct_u(bench_d1.exact_v, np.array([1.0]), quad_points=64)
        assert got == pytest.approx(math.exp(-1.0) - 1.0, abs=1e-12)

    def test_grid_accuracy(self, bench_d1):
        for x in np.linspace(-2.0, 2.0, 17):
            got = reconstruct_u(bench_d1.exact_v, np.array([x]), quad_points=64)
            assert abs(got - (math.exp(-(x**2)) - 1.0)) < 1e-10

    def test_multidim(self, bench_d2):
        x = np.array([0.8, -0.6])
        got = reconstruct_u(bench_d2.exact_v, x, quad_points=64)
        assert got == pytest.approx(math.exp(-1.0) - 1.0, abs=1e-10)

    def test_spectral_decay(self, bench_d1):
        x = np.array([1.7])
        exact = math.exp(-(1.7**2)) - 1.0
        e8 = abs(reconstruct_u(bench_d1.exact_v, x, quad_points=8) - exact)
        e16 = abs(reconstruct_u(bench_d1.exact_v, x, quad_points=16) - exact)
        assert e16 < e8 / 10.0

    def test_point_count_validation(self, bench_d1):
        with pytest.raises(ValueError):
            reconstruct_u(bench_d1.exact_v, np.ones(1), quad_points=1)


class TestErrorMetrics:
    def test_exact_values_zero_error(self, bench_d1):
        g = Grid(dim=1, delta=0.4, n_tilde=5)
        gf = GridFunction(g, np.atleast_2d(bench_d1.exact_v(g.coordinates)))
        rec = error_metrics(gf, bench_d1.exact_v, r=1, n=3)
        assert rec.sup_err == 0.0 and rec.mean_err == 0.0
        assert rec.n == 3 and rec.r == 1

    def test_single_node_margin(self, bench_d1):
        g = Grid(dim=1, delta=0.4, n_tilde=2)
        gf = GridFunction(g, np.zeros((g.n_nodes, 1)))
        rec = error_metrics(gf, bench_d1.exact_v, r=1)
        # only nodes {-0.4, 0, 0.4} remain; v(0) = 0 so error < sup over all
        full = error_metrics(gf, bench_d1.exact_v, r=0)
        assert rec.sup_err <= full.sup_err

    def test_margin_shrinks_error(self, model_d1, bench_d1):
        g = Grid(dim=1, delta=0.4, n_tilde=5)
        rng = np.random.default_rng(0)
        vals = np.atleast_2d(bench_d1.exact_v(g.coordinates))
        vals = vals + 0.01 * rng.standard_normal(vals.shape)
        gf = GridFunction(g, vals)
        assert (
            error_metrics(gf, bench_d1.exact_v, 1).sup_err
            <= error_metrics(gf, bench_d1.exact_v, 0).sup_err
        )

    def test_margin_too_large(self, bench_d1):
        g = Grid(dim=1, delta=0.4, n_tilde=2)
        gf = GridFunction(g, np.zeros((g.n_nodes, 1)))
        with pytest.raises(MarginTooLarge):
            error_metrics(gf, bench_d1.exact_v, r=2)
