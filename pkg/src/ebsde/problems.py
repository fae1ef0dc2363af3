"""Builtin test problems with known closed-form solutions.

The main benchmark lives on the isotropic model A = a I, Sigma = I_d with
the nonlinearity

    f(x, z) = 1 + sin(gamma (|x| + |z|)) + gamma |z|
              - sin(gamma (|x| + 2 |x| e^{-|x|^2}))
              - (2 gamma |x| + 2 |x|^2 - d + 2 a |x|^2) e^{-|x|^2},

whose exact solution triple is u(x) = e^{-|x|^2},
v(x) = -2 x^T e^{-|x|^2} (a 1 x d row), and ergodic cost 1.  The z-slot
Lipschitz constant is 2 gamma: f depends on z only through |z|, with
derivative gamma cos(.) + gamma.  |x| and |z| are Euclidean norms; at the
exact solution the two sine terms cancel since |v(x) Sigma| =
2 |x| e^{-|x|^2}.
"""

from __future__ import annotations

import numpy as np

from .ou import OuModel, build_model
from .picard import Driver


def isotropic_model(d: int, a: float, sigma: float = 1.0) -> OuModel:
    """Model with A = a I_d and Sigma = sigma I_d (so C_A = 1)."""
    return build_model(a * np.eye(d), sigma * np.eye(d), C_A=1.0)


def builtin_driver_zero(d: int) -> Driver:
    """f = 0; the scheme must produce exactly zero iterates."""
    return Driver(
        f=lambda x, z: np.zeros(np.atleast_2d(x).shape[0]),
        K_fx=0.0,
        K_fz=0.0,
        label="zero",
        exact_u=lambda x: np.zeros(np.atleast_2d(x).shape[0]),
        exact_v=lambda x: np.zeros_like(np.atleast_2d(x)),
        exact_lambda=0.0,
    )


def _estimate_k_fx(f, d: int) -> float:
    """Sampled finite-difference estimate of the x-slot Lipschitz constant."""
    rng = np.random.default_rng(7)
    x = rng.uniform(-3.0, 3.0, size=(2048, d))
    z = rng.uniform(-3.0, 3.0, size=(2048, d))
    eps = 1e-5
    worst = 0.0
    for k in range(d):
        dx = np.zeros(d)
        dx[k] = eps
        grad = (f(x + dx, z) - f(x - dx, z)) / (2 * eps)
        worst = max(worst, float(np.abs(grad).max()))
    return 1.2 * worst * np.sqrt(d)


def builtin_driver_benchmark(gamma: float, a: float, d: int) -> Driver:
    """The benchmark nonlinearity with its exact-solution hooks attached.

    Intended for the isotropic model from isotropic_model(d, a); the
    exact gradient hook returns rows v(x) = -2 x^T e^{-|x|^2}.
    """
    if gamma <= 0 or a <= 0:
        raise ValueError("gamma and a must be > 0")

    def f(x, z):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        r = np.linalg.norm(x, axis=1)
        zn = np.linalg.norm(z, axis=1)
        e = np.exp(-(r**2))
        return (
            1.0
            + np.sin(gamma * (r + zn))
            + gamma * zn
            - np.sin(gamma * (r + 2.0 * r * e))
            - (2.0 * gamma * r + 2.0 * r**2 - d + 2.0 * a * r**2) * e
        )

    def exact_u(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.exp(-np.sum(x**2, axis=1))

    def exact_v(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return -2.0 * x * np.exp(-np.sum(x**2, axis=1))[:, None]

    return Driver(
        f=f,
        K_fx=_estimate_k_fx(f, d),
        K_fz=2.0 * gamma,
        label=f"benchmark(gamma={gamma}, a={a}, d={d})",
        exact_u=exact_u,
        exact_v=exact_v,
        exact_lambda=1.0,
    )


def generator_on_exact_u(x, a: float, d: int) -> np.ndarray:
    """L u at the exact solution u = e^{-|x|^2} for the isotropic model:

        L u(x) = -(a x) . grad u(x) + 1/2 trace(hess u(x))
               = (2 a |x|^2 + 2 |x|^2 - d) e^{-|x|^2}.

    Written from grad u = -2 x^T u and trace(hess u) = (4 |x|^2 - 2 d) u;
    used to check the elliptic identity L u + f(x, grad u Sigma) = 1.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = np.sum(x**2, axis=1)
    u = np.exp(-r2)
    drift = 2.0 * a * r2 * u          # -(a x) . (-2 x u)
    diffusion = 0.5 * (4.0 * r2 - 2.0 * d) * u
    return drift + diffusion


def pde_identity_residual(gamma: float, a: float, d: int, x) -> np.ndarray:
    """|L u + f(x, grad u Sigma) - 1| at points x, for the builtin problem."""
    driver = builtin_driver_benchmark(gamma, a, d)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = driver.exact_v(x)  # Sigma = I: grad u Sigma = v
    return np.abs(generator_on_exact_u(x, a, d) + driver(x, z) - 1.0)
