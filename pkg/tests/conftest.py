import numpy as np
import pytest

from ebsde import builtin_driver_benchmark, isotropic_model


@pytest.fixture(scope="session")
def model_d1():
    return isotropic_model(1, 2.0)


@pytest.fixture(scope="session")
def model_d2():
    return isotropic_model(2, 2.0)


@pytest.fixture(scope="session")
def bench_d1():
    return builtin_driver_benchmark(gamma=1.0, a=2.0, d=1)


@pytest.fixture(scope="session")
def bench_d2():
    return builtin_driver_benchmark(gamma=1.0, a=2.0, d=2)


@pytest.fixture(scope="session")
def nonsymmetric_model():
    """Anisotropic, nonsymmetric but diagonalizable drift."""
    from ebsde import build_model

    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    Sigma = np.array([[1.0, 0.2], [0.0, 0.9]])
    return build_model(A, Sigma)
