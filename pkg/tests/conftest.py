import pytest

from rydkerr.medium import slab_setup
from rydkerr.phase import PhaseKernel, build_phase_kernel


@pytest.fixture(scope="session")
def slab50():
    """g = omega = xi = 1, L = 50, delta = 100: phi(0) = -0.5, xi_out = 2."""
    return slab_setup(g=1.0, omega=1.0, length=50.0, xi=1.0, delta=100.0)


@pytest.fixture(scope="session")
def kernel50(slab50):
    return build_phase_kernel(*slab50)


@pytest.fixture(scope="session")
def short_kernel():
    params, medium = slab_setup(g=1.0, omega=1.0, length=10.0, xi=1.0, delta=100.0)
    return build_phase_kernel(params, medium)


@pytest.fixture(scope="session")
def zero_kernel():
    return PhaseKernel.universal(0.0, 10.0)
