import numpy as np
import pytest

from opentb import BiasProfile, build_chain_system, ground_state_density_matrix


@pytest.fixture(scope="session")
def small_chain():
    """(8, 3, 8) chain, half filled, step bias 0.5."""
    system = build_chain_system(8, 3, 8)
    profile = BiasProfile(0.25, -0.25, shape="step")
    sigma0 = ground_state_density_matrix(system, system.n // 2)
    return system, profile, sigma0


@pytest.fixture(scope="session")
def device_only():
    """3-site isolated device (no leads) with a fixed Hermitian h."""
    from opentb import TightBindingSystem

    rng = np.random.default_rng(7)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    h = 0.5 * (a + a.conj().T)
    return TightBindingSystem(h, 0, 3, 0)


def random_hermitian(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)
