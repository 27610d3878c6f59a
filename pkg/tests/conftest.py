import numpy as np
import pytest

import mckeanflow as mk


@pytest.fixture(scope="session")
def dw03():
    """Double well, theta=1, sigma2=0.3: the workhorse subcritical model."""
    return mk.standard_model(1.0, 0.3)


@pytest.fixture(scope="session")
def sc03(dw03):
    return mk.SelfConsistency1D(dw03)


@pytest.fixture(scope="session")
def fixed_points_03(sc03):
    return mk.find_fixed_points(sc03)


@pytest.fixture(scope="session")
def m_plus(fixed_points_03):
    return fixed_points_03.positive_root().m


@pytest.fixture(scope="session")
def rho_star_512(dw03, m_plus):
    """Exact discrete steady state of the solver on the default grid."""
    from mckeanflow.meanfield import discrete_fixed_mean
    m_d = discrete_fixed_mean(dw03, -4.0, 4.0, 512, m_plus)
    return mk.equilibrium_for_mean(dw03, m_d, -4.0, 4.0, 512)


def random_mixture(rng, x_lo=-4.0, x_hi=4.0, n=512, k_max=3):
    """Random Gaussian mixture density, components kept away from the edges."""
    k = int(rng.integers(1, k_max + 1))
    comps = []
    for _ in range(k):
        comps.append((float(rng.uniform(0.2, 1.0)),
                      float(rng.uniform(x_lo + 1.5, x_hi - 1.5)),
                      float(rng.uniform(0.25, 0.8))))
    return mk.DensityGrid1D.gaussian_mixture(x_lo, x_hi, n, comps)
