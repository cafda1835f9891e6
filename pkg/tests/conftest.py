import numpy as np
import pytest
from fractions import Fraction

from conekit.cone_geometry import ConeSurface, build_metric
from conekit.parabolic_bundles import ParabolicBundle


@pytest.fixture(scope="session")
def football():
    surf = ConeSurface([0, np.inf], [0.3, 0.3], n_rho=64, n_theta=64)
    return build_metric(surf, "football")


@pytest.fixture(scope="session")
def football_fine():
    surf = ConeSurface([0, np.inf], [0.3, 0.3], n_rho=128, n_theta=96)
    return build_metric(surf, "football")


@pytest.fixture(scope="session")
def round_sphere():
    surf = ConeSurface([], [], n_rho=64, n_theta=64)
    return build_metric(surf, "football")


@pytest.fixture(scope="session")
def model_3pt():
    surf = ConeSurface([0, 1, np.inf], [0.3, 0.3, 0.3], n_rho=64, n_theta=64)
    return build_metric(surf, "model")


@pytest.fixture(scope="session")
def stable_bundle():
    """O(0) + O(0) with three generic full flags, weights (0, 1/2)."""
    F = Fraction
    return ParabolicBundle(
        (0, 0), [0, 1, np.inf],
        [[[(1, 0)]], [[(0, 1)]], [[(1, 1)]]],
        [[F(0), F(1, 2)]] * 3)


@pytest.fixture(scope="session")
def flow_base():
    """Football base whose seam keeps the bundle point at z=1 interior."""
    surf = ConeSurface([0, np.inf], [0.3, 0.3], n_rho=32, n_theta=64,
                       interface_radius=np.e)
    return build_metric(surf, "football")


def rotation_potential(metric):
    b = metric.surface.angles[0]
    s = np.abs(metric.grid.z) ** (2 * b)
    f = metric.mean_zero((1 - s) / (1 + s))
    return f / metric.norm_l2(f)
