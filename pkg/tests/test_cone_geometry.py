import numpy as np
import pytest

from conekit.cone_geometry import (ConeSurface, DegenerateMetricError,
                                   SingularPointError, build_metric,
                                   check_angle_condition, flat_cone_tensors,
                                   holder_norm, w_map, w_map_inverse)


def test_w_map_values():
    assert abs(w_map(1.0 + 0j, 0.25) - 1.0) < 1e-14
    assert abs(w_map(4.0 + 0j, 0.5) - 2.0) < 1e-14
    assert w_map(0.0 + 0j, 0.3) == 0.0


def test_w_map_round_trip():
    rng = np.random.default_rng(7)
    z = rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000)
    for beta in (0.1, 0.3, 0.49):
        back = w_map_inverse(w_map(z, beta), beta)
        assert np.max(np.abs(back - z) / np.abs(z)) < 1e-12


def test_w_map_rejects_nonfinite():
    with pytest.raises(ValueError):
        w_map(np.nan + 0j, 0.3)
    with pytest.raises(ValueError):
        w_map(1.0 + 0j, 1.2)


def test_angle_condition():
    assert check_angle_condition(0.5, 0.25)
    assert not check_angle_condition(0.1, 0.5)
    assert not check_angle_condition(0.9, 0.45)
    with pytest.raises(ValueError):
        check_angle_condition(1.5, 0.3)


def test_flat_cone_christoffel_and_curvature():
    rng = np.random.default_rng(3)
    for beta in (0.1, 0.25, 0.49):
        for _ in range(25):
            z = rng.uniform(0.05, 2.0) * np.exp(2j * np.pi * rng.uniform())
            t = flat_cone_tensors(beta, z)
            assert abs(t["christoffel"] - (-(1 - beta) / z)) < 1e-10
            assert abs(t["curvature"]) < 1e-8
    # smooth angle limit
    t = flat_cone_tensors(1.0, 1.0 + 0j)
    assert abs(t["christoffel"]) < 1e-10


def test_flat_cone_singular_point():
    with pytest.raises(SingularPointError):
        flat_cone_tensors(0.3, 0.0)


def test_football_constant_curvature(football_fine):
    S, mask = football_fine.scalar_curvature()
    mean = football_fine.mean(S)
    assert abs(mean - 2.0) < 2e-3
    assert np.std(S[mask]) < 1e-3 * abs(mean)
    assert football_fine.Q < 4.0
    assert abs(football_fine.total_volume - 2 * np.pi * 0.3) < 1e-3


def test_model_metric_finite_quasi_isometry(model_3pt):
    assert np.isfinite(model_3pt.Q)
    prof = model_3pt.christoffel_profile()
    assert all(np.isfinite(v) for v in prof.values())
    assert model_3pt.total_volume > 0


def test_degenerate_metric_rejected():
    surf = ConeSurface([0, np.inf], [0.3, 0.3], n_rho=24, n_theta=24)
    base = build_metric(surf, "model")
    phi = -50.0 * np.real(base.grid.z / (1 + np.abs(base.grid.z) ** 2))
    with pytest.raises(DegenerateMetricError) as err:
        build_metric(surf, "explicit", phi=phi)
    assert err.value.node is not None


def test_holder_norm_constant(football):
    f = np.full(football.grid.n_nodes, 3.0)
    for order in (0, 2, 3, 4):
        rep = holder_norm(f, order, 0.5, football.surface)
        # seminorm estimators of a constant only leave stencil roundoff
        assert abs(rep.value - 3.0) < 1e-4


def test_holder_norm_lipschitz_in_w(football):
    grid = football.grid
    f = grid.rho * np.cos(grid.theta_local)  # Re w in each cap chart
    rep = holder_norm(f, 0, 0.5, football.surface)
    assert rep.per_chart["cap0"] <= 1.0 + 1e-6
    assert rep.per_chart["cap1"] <= 1.0 + 1e-6


def test_holder_norm_weighted_second_derivative(football):
    # f = |z|^(2 beta): the weighted mixed second derivative is bounded
    b = 0.3
    f = np.abs(football.grid.z) ** (2 * b)
    f = np.clip(f, 0, 10.0)
    rep = holder_norm(f, 2, 0.5, football.surface)
    key = "d1dbar1[0j]"
    assert np.isfinite(rep.weighted_profiles[key])
    # oracle: |z|^(2-2b) d d |z|^(2b) = b^2 |z|^(2b) <= b^2 * sup
    assert rep.weighted_profiles[key] < 5.0


def test_holder_triangle_inequality(football):
    rng = np.random.default_rng(5)
    n = football.grid.n_nodes
    for order in (0, 2):
        for _ in range(3):
            f = rng.standard_normal(n)
            g = rng.standard_normal(n)
            nf = holder_norm(f, order, 0.4, football.surface, seed=9).value
            ng = holder_norm(g, order, 0.4, football.surface, seed=9).value
            nfg = holder_norm(f + g, order, 0.4, football.surface, seed=9).value
            assert nfg <= nf + ng + 1e-9


def test_holder_chart_equivalence(football):
    # order-0 norm from the two cap charts agrees within 2x on the overlap
    grid = football.grid
    f = np.real(grid.z) / (1 + np.abs(grid.z) ** 2)
    rep = holder_norm(f, 0, 0.5, football.surface, seed=2)
    q0, q1 = rep.per_chart["cap0"], rep.per_chart["cap1"]
    assert q0 <= 2.0 * q1 + 1e-12 and q1 <= 2.0 * q0 + 1e-12


def test_surface_invariants():
    with pytest.raises(ValueError):
        ConeSurface([0], [1.2])
    with pytest.raises(ValueError):
        ConeSurface([0, 0], [0.3, 0.3])
    s = ConeSurface([0, np.inf], [0.3, 0.4])
    assert s.angle_at(0) == 0.3
