import numpy as np
import pytest

from conekit import elliptic as el
from conekit.cone_geometry import ConeSurface, build_metric
from conftest import rotation_potential


def manufactured_axisym(metric):
    """(v, Delta v) pair from the closed-form radial calculus on the
    football: v = (1-s)/(1+s) has Delta v = -2 v."""
    b = metric.surface.angles[0]
    s = np.abs(metric.grid.z) ** (2 * b)
    v = metric.mean_zero((1 - s) / (1 + s))
    return v, -2 * v


def manufactured_k1(metric):
    """Bounded first-harmonic pair with hand-computed Laplacian."""
    b = metric.surface.angles[0]
    s = np.abs(metric.grid.z) ** (2 * b)
    th = np.angle(metric.grid.z)
    v = s / (1 + s) ** 2 * np.cos(th)
    f = ((s ** 2 - 4 * s + 1) / (1 + s) ** 2 - 1 / (4 * b ** 2)) * np.cos(th)
    return metric.mean_zero(v), f


def test_poincare_round(round_sphere):
    cp = el.poincare_constant(round_sphere)
    assert abs(cp - 1 / np.sqrt(2)) < 0.02 / np.sqrt(2)


def test_poincare_scaling(round_sphere):
    from conekit.cone_geometry import ConeMetricField
    scaled = ConeMetricField(round_sphere.surface, "custom",
                             round_sphere.grid, 4.0 * round_sphere.g)
    cp = el.poincare_constant(round_sphere)
    cps = el.poincare_constant(scaled)
    assert abs(cps - 2.0 * cp) < 1e-8 * cp


def test_poincare_football_refinement(football):
    cp1 = el.poincare_constant(football)
    cp2 = el.poincare_constant(football.refined(1.5))
    assert cp1 > 0
    assert abs(cp1 - cp2) < 0.05 * cp1


def test_laplace_zero_rhs(football):
    rep = el.solve_laplace(football, np.zeros(football.grid.n_nodes))
    assert np.max(np.abs(rep.solution)) < 1e-10


def test_laplace_manufactured(football_fine):
    v, f = manufactured_axisym(football_fine)
    rep = el.solve_laplace(football_fine, f)
    assert np.max(np.abs(rep.solution - v)) < 1e-4
    v2, f2 = manufactured_k1(football_fine)
    rep2 = el.solve_laplace(football_fine, football_fine.mean_zero(f2))
    assert np.max(np.abs(rep2.solution - v2)) < 1e-4
    assert rep.norm_check.order == 2


def test_laplace_incompatible_rhs(football):
    f = np.ones(football.grid.n_nodes)
    with pytest.raises(el.IncompatibleDataError):
        el.solve_laplace(football, f)


def test_bilaplacian_manufactured(football):
    cp = el.poincare_constant(football)
    K = cp + 1.5
    v, lap = manufactured_axisym(football)
    # (Delta^2 - K Delta) v = (4 + 2K) v from the eigen-relation
    f = (4.0 + 2.0 * K) * v
    rep = el.solve_k_bilaplacian(football, K, f, c_p=cp)
    err = football.norm_l2(rep.solution - v) / football.norm_l2(v)
    assert err < 1e-3
    assert rep.extras["K"] == K


def test_bilaplacian_coercivity_gate(football):
    cp = el.poincare_constant(football)
    v, _ = manufactured_axisym(football)
    with pytest.raises(el.CoercivityError):
        el.solve_k_bilaplacian(football, cp, v, c_p=cp)


def test_bk_form_positive(football):
    cp = el.poincare_constant(football)
    el._assert_bk_positive(football, cp + 1.1)


def test_lichnerowicz_assembly_consistency(football):
    lich = el.assemble_lichnerowicz(football)
    rng = np.random.default_rng(0)
    u = football.mean_zero(rng.standard_normal(football.grid.n_nodes))
    # two-pass evaluation: apply Delta twice, add S * Delta u
    L = football.laplace_matrix()
    direct = L @ (L @ u) + lich.S_field * (L @ u)
    assert np.max(np.abs(lich.apply(u) - direct)) < 1e-9 * max(
        1.0, np.max(np.abs(direct)))


def test_lichnerowicz_constants(football):
    lich = el.assemble_lichnerowicz(football)
    c = np.ones(football.grid.n_nodes)
    scale = np.abs(lich.matrix).max()
    assert np.max(np.abs(lich.apply(c))) < 1e-10 * scale


def test_lichnerowicz_kernel_pointwise():
    # sup |Lic f_rot| off the cone collars shrinks with a fine grid
    surf = ConeSurface([0, np.inf], [0.3, 0.3], n_rho=256, n_theta=96)
    fb = build_metric(surf, "football")
    f = rotation_potential(fb)
    lich = el.assemble_lichnerowicz(fb)
    res = np.abs(lich.apply(f))
    mask = fb.collar_mask(0.02)
    assert np.max(res[mask]) < 1e-4 * np.max(np.abs(f))


def test_flat_reduction_lichnerowicz():
    # on a flat-cone field Ric = 0, so Lic reduces to Delta^2
    surf = ConeSurface([0], [0.3], n_rho=48, n_theta=32)
    fld = build_metric(surf, "flat_cone")
    lich = el.assemble_lichnerowicz(fld)
    mask = fld.collar_mask(0.05)
    assert np.max(np.abs(lich.S_field[mask])) < 5e-3


def test_self_adjointness(football):
    lich = el.assemble_lichnerowicz(football)
    rng = np.random.default_rng(1)
    n = football.grid.n_nodes
    for _ in range(4):
        u = football.mean_zero(rng.standard_normal(n))
        v = football.mean_zero(rng.standard_normal(n))
        a = football.integrate(v * lich.apply(u))
        b = football.integrate(u * lich.apply(v))
        scale = abs(a) + abs(b) + 1e-30
        assert abs(a - b) < 1e-8 * scale


def test_positivity_identity(football):
    lich = el.assemble_lichnerowicz(football)
    rng = np.random.default_rng(2)
    for _ in range(4):
        u = football.mean_zero(rng.standard_normal(football.grid.n_nodes))
        val = football.integrate(u * lich.apply(u))
        assert val > -1e-6 * football.norm_l2(u) ** 2


def test_continuity_path(football):
    rng = np.random.default_rng(4)
    u = football.mean_zero(rng.standard_normal(football.grid.n_nodes))
    lich = el.assemble_lichnerowicz(football)
    K = 5.0
    p0 = el.continuity_path_apply(football, K, 0.0, u, lich)
    p1 = el.continuity_path_apply(football, K, 1.0, u, lich)
    ph = el.continuity_path_apply(football, K, 0.5, u, lich)
    L = football.laplace_matrix()
    bilap = L @ (L @ u) - K * (L @ u)
    assert np.max(np.abs(p0 - bilap)) < 1e-12 * max(1, np.max(np.abs(bilap)))
    lichK = lich.apply(u) - K * (L @ u)
    assert np.max(np.abs(p1 - lichK)) < 1e-12 * max(1, np.max(np.abs(lichK)))
    assert np.max(np.abs(ph - 0.5 * (p0 + p1))) < 1e-9 * max(1, np.max(np.abs(ph)))
    with pytest.raises(ValueError):
        el.continuity_path_apply(football, K, 1.5, u, lich)


def test_path_apriori_bound(football):
    # ||u|| <= C ||f|| stable within +-20 percent along the path
    v, f = manufactured_axisym(football)
    cp = el.poincare_constant(football)
    K = (1.0 + 2.0 * football.ricci_sup() + 3.0 * cp) * 1.1
    lich = el.assemble_lichnerowicz(football)
    L = football.laplace_matrix()
    ratios = []
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        M = L @ L + t * (el.sp.diags(lich.S_field) @ L) - K * L
        u = el._solve_constrained(M, football, f)
        ratios.append(football.norm_l2(u) / football.norm_l2(f))
    mid = np.median(ratios)
    assert all(abs(r - mid) <= 0.2 * mid for r in ratios)


def test_fredholm_football_kernel(football):
    f0 = rotation_potential(football)
    grid = football.grid
    b = 0.3
    s = np.abs(grid.z) ** (2 * b)
    th = np.angle(grid.z)
    f = football.mean_zero(s / (1 + s) ** 2 * np.cos(th))
    f = f - football.integrate(f * f0) * f0
    rep = el.fredholm_solve(football, f)
    assert rep.branch == "kernel_detected"
    assert len(rep.kernel_basis) == 1
    cosang = abs(football.integrate(rep.kernel_basis[0] * f0))
    assert np.sqrt(max(0.0, 1 - cosang ** 2)) < 1e-3  # angle to rotation field
    assert rep.residual_l2 < 1e-4


def test_fredholm_manufactured_solution(football):
    f0 = rotation_potential(football)
    lich = el.assemble_lichnerowicz(football)
    grid = football.grid
    b = 0.3
    s = np.abs(grid.z) ** (2 * b)
    th = np.angle(grid.z)
    v = football.mean_zero(s / (1 + s) ** 2 * np.cos(th))
    v = v - football.integrate(v * f0) * f0
    f = lich.apply(v)
    f = football.mean_zero(f)
    f = f - football.integrate(f * f0) * f0
    rep = el.fredholm_solve(football, f)
    diff = rep.solution - v
    diff = diff - football.integrate(diff * f0) * f0
    assert football.norm_l2(diff) < 1e-3 * max(football.norm_l2(v), 1e-30)


def test_fredholm_3pt_empty_kernel(model_3pt):
    grid = model_3pt.grid
    f = model_3pt.mean_zero(np.real(grid.z / (1 + np.abs(grid.z) ** 2)))
    rep = el.fredholm_solve(model_3pt, f)
    assert rep.branch == "unique_solution"
    assert rep.extras["kernel_dims_per_resolution"] == [0, 0]
    assert rep.residual_l2 < 1e-8 * max(model_3pt.norm_l2(f), 1e-30)
