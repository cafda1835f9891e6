"""Topological average scalar curvature, holomorphy potentials, and the
Futaki / log-Futaki invariants on the marked sphere.

Conventions: the polarization [omega] = 2 pi c_1(O(1)) has volume 2 pi on
P^1; 2 pi c_1(X) pairs to 4 pi and a divisor of m marked points pairs to
2 pi m.  At n = 1 the divisor integral in the log-Futaki correction is the
finite sum of the potential over the marked points, and the subtracted
average carries the class ratio n c_1(D).[omega]^{n-1}/[omega]^n = m/Vol;
this normalisation is pinned by the vanishing of the invariant on the
football's constant-curvature cone class.
"""

import numpy as np
from scipy.integrate import fixed_quad

from .elliptic import solve_laplace


def _fs_local_(zeta):
    return 1.0 / (1.0 + np.abs(zeta) ** 2) ** 2

__all__ = [
    "KahlerClassData",
    "InvalidFieldError",
    "average_scalar",
    "smooth_average_scalar",
    "holomorphy_potential",
    "log_futaki",
]


class InvalidFieldError(ValueError):
    """Vector field not tangent to the marked divisor."""


class KahlerClassData:
    """Topological pairings of a polarized marked sphere."""

    def __init__(self, total_volume, c1X_pairing, c1D_pairing, n=1, beta=None):
        if total_volume <= 0:
            raise ValueError("volume must be positive")
        self.total_volume = float(total_volume)
        self.c1X_pairing = float(c1X_pairing)
        self.c1D_pairing = float(c1D_pairing)
        self.n = int(n)
        self.beta = beta

    @classmethod
    def for_sphere(cls, n_points, beta, total_volume=2.0 * np.pi):
        """Class data of (P^1, D) with [omega] scaled to the given volume."""
        return cls(total_volume, 4.0 * np.pi, 2.0 * np.pi * n_points, 1, beta)

    @classmethod
    def of_metric(cls, metric):
        surf = metric.surface
        angles = set(surf.angles)
        beta = angles.pop() if len(angles) == 1 else (1.0 if not angles else None)
        return cls(metric.total_volume, 4.0 * np.pi,
                   2.0 * np.pi * len(surf.cone_points), 1, beta)

    def as_dict(self):
        return {"total_volume": self.total_volume,
                "c1X_pairing": self.c1X_pairing,
                "c1D_pairing": self.c1D_pairing,
                "n": self.n, "beta": self.beta}


def average_scalar(class_data, beta=None):
    """S_bar_beta = n [2pi c1(X).w^{n-1} - (1-beta) 2pi c1(D).w^{n-1}]/w^n."""
    beta = class_data.beta if beta is None else beta
    if beta is None:
        raise ValueError("angle required for mixed-angle class data")
    n, V = class_data.n, class_data.total_volume
    return n * (class_data.c1X_pairing
                - (1.0 - beta) * class_data.c1D_pairing) / V


def smooth_average_scalar(class_data):
    return class_data.n * class_data.c1X_pairing / class_data.total_volume


# ----------------------------------------------------------------------
# holomorphy potentials


def _field_coefficient(field):
    if isinstance(field, str):
        key = field.strip().lower()
        if key in ("z_dz", "z d/dz", "zdz"):
            return 1.0 + 0.0j
        raise ValueError(f"unknown field description {field!r}")
    return complex(field)


def _is_axisymmetric(metric, tol=1e-11):
    grid = metric.grid
    g = metric.g
    for cap in (0, 1):
        c = grid.caps[cap]
        base = grid.offsets[cap]
        blocks = g[base:base + c.size].reshape(c.n_rho, c.n_theta)
        if np.max(np.abs(blocks - blocks[:, :1])) > tol * np.max(np.abs(blocks)):
            return False
    return True


def _chain_rings(metric):
    """Node-index blocks per ring in chain order (cap0 apex -> cap1 apex)."""
    grid = metric.grid
    n_t = grid.n_theta
    rings = []
    for i in range(grid.caps[0].n_rho):
        rings.append(grid.offsets[0] + i * n_t + np.arange(n_t))
    for i in range(grid.caps[1].n_rho - 1, -1, -1):
        rings.append(grid.offsets[1] + i * n_t + np.arange(n_t))
    return rings


def _radial_potential_analytic(metric, c):
    """Moment profile from adaptive quadrature of the analytic conformal
    factor: f = -2 i c int_0^r g r dr, mean zero.  Integration runs in the
    local s = r^(2 beta) variable where the integrand is smooth."""
    grid = metric.grid
    g_fn = metric.g_fn
    halves = []
    for cap in (0, 1):
        capo = grid.caps[cap]
        b = capo.beta
        radii = np.concatenate([[0.0], capo.r])

        def integrand(sv):
            rr = np.clip(sv, 1e-300, None) ** (1.0 / (2 * b))
            return np.real(g_fn(cap, rr)) * rr ** (2 - 2 * b) / (2 * b)

        vals = np.empty(capo.n_rho)
        acc = 0.0
        for i in range(capo.n_rho):
            s0, s1 = radii[i] ** (2 * b), radii[i + 1] ** (2 * b)
            acc += fixed_quad(integrand, s0, s1, n=12)[0]
            vals[i] = acc
        # close each half up to the seam circle
        s_edge = capo.r_edge ** (2 * b) if cap == 0 else \
            (1.0 / capo.r_edge) ** 0.0  # cap-1 local edge radius is r_edge
        s_edge = capo.r_edge ** (2 * b)
        tail = fixed_quad(integrand, radii[-1] ** (2 * b), s_edge, n=12)[0]
        halves.append((vals, vals[-1] + tail))
    # cumulative from the cap-0 apex; areas are coordinate invariant, so
    # the sphere total is the sum of the two cap integrals
    tot = halves[0][1] + halves[1][1]
    F = np.empty(grid.n_nodes)
    sel0 = grid.cap_id == 0
    F[sel0] = halves[0][0][grid.i_idx[sel0]]
    F[~sel0] = tot - halves[1][0][grid.i_idx[~sel0]]
    f = -2j * c * F
    return f - np.sum(metric.vol * f) / metric.total_volume


def _radial_residual(metric, f, c):
    """Residual |iota_V omega + dbar f| for a radial potential, with the
    radial derivative from 5-point Richardson stencils along the chain."""
    grid = metric.grid
    rings = _chain_rings(metric)
    t = np.array([grid.t_global[idx[0]] for idx in rings])
    prof = np.array([np.mean(f[idx]) for idx in rings])
    n = len(t)
    # fit against the grid's smooth global flux parameter, which is
    # uniform-like at both apexes where t stretches logarithmically
    Ffam, dFfam = grid._flux_family()
    x = Ffam(t)
    dxdt = dFfam(t)
    nr0 = grid.caps[0].n_rho
    width = 7
    dprof = np.empty(n, dtype=complex)
    for k in range(n):
        # windows stay within one cap: the flux parameter is smooth there
        # but only C^2 through the seam for unequal cap angles
        if k < nr0:
            lo = min(max(k - width // 2, 0), nr0 - width)
        else:
            lo = min(max(k - width // 2, nr0), n - width)
        idx = np.arange(lo, lo + width)
        scale = max(x[idx].max() - x[idx].min(), 1e-300)
        xx = (x[idx] - x[k]) / scale
        V = np.vander(xx, width, increasing=True)
        w = np.linalg.solve(V.T, np.eye(width)[1])
        dprof[k] = (w @ prof[idx]) * dxdt[k] / scale
    res = np.empty(grid.n_nodes)
    for k, idx in enumerate(rings):
        n0 = idx[0]
        sign = 1.0 if grid.cap_id[n0] == 0 else -1.0
        # dbar f = e^{i th}/(2 r_loc) * (sign * df/dt_global)
        dbar_mag = np.abs(dprof[k]) / (2.0 * grid.r_local[n0])
        target = np.abs(metric.g[idx[0]] * c * grid.r_local[n0])
        lhs = np.abs(1j * metric.g[idx] * c * grid.zeta[idx] * sign)
        val = np.abs(lhs - dbar_mag)
        # phases align by construction for radial profiles; compare moduli
        res[idx] = val
    return res


def _radial_potential(metric, c):
    """Exact-model cumulative integration of f' = -2 c g r for V = c z d/dz
    on an axisymmetric metric; returns the (complex) mean-zero potential."""
    grid = metric.grid
    c0, c1 = grid.caps
    n_t = grid.n_theta
    # ring volumes in chain order (cap0 apex -> seam -> cap1 apex)
    ring_vol = []
    ring_nodes = []
    for i in range(c0.n_rho):
        idx = grid.offsets[0] + i * n_t + np.arange(n_t)
        ring_vol.append(np.sum(metric.vol[idx]))
        ring_nodes.append(idx)
    for i in range(c1.n_rho - 1, -1, -1):
        idx = grid.offsets[1] + i * n_t + np.arange(n_t)
        ring_vol.append(np.sum(metric.vol[idx]))
        ring_nodes.append(idx)
    ring_vol = np.array(ring_vol)
    # integral of g r dr across a full ring is ring_vol / (4 pi);
    # the fraction of the node's own cell uses the local cone model
    kk = 0
    F = np.empty(grid.n_nodes)
    cum = 0.0
    for k, idx in enumerate(ring_nodes):
        n0 = idx[0]
        beta_loc = grid.cap_beta[n0]
        r_n, r_i, r_o = grid.r_local[n0], grid.r_in_local[n0], grid.r_out_local[n0]
        num = r_n ** (2 * beta_loc) - r_i ** (2 * beta_loc)
        den = r_o ** (2 * beta_loc) - r_i ** (2 * beta_loc)
        frac = num / den
        if grid.cap_id[n0] == 1:
            frac = 1.0 - frac  # global radius decreases with местный i
        F[idx] = cum + frac * ring_vol[k] / (4.0 * np.pi)
        cum += ring_vol[k] / (4.0 * np.pi)
        kk += 1
    f = 1j * c * (-2.0) * F
    return f - np.sum(metric.vol * f) / metric.total_volume


def holomorphy_potential(metric, field="z_dz", residual_tol=1e-6):
    """Potential f of V = c z d/dz: iota_V omega = -dbar f, mean zero.

    Axisymmetric metrics use exact cumulative quadrature of the moment
    profile; otherwise the dbar equation is reduced to a Poisson solve.
    The sup residual of |iota_V omega + dbar f| is verified off the cone
    collars against residual_tol.
    """
    c = _field_coefficient(field)
    grid = metric.grid
    if c == 0:
        return np.zeros(grid.n_nodes)
    for p in metric.surface.cone_points:
        if p != 0 and not np.isinf(abs(p)):
            raise InvalidFieldError(
                f"z d/dz is not tangent to the marked point at {p}")
    axisym = _is_axisymmetric(metric)
    if axisym and metric.g_fn is not None:
        f = _radial_potential_analytic(metric, c)
    elif axisym:
        f = _radial_potential(metric, c)
    else:
        sign = np.where(grid.cap_id == 0, 1.0, -1.0)
        logg = np.log(metric.g)
        rhs = -1j * c * sign * (1.0 + grid.zeta * grid.d_zeta(logg))
        f = np.zeros(grid.n_nodes, dtype=complex)
        for part in (np.real, np.imag):
            comp = part(rhs)
            rep = solve_laplace(metric, metric.mean_zero(comp))
            f = f + (rep.solution if part is np.real else 1j * rep.solution)
    if axisym:
        res = _radial_residual(metric, f, c)
    else:
        sign = np.where(grid.cap_id == 0, 1.0, -1.0)
        res = np.abs(1j * metric.g * c * sign * grid.zeta + grid.d_zetabar(f))
    mask = metric.collar_mask(0.05)
    sup = float(np.max(res[mask]))
    if sup > residual_tol:
        raise RuntimeError(
            f"holomorphy potential residual {sup:.2e} exceeds {residual_tol:.0e}")
    return f


# ----------------------------------------------------------------------
# log-Futaki invariant


def _potential_at_points(metric, f):
    """Potential values at the marked points (cap apexes by construction
    for tangent fields)."""
    grid = metric.grid
    out = []
    for p, b, cap, q, rad in metric.surface.charts():
        if q != 0.0:
            raise InvalidFieldError(
                "divisor values need the marked points at the cap centres")
        out.append((p, b, grid.apex_value(f, cap)))
    return out


def log_futaki(metric, field="z_dz", class_data=None, collar=0.02,
               residual_tol=1e-6):
    """Fut_{D,beta,[omega]}(V_f) by quadrature:

        (1/2pi) int f (S - S_bar_smooth) dV
        - sum_p (1-beta_p) [ f(p) - (1/Vol) int f dV ].

    On a curve the divisor integral is the finite sum over marked points;
    the class-ratio convention is pinned by the vanishing on cscK cone
    classes.  The smooth Futaki part vanishes on P^1 for any metric in the
    class, which callers use as a metric-independence check.
    """
    if class_data is None:
        class_data = KahlerClassData.of_metric(metric)
    f = holomorphy_potential(metric, field, residual_tol)
    # distributional scalar curvature in weak form: the flux integral of
    # -log(g/g_FS) picks up the cone point masses 2 pi (1-beta) delta_p of
    # a genuine cone representative exactly (and none for a smooth
    # representative), which is what the curvature current of the metric
    # integrates to; pointwise values near the points are only meaningful
    # through these volume-weighted sums
    grid = metric.grid
    u_dist = np.log(metric.g) - np.log(_fs_local_(grid.zeta))
    s_dist_weighted = -0.5 * (grid.F @ u_dist) + 2.0 * _fs_local_(grid.zeta) \
        / metric.g * metric.vol
    s_smooth = smooth_average_scalar(class_data)
    total = (np.sum(f * s_dist_weighted)
             - s_smooth * np.sum(metric.vol * f)) / (2.0 * np.pi)
    mean_f = np.sum(metric.vol * f) / metric.total_volume
    for p, b, fp in _potential_at_points(metric, f):
        total = total - (1.0 - b) * (fp - mean_f)
    if abs(np.imag(total)) < 1e-12 + 1e-9 * abs(np.real(total)):
        return float(np.real(total))
    return complex(total)
