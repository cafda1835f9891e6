"""Cone charts, the quasi-isometric W-coordinate, model cone metrics and
weighted Holder norm estimators on the marked sphere.

Conventions used throughout the package
---------------------------------------
A metric on the sphere is written omega = sqrt(-1) * g * dz ^ dzbar where
g > 0 is the conformal factor in the affine coordinate of the node's cap;
the area element is 2*g*dx*dy and the (analyst's sign) Laplacian is
Delta u = (1/g) * d^2 u / dz dzbar.  With this normalisation the
Fubini-Study metric g = (1+|z|^2)^-2 has area 2*pi and scalar curvature 2,
and the standard cone model at angle 2*pi*beta is
g_cone = (beta^2/2) |z|^(2 beta - 2).
"""

import numpy as np

from .grids import InsufficientResolutionError, SphereGrid

__all__ = [
    "ConeSurface",
    "ConeMetricField",
    "NormReport",
    "DegenerateMetricError",
    "SingularPointError",
    "build_metric",
    "check_angle_condition",
    "flat_cone_tensors",
    "holder_norm",
    "w_map",
    "w_map_inverse",
]

INF = complex(np.inf)


class SingularPointError(ValueError):
    """Evaluation requested on the cone locus."""


class DegenerateMetricError(ValueError):
    """The candidate 2-form failed positivity; carries the worst node."""

    def __init__(self, message, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


# ----------------------------------------------------------------------
# W-coordinate and the angle condition


def w_map(z, beta):
    """Quasi-isometric chart map w = |z|^(beta-1) * z, fixing the origin."""
    if not (0.0 < beta < 1.0):
        raise ValueError(f"cone angle fraction must lie in (0,1), got {beta}")
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite chart coordinate")
    az = np.abs(z)
    out = np.where(az > 0.0, az ** (beta - 1.0) * z, 0.0)
    return out if out.ndim else complex(out)


def w_map_inverse(w, beta):
    """Inverse of :func:`w_map`: z = |w|^(1/beta - 1) * w."""
    if not (0.0 < beta < 1.0):
        raise ValueError(f"cone angle fraction must lie in (0,1), got {beta}")
    w = np.asarray(w, dtype=complex)
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite chart coordinate")
    aw = np.abs(w)
    out = np.where(aw > 0.0, aw ** (1.0 / beta - 1.0) * w, 0.0)
    return out if out.ndim else complex(out)


def check_angle_condition(alpha, beta):
    """Half-angle restriction: beta < 1/2 and alpha*beta < 1 - 2*beta."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"Holder exponent must lie in (0,1), got {alpha}")
    if not (0.0 < beta < 1.0):
        raise ValueError(f"cone angle fraction must lie in (0,1), got {beta}")
    return beta < 0.5 and alpha * beta < 1.0 - 2.0 * beta


# ----------------------------------------------------------------------
# complex finite differences (Richardson-extrapolated central stencils)


def _fd_dz(f, z, eps):
    return ((f(z + eps) - f(z - eps)) - 1j * (f(z + 1j * eps) - f(z - 1j * eps))) / (4 * eps)


def _fd_dzbar(f, z, eps):
    return ((f(z + eps) - f(z - eps)) + 1j * (f(z + 1j * eps) - f(z - 1j * eps))) / (4 * eps)


def fd_dz(f, z, rel_step=3e-4):
    """O(eps^4) holomorphic derivative of a sampled function, relative step."""
    eps = rel_step * max(abs(z), 1e-8)
    return (4.0 * _fd_dz(f, z, eps / 2) - _fd_dz(f, z, eps)) / 3.0


def fd_dzbar(f, z, rel_step=1e-4):
    eps = rel_step * max(abs(z), 1e-8)
    return (4.0 * _fd_dzbar(f, z, eps / 2) - _fd_dzbar(f, z, eps)) / 3.0


# ----------------------------------------------------------------------
# flat cone model


def flat_cone_tensors(beta, z):
    """Metric, Christoffel symbol and curvature of the flat cone at a point.

    Returns a dict with the conformal factor ``g`` of
    omega_cone = sqrt(-1) g dz^dzbar, the single surviving Christoffel
    symbol (estimated by finite differences of log g), the closed-form
    value -(1-beta)/z it must reproduce, and the curvature obtained by
    differentiating the Christoffel profile.
    """
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"cone angle fraction must lie in (0,1], got {beta}")
    z = complex(z)
    if z == 0:
        raise SingularPointError("flat cone tensors requested at the cone point")
    if not np.isfinite(abs(z)):
        raise ValueError("non-finite chart coordinate")

    def g(zz):
        return 0.5 * beta ** 2 * np.abs(zz) ** (2.0 * beta - 2.0)

    def log_g(zz):
        return np.log(0.5 * beta ** 2) + (2.0 * beta - 2.0) * np.log(np.abs(zz))

    gamma_fd = fd_dz(log_g, z)
    gamma_exact = -(1.0 - beta) / z

    def gamma_fn(zz):
        return -(1.0 - beta) / zz

    curvature = -fd_dzbar(gamma_fn, z)
    return {
        "g": g(z),
        "christoffel": gamma_fd,
        "christoffel_exact": gamma_exact,
        "curvature": curvature,
    }


# ----------------------------------------------------------------------
# surfaces


class ConeSurface:
    """A marked sphere with cone points and angles; owns charts and grids.

    cone_points are positions on CP^1 (``inf`` allowed); angles are the
    corresponding fractions beta in (0,1).  The solver grid consists of two
    polar caps anchored at 0 and infinity; cone points elsewhere keep their
    own (virtual) chart for norm estimation and quadrature collars, while
    their metric singularity enters the cap grids through the conformal
    factor.  The data model carries a dimension field for forward
    compatibility; all numerics assert dimension one.
    """

    def __init__(self, cone_points=(), angles=(), n_rho=64, n_theta=128,
                 overlap=(0.5, 2.0), dimension=1, interface_radius=None):
        if dimension != 1:
            raise ValueError("numerics are restricted to one-dimensional bases")
        self._interface_radius = interface_radius
        pts = []
        for p in cone_points:
            pts.append(INF if p in (np.inf, INF) or (isinstance(p, float) and np.isinf(p)) else complex(p))
        if len(pts) != len(angles):
            raise ValueError("one angle per cone point required")
        if len(pts) > 4:
            raise ValueError("at most 4 marked points supported")
        for b in angles:
            if not (0.0 < b < 1.0):
                raise ValueError(f"cone angle fraction must lie in (0,1), got {b}")
        if len(set(map(str, pts))) != len(pts):
            raise ValueError("cone points must be distinct")
        self.cone_points = tuple(pts)
        self.angles = tuple(float(b) for b in angles)
        self.n_rho = int(n_rho)
        self.n_theta = int(n_theta)
        self.overlap = tuple(overlap)
        self.dimension = dimension
        self._grids = {}

    # -- chart bookkeeping -------------------------------------------------

    def angle_at(self, p):
        for q, b in zip(self.cone_points, self.angles):
            if q == p or (np.isinf(abs(q)) and np.isinf(abs(p))):
                return b
        return 1.0

    @property
    def mid_points(self):
        """Cone points that are not at the cap anchors 0, infinity."""
        return tuple(p for p in self.cone_points
                     if p != 0 and not np.isinf(abs(p)))

    @property
    def interface_radius(self):
        """Seam circle |z| = R between the two caps; kept clear of the
        mid-sphere cone points (configurable for marked points that other
        structures, like bundles, place on the sphere)."""
        if self._interface_radius is not None:
            return float(self._interface_radius)
        mids = self.mid_points
        if not mids:
            return 1.0
        return float(np.e * max(1.0, max(abs(p) for p in mids)))

    def grid(self, refine=1.0):
        """Solver grid (cached per refinement level)."""
        key = round(float(refine), 6)
        if key not in self._grids:
            n_rho = max(8, int(round(self.n_rho * refine)))
            n_theta = max(16, 2 * (int(round(self.n_theta * refine)) // 2))
            g = SphereGrid(self.angle_at(0), self.angle_at(INF),
                           n_rho, n_theta, self.interface_radius)
            for p in self.cone_points:
                if not np.isinf(abs(p)) and p != 0:
                    if np.min(np.abs(g.z - p)) < 1e-12:
                        raise ValueError("grid node coincides with a cone point")
            self._grids[key] = g
        return self._grids[key]

    def charts(self):
        """(point, beta, cap, local position, radius) for every cone chart.

        The radius is measured in the chart's local coordinate and keeps
        charts clear of each other and of the cap edge.
        """
        placed = []
        for p, b in zip(self.cone_points, self.angles):
            if p == 0:
                placed.append((p, b, 0, 0.0))
            elif np.isinf(abs(p)):
                placed.append((p, b, 1, 0.0))
            elif abs(p) <= self.interface_radius:
                placed.append((p, b, 0, p))
            else:
                placed.append((p, b, 1, 1.0 / p))
        out = []
        for p, b, cap, q in placed:
            r_edge = self.interface_radius if cap == 0 else 1.0 / self.interface_radius
            dists = [r_edge if q == 0.0 else r_edge - abs(q)]
            for p2, b2, cap2, q2 in placed:
                if p2 is p:
                    continue
                if cap2 == cap:
                    dists.append(abs(complex(q) - complex(q2)))
            out.append((p, b, cap, q, 0.35 * min(dists)))
        return out

    def __repr__(self):
        pts = ", ".join(f"({p}, beta={b})" for p, b in zip(self.cone_points, self.angles))
        return f"ConeSurface([{pts}], grid={self.n_rho}x{self.n_theta})"


# ----------------------------------------------------------------------
# metric fields


def _fs_local(zeta):
    return 1.0 / (1.0 + np.abs(zeta) ** 2) ** 2


def _local_point_data(surface, cap, grid):
    """How each cone point appears in the given cap's affine coordinate.

    Returns a list of (q, beta, const) where the point's section norm is
    log|s_p|^2 = const + log|zeta - q|^2 - log(1+|zeta|^2)  (finite q) or
    log|s_p|^2 = -log(1+|zeta|^2)                           (q is None,
    the point sits at the other cap's centre).
    """
    out = []
    for p, b in zip(surface.cone_points, surface.angles):
        if np.isinf(abs(p)):
            out.append((None, b, 0.0) if cap == 0 else (0.0, b, 0.0))
        elif p == 0:
            out.append((0.0, b, 0.0) if cap == 0 else (None, b, 0.0))
        else:
            if cap == 0:
                out.append((complex(p), b, 0.0))
            else:
                out.append((1.0 / complex(p), b, 2.0 * np.log(abs(p))))
    return out


class ConeMetricField:
    """Kahler cone metric on a marked sphere, sampled on the solver grid.

    Stores the cap-local conformal factor g at every node, the volume
    weights of the metric measure (exact on the local cone model), and the
    regular part of log g used by the curvature evaluator.
    """

    def __init__(self, surface, kind, grid, g, delta=None, g_fn=None,
                 potential=None, s_exact=None):
        self.surface = surface
        self.kind = kind
        self.grid = grid
        self.g = np.asarray(g, dtype=float)
        self.delta = delta
        self.g_fn = g_fn          # optional (cap, zeta)->g closure
        self.potential = potential
        self.s_exact = s_exact    # optional known constant scalar curvature
        self._check_positivity()
        self._build_volume()
        self._build_regular_log()
        self._quasi_isometry()
        self._S = None

    # -- invariants ---------------------------------------------------------

    def _check_positivity(self):
        if np.any(~np.isfinite(self.g)) or np.any(self.g <= 0.0):
            worst = int(np.nanargmin(self.g))
            raise DegenerateMetricError(
                f"metric degenerates at node {worst} (z={self.grid.z[worst]:.4g}, "
                f"g={self.g[worst]:.4g})", node=worst, value=float(self.g[worst]))

    def _build_volume(self):
        grid = self.grid
        vol = np.empty(grid.n_nodes)
        for cap in (0, 1):
            sel = grid.cap_id == cap
            beta = grid.caps[cap].beta
            b_apex = self.surface.angle_at(0 if cap == 0 else INF)
            if abs(b_apex - beta) < 1e-12:
                # exact integral of the local cone model r^(2 beta - 2)
                # over the cell, frozen at the node's regular factor
                cell = (grid.r_out_local[sel] ** (2 * beta)
                        - grid.r_in_local[sel] ** (2 * beta)) / beta
                vol[sel] = self.g[sel] * grid.r_local[sel] ** (2.0 - 2 * beta) \
                    * grid.dtheta_node[sel] * cell
            else:
                vol[sel] = 2.0 * self.g[sel] * grid.W[sel]
        self.vol = vol
        self.total_volume = float(np.sum(vol))

    def _build_regular_log(self):
        grid = self.grid
        u = np.log(self.g) - np.log(_fs_local(grid.zeta))
        for cap in (0, 1):
            sel = grid.cap_id == cap
            zeta = grid.zeta[sel]
            for q, b, const in _local_point_data(self.surface, cap, grid):
                if q is None:
                    log_s2 = -np.log1p(np.abs(zeta) ** 2)
                else:
                    log_s2 = const + np.log(np.abs(zeta - q) ** 2) - np.log1p(np.abs(zeta) ** 2)
                u[sel] -= (b - 1.0) * log_s2
        self.log_regular = u

    def _quasi_isometry(self):
        grid = self.grid
        ratios = []
        for p, b, cap, q, rad in self.surface.charts():
            sel = grid.cap_id == cap
            dist = np.abs(grid.zeta[sel] - q)
            in_chart = dist <= rad
            if not np.any(in_chart):
                continue
            model = 0.5 * b ** 2 * dist[in_chart] ** (2.0 * b - 2.0)
            ratios.append(self.g[sel][in_chart] / model)
        if ratios:
            r = np.concatenate(ratios)
            self.Q = float(max(np.max(r), 1.0 / np.min(r)))
        else:
            self.Q = 1.0

    # -- basic calculus -----------------------------------------------------

    def integrate(self, u):
        return float(np.sum(self.vol * np.asarray(u)))

    def mean(self, u):
        return self.integrate(u) / self.total_volume

    def mean_zero(self, u):
        return np.asarray(u) - self.mean(u)

    def norm_l2(self, u):
        return float(np.sqrt(self.integrate(np.abs(u) ** 2)))

    def laplacian(self, u):
        """Analyst-sign cone Laplacian (1/g) d^2 u / dz dzbar.

        Finite-volume form: the flux integral of ddbar u over a cell
        divided by the metric volume of the cell, which keeps the operator
        pointwise consistent through the graded apex cells and exactly
        self-adjoint in L^2(omega).
        """
        return (self.grid.F @ np.asarray(u)) / (2.0 * self.vol)

    def laplace_matrix(self):
        import scipy.sparse as sp
        return sp.diags(1.0 / (2.0 * self.vol)) @ self.grid.F

    def scalar_curvature(self, collar=0.02):
        """Scalar curvature field and the mask of trustworthy nodes.

        S = -Delta(log g)_regularised + (2 + sum_p (beta_p - 1)) * g_FS/g,
        splitting the cone factors of log g analytically; nodes within
        ``collar`` (chart distance) of a cone point are excluded from the
        returned mask.
        """
        if self._S is None:
            grid = self.grid
            csum = 2.0 + sum(b - 1.0 for b in self.surface.angles)
            self._S = (-(grid.F @ self.log_regular) / (2.0 * self.vol)
                       + csum * _fs_local(grid.zeta) / self.g)
        mask = self.collar_mask(collar)
        return self._S, mask

    def collar_mask(self, collar):
        """True on nodes farther than ``collar`` (chart distance) from every
        cone point."""
        grid = self.grid
        mask = np.ones(grid.n_nodes, dtype=bool)
        if collar is None or collar <= 0:
            return mask
        # local cell size: the exclusion radius never drops below a few
        # cells, so unresolved mid-grid cone points stay masked and the
        # excluded region converges to the fixed collar under refinement
        cell = np.maximum(grid.r_out_local - grid.r_in_local,
                          grid.r_local * grid.dtheta_node)
        for p, b, cap, q, rad in self.surface.charts():
            sel = grid.cap_id == cap
            dist = np.abs(grid.zeta[sel] - q)
            sub = mask[sel]
            sub[dist < np.maximum(collar, 3.0 * cell[sel])] = False
            mask[sel] = sub
        return mask

    def ricci_sup(self, collar=0.02):
        S, mask = self.scalar_curvature(collar)
        # on a curve |Ric|_omega = |S| pointwise
        return float(np.max(np.abs(S[mask])))

    def christoffel_profile(self):
        """Sup of the weighted Christoffel combination per cone chart.

        On a curve only |z|^(1-beta) * (Gamma + (1-beta)/z) survives from
        the model-metric connection list; finiteness at the nodes is the
        recorded invariant.
        """
        grid = self.grid
        dlog = grid.d_zeta(np.log(self.g))
        inner = self.collar_mask(1e-3)
        out = {}
        for p, b, cap, q, rad in self.surface.charts():
            sel = grid.cap_id == cap
            zeta = grid.zeta[sel]
            dist = np.abs(zeta - q)
            in_chart = (dist <= rad) & inner[sel]
            if not np.any(in_chart):
                out[str(p)] = 0.0
                continue
            combo = dlog[sel][in_chart] + (1.0 - b) / (zeta[in_chart] - q)
            w = dist[in_chart] ** (1.0 - b) * np.abs(combo)
            out[str(p)] = float(np.max(w))
        return out

    def refined(self, factor=1.5):
        """The same metric rebuilt on a refined grid (analytic kinds only)."""
        if self.g_fn is None:
            raise ValueError("refinement requires an analytic conformal factor")
        grid = self.surface.grid(refine=factor)
        g = np.empty(grid.n_nodes)
        for cap in (0, 1):
            sel = grid.cap_id == cap
            g[sel] = self.g_fn(cap, grid.zeta[sel])
        return ConeMetricField(self.surface, self.kind, grid, g,
                               delta=self.delta, g_fn=self.g_fn,
                               s_exact=self.s_exact)


def _football_g(surface):
    b0 = surface.angle_at(0)
    b1 = surface.angle_at(INF)
    if abs(b0 - b1) > 1e-14:
        raise ValueError("football metric needs equal angles at 0 and infinity")
    if surface.mid_points:
        raise ValueError("football metric carries cone points only at 0 and infinity")
    b = b0

    def g_fn(cap, zeta):
        r = np.abs(zeta)
        if b == 1.0:
            return 1.0 / (1.0 + r ** 2) ** 2
        return b ** 2 * r ** (2 * b - 2.0) / (1.0 + r ** (2 * b)) ** 2
    return g_fn, b


def _model_g(surface, delta):
    pts = [(q, b, c) for q, b, c in _local_point_data(surface, 0, None)]

    def g_fn(cap, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        s = np.abs(zeta) ** 2
        g = _fs_local(zeta)
        for q, b, const in _local_point_data(surface, cap, None):
            if q is None:
                L = -np.log1p(s)
                dL = -np.conj(zeta) / (1.0 + s)
            else:
                L = const + np.log(np.abs(zeta - q) ** 2) - np.log1p(s)
                dL = 1.0 / (zeta - q) - np.conj(zeta) / (1.0 + s)
            ddL = -1.0 / (1.0 + s) ** 2
            g = g + 0.5 * delta * np.exp(b * L) * (b * ddL + b ** 2 * np.abs(dL) ** 2)
        return g

    del pts
    return g_fn


def _flat_cone_g(surface):
    if len(surface.cone_points) != 1 or surface.cone_points[0] != 0:
        raise ValueError("flat cone field expects a single cone point at 0")
    b = surface.angles[0]

    def g_fn(cap, zeta):
        r = np.abs(zeta)
        if cap == 0:
            return 0.5 * b ** 2 * r ** (2 * b - 2.0)
        return 0.5 * b ** 2 * r ** (-2 * b - 2.0)
    return g_fn


def build_metric(surface, kind, phi=None, delta=None, refine=1.0, g_fn=None):
    """Construct a ConeMetricField of the given kind.

    kind is one of ``football`` (constant-curvature, equal angles at 0 and
    infinity; the round sphere when there are no cone points), ``model``
    (Donaldson's omega_D = omega_FS + delta/2 * i ddbar |s|^(2 beta)),
    ``flat_cone`` (the non-compact chart model, for chart-level work),
    ``explicit`` (a potential phi sampled on the grid, on top of the model
    metric), or ``custom`` (an analytic cap-local conformal factor
    g_fn(cap, zeta)).
    """
    grid = surface.grid(refine=refine)
    if kind == "football":
        if surface.cone_points and set(map(abs, surface.cone_points)) - {0.0, np.inf}:
            raise ValueError("football metric carries cone points only at 0 and infinity")
        g_fn, b = _football_g(surface) if surface.cone_points else (
            lambda cap, zeta: 1.0 / (1.0 + np.abs(zeta) ** 2) ** 2, 1.0)
        s_exact = 2.0
    elif kind == "model":
        if delta is None:
            pts = [p for p in surface.cone_points]
            if len(pts) >= 2:
                chord = min(_chordal(p, q) for i, p in enumerate(pts)
                            for q in pts[i + 1:])
            else:
                chord = 2.0
            delta = 0.1 * chord
        g_fn = _model_g(surface, delta)
        s_exact = None
    elif kind == "flat_cone":
        g_fn = _flat_cone_g(surface)
        s_exact = 0.0
    elif kind == "custom":
        if g_fn is None:
            raise ValueError("custom kind requires g_fn(cap, zeta)")
        s_exact = None
    elif kind == "explicit":
        if phi is None:
            raise ValueError("explicit kind requires a potential phi")
        base = build_metric(surface, "model", delta=delta, refine=refine)
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (grid.n_nodes,):
            raise ValueError("potential grid does not match the surface grid")
        g = base.g + (grid.F @ phi) / (4.0 * grid.W)
        return ConeMetricField(surface, kind, grid, g, delta=base.delta,
                               potential=phi)
    else:
        raise ValueError(f"unknown metric kind {kind!r}")

    g = np.empty(grid.n_nodes)
    for cap in (0, 1):
        sel = grid.cap_id == cap
        g[sel] = g_fn(cap, grid.zeta[sel])
    fld = ConeMetricField(surface, kind, grid, g, delta=delta, g_fn=g_fn,
                          s_exact=s_exact)
    if phi is not None and kind != "explicit":
        raise ValueError("potential only supported with kind='explicit'")
    return fld


def _chordal(p, q):
    if np.isinf(abs(p)) and np.isinf(abs(q)):
        return 0.0
    if np.isinf(abs(p)):
        return 2.0 / np.sqrt(1.0 + abs(q) ** 2)
    if np.isinf(abs(q)):
        return 2.0 / np.sqrt(1.0 + abs(p) ** 2)
    return 2.0 * abs(p - q) / np.sqrt((1.0 + abs(p) ** 2) * (1.0 + abs(q) ** 2))


# ----------------------------------------------------------------------
# weighted Holder norms


class NormReport:
    """Estimated weighted Holder norm with its per-chart breakdown."""

    def __init__(self, order, alpha, value, per_chart, weighted_profiles, seed):
        self.order = order
        self.alpha = alpha
        self.value = value
        self.per_chart = per_chart
        self.weighted_profiles = weighted_profiles
        self.seed = seed

    def as_dict(self):
        return {
            "order": self.order,
            "alpha": self.alpha,
            "value": self.value,
            "per_chart": self.per_chart,
            "weighted_profiles": self.weighted_profiles,
            "seed": self.seed,
        }

    def __repr__(self):
        return (f"NormReport(order={self.order}, alpha={self.alpha}, "
                f"value={self.value:.6g})")


def _pair_samples(n, n_pairs, seed):
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=n_pairs)
    j = rng.integers(0, n, size=n_pairs)
    keep = i != j
    return i[keep], j[keep]


def _holder_quotient(values, w_coords, alpha, n_pairs, seed):
    """Max sampled quotient |f(x)-f(y)| / d(x,y)^alpha at scales <= 1."""
    n = len(values)
    if n < 2:
        return 0.0
    i, j = _pair_samples(n, n_pairs, seed)
    d = np.abs(w_coords[i] - w_coords[j])
    ok = (d > 1e-14) & (d <= 1.0)
    if not np.any(ok):
        return 0.0
    q = np.abs(values[i] - values[j])[ok] / d[ok] ** alpha
    return float(np.max(q))


def holder_norm(f, order, alpha, surface, seed=0, n_pairs=None):
    """Estimate the C^{,alpha,beta} family of norms of a grid function.

    Order 0 returns sup + the Holder quotient sampled in the W-image of
    each cone chart (and in the plain coordinate on the equatorial band);
    orders 2-4 add the sup of each |z|^{k(1-beta)}-weighted derivative
    combination of the cone-chart derivative lists, including the
    lower-order corrections of the pure fourth derivative.
    """
    if order not in (0, 2, 3, 4):
        raise ValueError("order must be one of 0, 2, 3, 4")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"Holder exponent must lie in (0,1), got {alpha}")
    grid = surface.grid()
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n_nodes,):
        raise ValueError("sample vector does not match the surface grid")
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite samples")
    if order >= 3 and min(c.n_rho for c in grid.caps) < 16:
        raise InsufficientResolutionError(
            "order 3/4 norms need at least 16 radial cells per chart")
    if n_pairs is None:
        n = grid.n_nodes
        n_pairs = int(8 * n * max(1, int(np.log2(n))))
        n_pairs = min(n_pairs, 2_000_000)

    per_chart = {}
    sup = float(np.max(np.abs(f)))
    quot = 0.0
    # quotient in the W-image of each cap
    for cap in (0, 1):
        sel = grid.cap_id == cap
        w = grid.rho[sel] * np.exp(1j * grid.theta_local[sel])
        q = _holder_quotient(f[sel], w, alpha, n_pairs // 3, seed + cap)
        per_chart[f"cap{cap}"] = q
        quot = max(quot, q)
    # plain-coordinate quotient on the equatorial band
    band = np.abs(np.abs(grid.z) - grid.interface_radius) < 0.6 * grid.interface_radius
    if np.any(band):
        q = _holder_quotient(f[band], grid.z[band], alpha, n_pairs // 3, seed + 7)
        per_chart["band"] = q
        quot = max(quot, q)

    profiles = {}
    if order >= 2:
        df = grid.d_zeta(f)
        ddf = grid.A @ f
        for p, b, cap, qloc, rad in surface.charts():
            sel = grid.cap_id == cap
            dist = np.abs(grid.zeta[sel] - qloc)
            profiles[f"d1[{p}]"] = float(np.max(dist ** (1 - b) * np.abs(df[sel])))
            profiles[f"d1dbar1[{p}]"] = float(np.max(dist ** (2 - 2 * b) * np.abs(ddf[sel])))
        if not surface.cone_points:
            profiles["d1"] = float(np.max(np.abs(df)))
            profiles["d1dbar1"] = float(np.max(np.abs(ddf)))
    if order >= 3:
        ddf = grid.A @ f
        d3 = grid.d_zeta(ddf)
        for p, b, cap, qloc, rad in surface.charts():
            sel = grid.cap_id == cap
            zloc = grid.zeta[sel] - qloc
            dist = np.abs(zloc)
            cov3 = d3[sel] + (1 - b) / zloc * ddf[sel]
            profiles[f"d3[{p}]"] = float(np.max(dist ** (3 - 3 * b) * np.abs(cov3)))
    if order >= 4:
        ddf = grid.A @ f
        d3 = grid.d_zeta(ddf)
        d3b = grid.d_zetabar(ddf)
        d4 = grid.A @ ddf
        for p, b, cap, qloc, rad in surface.charts():
            sel = grid.cap_id == cap
            zloc = grid.zeta[sel] - qloc
            dist = np.abs(zloc)
            combo = (d4[sel]
                     + (1 - b) / np.conj(zloc) * d3[sel]
                     + (1 - b) / zloc * d3b[sel]
                     + (1 - b) ** 2 / dist ** 2 * ddf[sel])
            profiles[f"d4[{p}]"] = float(np.max(dist ** (4 - 4 * b) * np.abs(combo)))

    value = sup + quot + sum(profiles.values())
    return NormReport(order, alpha, value, per_chart, profiles, seed)
