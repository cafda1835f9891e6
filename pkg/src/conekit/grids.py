"""Polar W-coordinate grids on the marked sphere and shared discrete operators.

The sphere is covered by two polar caps glued along the circle |z| = R.
Cap 0 is centred at z = 0, cap 1 at z = infinity (local coordinate w = 1/z).
The radial mesh comes from one globally smooth map: with xi uniform on
(0,1) and faces at multiples of 1/(2 n_rho), the global log-radius is

    t(xi) = log(2 xi)/beta0 - log(2(1-xi))/beta1 + log R,

so near each cap centre the mesh is uniform in the W-radius rho = r**beta
(the grading that makes cone metrics uniformly elliptic) while the node
sequence stays smooth through the seam at xi = 1/2 - a requirement for
second-order pointwise accuracy of composed operators there.

All operators act on flat node vectors of length ``grid.n_nodes`` (cap 0
nodes first).  The central objects:

``grid.F``   flux matrix: (F u)_n / 4 integrates ddbar u over cell n;
             symmetric, rows sum to zero exactly.
``grid.A``   (F u) / (4 W): the ddbar density in the cap-local coordinate.

Metric Laplacians are formed as (F u) / (2 V) with V the metric volume of
the cells, which keeps them pointwise consistent through the graded apex
cells and exactly self-adjoint in L^2(omega).
"""

import numpy as np
import scipy.sparse as sp

__all__ = ["Cap", "SphereGrid", "InsufficientResolutionError"]


class InsufficientResolutionError(ValueError):
    """Grid too coarse for the requested stencil."""


class Cap:
    """One polar cap: cell-centred tensor grid in (rho, theta).

    beta is the radial grading exponent (the cone angle fraction of the
    point at the cap centre, or 1.0 for a smooth centre).  rho is the
    normalised W-radius (r_local/r_edge)**beta in (0, 1]; r arrays hold the
    cap-local radii |zeta| with zeta the cap's affine coordinate.
    """

    def __init__(self, beta, n_theta, rho_nodes, rho_in, rho_out, r_edge):
        self.beta = float(beta)
        self.n_rho = len(rho_nodes)
        self.n_theta = int(n_theta)
        self.dtheta = 2.0 * np.pi / self.n_theta
        self.theta = (np.arange(self.n_theta) + 0.5) * self.dtheta
        self.rho = np.asarray(rho_nodes)
        self.rho_in = np.asarray(rho_in)
        self.rho_out = np.asarray(rho_out)
        self.r_edge = float(r_edge)
        e = 1.0 / self.beta
        self.r = r_edge * self.rho ** e
        self.r_in = r_edge * self.rho_in ** e
        self.r_out = r_edge * self.rho_out ** e
        # effective radial extent of a cell for transverse fluxes, tuned to
        # the first angular harmonic u ~ r e^{i theta}; finite at the apex
        # cell and asymptotic to log(r_out/r_in) away from it
        self.dt_transverse = (self.r_out - self.r_in) / self.r

    @property
    def size(self):
        return self.n_rho * self.n_theta


class SphereGrid:
    """Two-cap grid of the marked sphere with the shared discrete operators."""

    def __init__(self, beta0, beta_inf, n_rho, n_theta, interface_radius=1.0):
        if n_theta % 2:
            raise ValueError("n_theta must be even")
        if n_rho < 4:
            raise InsufficientResolutionError("need at least 4 radial cells")
        R = float(interface_radius)
        self.interface_radius = R
        self.beta0 = float(beta0)
        self.beta_inf = float(beta_inf)
        self.n_theta = int(n_theta)

        # global smooth radial map; xi < 1/2 is cap 0, xi > 1/2 cap 1
        n2 = 2 * int(n_rho)
        dxi = 1.0 / n2
        xi_faces = np.arange(n2 + 1) * dxi
        xi_nodes = (np.arange(n2) + 0.5) * dxi
        b0, b1 = self.beta0, self.beta_inf

        def t_of_xi(xi):
            return (np.log(2.0 * xi) / b0 - np.log(2.0 * (1.0 - xi)) / b1
                    + np.log(R))

        t_nodes = t_of_xi(xi_nodes)
        t_faces = np.empty(n2 + 1)
        t_faces[1:-1] = t_of_xi(xi_faces[1:-1])
        t_faces[0], t_faces[-1] = -np.inf, np.inf
        self._t_nodes_chain = t_nodes
        self._t_faces_chain = t_faces

        nr = int(n_rho)
        lo = slice(0, nr)          # cap 0 in chain order (apex -> seam)
        hi = slice(n2 - 1, nr - 1, -1)   # cap 1 (apex at xi=1 -> seam)
        rho0 = np.exp(b0 * (t_nodes[lo] - np.log(R)))
        rho0_in = np.exp(b0 * (t_faces[0:nr] - np.log(R)))
        rho0_out = np.exp(b0 * (t_faces[1:nr + 1] - np.log(R)))
        rho1 = np.exp(-b1 * (t_nodes[hi] - np.log(R)))
        rho1_in = np.exp(-b1 * (t_faces[n2:nr:-1] - np.log(R)))
        rho1_out = np.exp(-b1 * (t_faces[n2 - 1:nr - 1:-1] - np.log(R)))
        self.caps = [
            Cap(b0, n_theta, rho0, rho0_in, rho0_out, R),
            Cap(b1, n_theta, rho1, rho1_in, rho1_out, 1.0 / R),
        ]
        self.n_nodes = self.caps[0].size + self.caps[1].size
        self._build_node_arrays()
        self._build_pdd()
        self._build_first_derivatives()

    # ------------------------------------------------------------------
    # node bookkeeping

    def _build_node_arrays(self):
        c0, c1 = self.caps
        ncap = np.concatenate([np.zeros(c0.size, int), np.ones(c1.size, int)])
        i0, j0 = np.divmod(np.arange(c0.size), c0.n_theta)
        i1, j1 = np.divmod(np.arange(c1.size), c1.n_theta)
        self.cap_id = ncap
        self.i_idx = np.concatenate([i0, i1])
        self.j_idx = np.concatenate([j0, j1])
        self.rho = np.concatenate([c0.rho[i0], c1.rho[i1]])
        self.theta_local = np.concatenate([c0.theta[j0], c1.theta[j1]])
        self.r_local = np.concatenate([c0.r[i0], c1.r[i1]])
        self.r_in_local = np.concatenate([c0.r_in[i0], c1.r_in[i1]])
        self.r_out_local = np.concatenate([c0.r_out[i0], c1.r_out[i1]])
        # global coordinates: t = log|z|, theta measured in the z chart
        self.t_global = np.concatenate([np.log(c0.r[i0]),
                                        -np.log(c1.r[i1])])
        theta_glob = np.concatenate([c0.theta[j0], -c1.theta[j1]])
        self.z = np.exp(self.t_global + 1j * theta_glob)
        # local affine coordinate of each node in its own cap
        self.zeta = self.r_local * np.exp(1j * self.theta_local)
        # Euclidean cell areas in the cap-local coordinate
        dtheta = np.where(ncap == 0, c0.dtheta, c1.dtheta)
        self.W = 0.5 * dtheta * (self.r_out_local ** 2 - self.r_in_local ** 2)
        self.dtheta_node = dtheta
        self.cap_beta = np.where(ncap == 0, c0.beta, c1.beta)
        self.offsets = (0, c0.size)

    def node(self, cap, i, j):
        c = self.caps[cap]
        return self.offsets[cap] + i * c.n_theta + (j % c.n_theta)

    def partner_j(self, j):
        """Theta index of the facing cell on the other cap (theta -> -theta)."""
        return (self.n_theta - 1 - j) % self.n_theta

    # ------------------------------------------------------------------
    # finite-volume d^2/dz dzbar

    def _flux_family(self):
        """F(t), F'(t): one smooth increasing flux parameter, asymptotic to
        the bounded-harmonic parameter e^{2 beta t} at each apex."""
        b0, b1 = self.beta0, self.beta_inf
        lR = np.log(self.interface_radius)

        def F(t):
            tt = np.asarray(t, dtype=float) - lR
            out = np.empty_like(tt)
            neg = tt < 0
            s = np.exp(2.0 * b0 * tt[neg])
            out[neg] = s / (1.0 + s)
            nu = np.exp(-2.0 * b1 * tt[~neg])
            out[~neg] = 0.5 + (b0 / b1) * (0.5 - nu / (1.0 + nu))
            return out

        def dF(t):
            tt = np.asarray(t, dtype=float) - lR
            out = np.empty_like(tt)
            neg = tt < 0
            s = np.exp(2.0 * b0 * tt[neg])
            out[neg] = 2.0 * b0 * s / (1.0 + s) ** 2
            nu = np.exp(-2.0 * b1 * tt[~neg])
            out[~neg] = 2.0 * b0 * nu / (1.0 + nu) ** 2
            return out

        return F, dF

    def _build_pdd(self):
        rows, cols, vals = [], [], []

        def add_edge(n, m, K):
            rows.extend([n, n, m, m])
            cols.extend([n, m, m, n])
            vals.extend([-K, K, -K, K])

        F, dF = self._flux_family()
        t_nodes = self._t_nodes_chain
        t_faces = self._t_faces_chain
        n2 = len(t_nodes)
        nr = self.caps[0].n_rho
        Fn = F(t_nodes)
        dtheta = self.caps[0].dtheta

        def chain_node(k):
            # chain index (apex0 ... seam ... apex1) -> grid node
            if k < nr:
                return lambda j: self.node(0, k, j)
            return lambda j: self.node(1, n2 - 1 - k, self.partner_j(j))

        # radial edges along the global chain, one smooth conductance family
        for k in range(n2 - 1):
            K = dtheta * dF(t_faces[k + 1]) / (Fn[k + 1] - Fn[k])
            a, b = chain_node(k), chain_node(k + 1)
            for j in range(self.n_theta):
                add_edge(a(j), b(j), float(K))

        # transverse edges within each cap; gamma rescales the periodic
        # 3-point stencil so the first angular harmonic is differenced
        # exactly (its apex amplification by 1/r^2 would otherwise leave a
        # resolution-independent error profile)
        for cap in (0, 1):
            c = self.caps[cap]
            gamma = c.dtheta ** 2 / (4.0 * np.sin(c.dtheta / 2.0) ** 2)
            for i in range(c.n_rho):
                K = gamma * c.dt_transverse[i] / c.dtheta
                for j in range(c.n_theta):
                    add_edge(self.node(cap, i, j), self.node(cap, i, j + 1), K)

        M = sp.coo_matrix((vals, (rows, cols)),
                          shape=(self.n_nodes, self.n_nodes)).tocsr()
        M.sort_indices()
        self.F = M
        self.A = sp.diags(1.0 / (4.0 * self.W)) @ M
        self.A.sort_indices()

    # ------------------------------------------------------------------
    # first derivatives (global t and global theta orientation)

    def _build_first_derivatives(self):
        nt_rows, nt_cols, nt_vals = [], [], []
        tg = self.t_global

        def add_dt(n, n_lo, n_hi):
            t_lo, t0, t_hi = tg[n_lo], tg[n], tg[n_hi]
            a, b = t0 - t_lo, t_hi - t0
            w_lo = -b / (a * (a + b))
            w_hi = a / (b * (a + b))
            nt_rows.extend([n, n, n])
            nt_cols.extend([n_lo, n, n_hi])
            nt_vals.extend([w_lo, -(w_lo + w_hi), w_hi])

        for cap in (0, 1):
            c = self.caps[cap]
            for i in range(c.n_rho):
                for j in range(c.n_theta):
                    n = self.node(cap, i, j)
                    inner = None if i == 0 else self.node(cap, i - 1, j)
                    if i < c.n_rho - 1:
                        outer = self.node(cap, i + 1, j)
                    else:
                        co = self.caps[1 - cap]
                        outer = self.node(1 - cap, co.n_rho - 1,
                                          self.partner_j(j))
                    lo, hi = (inner, outer) if cap == 0 else (outer, inner)
                    if lo is None or hi is None:
                        m = hi if lo is None else lo
                        d = tg[m] - tg[n]
                        nt_rows.extend([n, n])
                        nt_cols.extend([n, m])
                        nt_vals.extend([-1.0 / d, 1.0 / d])
                    else:
                        add_dt(n, lo, hi)
        self.D_t = sp.coo_matrix((nt_vals, (nt_rows, nt_cols)),
                                 shape=(self.n_nodes, self.n_nodes)).tocsr()

        th_rows, th_cols, th_vals = [], [], []
        for cap in (0, 1):
            c = self.caps[cap]
            sign = 1.0 if cap == 0 else -1.0  # global theta = -local on cap 1
            w = sign / (2.0 * c.dtheta)
            for i in range(c.n_rho):
                for j in range(c.n_theta):
                    n = self.node(cap, i, j)
                    th_rows.extend([n, n])
                    th_cols.extend([self.node(cap, i, j + 1),
                                    self.node(cap, i, j - 1)])
                    th_vals.extend([w, -w])
        self.D_theta = sp.coo_matrix((th_vals, (th_rows, th_cols)),
                                     shape=(self.n_nodes, self.n_nodes)).tocsr()

    def d_zeta(self, u):
        """Cap-local holomorphic derivative du/dzeta at every node."""
        sign = np.where(self.cap_id == 0, 1.0, -1.0)
        dt_loc = sign * (self.D_t @ u)
        dth_loc = sign * (self.D_theta @ u)
        return np.exp(-1j * self.theta_local) / (2.0 * self.r_local) * (dt_loc - 1j * dth_loc)

    def d_zetabar(self, u):
        sign = np.where(self.cap_id == 0, 1.0, -1.0)
        dt_loc = sign * (self.D_t @ u)
        dth_loc = sign * (self.D_theta @ u)
        return np.exp(1j * self.theta_local) / (2.0 * self.r_local) * (dt_loc + 1j * dth_loc)

    # ------------------------------------------------------------------
    # sampling helpers

    def apex_value(self, u, cap):
        """Extrapolated value of a grid function at a cap centre.

        Averages the innermost two rings over theta and extrapolates the
        axisymmetric radial profile linearly in rho**2 to rho = 0.
        """
        c = self.caps[cap]
        base = self.offsets[cap]
        ring0 = u[base:base + c.n_theta]
        ring1 = u[base + c.n_theta:base + 2 * c.n_theta]
        m0 = np.mean(ring0)
        m1 = np.mean(ring1)
        s0, s1 = c.rho[0] ** 2, c.rho[1] ** 2
        val = m0 - s0 * (m1 - m0) / (s1 - s0)
        return float(val.real) if not np.iscomplexobj(u) else complex(val)

    def interpolate(self, u, zpts):
        """Bilinear interpolation of a grid function at sphere points.

        Points are given in the z chart; points in the cap-1 region are
        looked up through w = 1/z.  Near-apex points fall back to the
        extrapolated apex value.
        """
        u = np.asarray(u)
        zpts = np.atleast_1d(np.asarray(zpts, dtype=complex))
        out = np.empty(zpts.shape, dtype=u.dtype)
        R = self.interface_radius
        for k, z in enumerate(zpts):
            if np.isinf(abs(z)) or abs(z) > R:
                cap, zeta = 1, (0.0 if np.isinf(abs(z)) else 1.0 / z)
            else:
                cap, zeta = 0, z
            c = self.caps[cap]
            r = abs(zeta)
            if r < c.r[0]:
                out[k] = self.apex_value(u, cap)
                continue
            i0 = int(np.clip(np.searchsorted(c.r, r) - 1, 0, c.n_rho - 2))
            ai = (r - c.r[i0]) / (c.r[i0 + 1] - c.r[i0])
            ai = min(max(ai, 0.0), 1.0)
            th = np.angle(zeta) % (2 * np.pi)
            fj = th / c.dtheta - 0.5
            j0 = int(np.floor(fj)) % c.n_theta
            aj = fj - np.floor(fj)
            j1 = (j0 + 1) % c.n_theta
            base = self.offsets[cap]

            def val(i, j):
                return u[base + i * c.n_theta + j]

            out[k] = ((1 - ai) * (1 - aj) * val(i0, j0)
                      + (1 - ai) * aj * val(i0, j1)
                      + ai * (1 - aj) * val(i0 + 1, j0)
                      + ai * aj * val(i0 + 1, j1))
        return out if out.shape != (1,) else out[0]

    def sample(self, fn):
        """Evaluate a callable of the global z coordinate at every node."""
        return np.asarray(fn(self.z))
