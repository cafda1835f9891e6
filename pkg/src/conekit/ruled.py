"""The projectivised bundle X = P(E*) over the marked sphere: Fubini-Study
lift, adiabatic metrics omega_k = k pi* omega_B + omega_hat, pointwise
scalar curvature by nested complex stencils, expansion-term extraction,
the vertical fiber operator, the endomorphism <-> eigenfunction
dictionary, the linearisation DA1 and the first approximate-cscK
corrective step.

Numerics fix the fiber rank at two (the fiber is P^1 and reuses the
surface grid machinery); the data model carries general rank.
"""

import numpy as np

from .cone_geometry import ConeSurface, build_metric
from . import elliptic
from .he_flow import (HermitianField, curvature_contraction, contraction_endo,
                      endo_norm, _adj)

__all__ = [
    "AdiabaticMetric",
    "RuledPoint",
    "FiberGrid",
    "ObstructionError",
    "DA1_apply",
    "approx_cscK_step",
    "endo_eigen_dictionary",
    "endo_from_fiber_function",
    "expansion_terms",
    "fubini_study_lift",
    "ruled_average_expansion",
    "scalar_curvature_at",
    "vertical_operator",
]

# normalisation of the curvature term in the k^-1 expansion coefficient,
# pinned by matching the flat-bundle case and the diagonal-twist ladder
# against the stencil evaluator (see tests); value set after calibration
S1_CURVATURE_FACTOR = 1.0


class ObstructionError(RuntimeError):
    """The linearised corrective equation has a kernel (the hypothesis of
    the isomorphism fails: nontrivial tangent holomorphic data)."""


class RuledPoint:
    """Point of P(E*): base position and a fiber covector class [xi]."""

    def __init__(self, base_point, xi):
        self.base_point = complex(base_point)
        xi = np.asarray(xi, dtype=complex)
        n = np.linalg.norm(xi)
        if n == 0 or not np.all(np.isfinite(xi)):
            raise ValueError("fiber direction must be a nonzero finite covector")
        self.xi = xi / n

    def __repr__(self):
        return f"RuledPoint(z={self.base_point}, xi={np.round(self.xi, 4)})"


def fubini_study_lift(h, v, w, xi):
    """hat h(v^, w^)(xi) = xi(v) conj(xi(w)) / |xi|^2_{h*} for h on E.

    h is the Gram matrix with |u|^2_h = u^dagger h u; the dual norm is
    |xi|^2_{h*} = xi h^{-1} xi^dagger for row covectors.
    """
    h = np.asarray(h, dtype=complex)
    v = np.asarray(v, dtype=complex)
    w = np.asarray(w, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    if not np.any(xi):
        raise ValueError("the covector xi must be nonzero")
    denom = np.real(xi @ np.linalg.solve(h, np.conj(xi)))
    return complex((xi @ v) * np.conj(xi @ w) / denom)


class AdiabaticMetric:
    """omega_k = k pi* omega_B + omega_hat_E on X = P(E*).

    The bundle metric enters through an analytic callable
    H_fn(cap, zeta) -> (r, r) Gram matrices (an analytic h_E, the model
    h_0, or a smooth interpolant); the base enters through the cap-local
    Kahler potential of the ConeMetricField.
    """

    def __init__(self, k, base_metric, H_fn, rank=2):
        if k < 1:
            raise ValueError("adiabatic parameter k must be >= 1")
        self.k = float(k)
        self.base = base_metric
        self.H_fn = H_fn
        self.rank = int(rank)
        self.potential_fn = _base_potential(base_metric)

    def local_potential(self, cap):
        """Callable Phi(zeta, u) = k phi_B + log |xi_u|^2_{h*} in the cap
        chart, with the affine fiber chart u around a reference covector
        set by ``fiber_chart``."""
        raise NotImplementedError("use potential_at with a RuledPoint")

    def potential_at(self, p):
        """(Phi, z0) with Phi(z, u) the local Kahler potential around the
        ruled point p: fiber chart xi(u) = xi0 + u xi0_perp."""
        cap, z0 = _cap_coords(self.base, p.base_point)
        xi0 = p.xi
        perp = _perp(xi0)
        phi_b = self.potential_fn
        H_fn = self.H_fn
        k = self.k

        def Phi(z, u):
            xi = xi0 + u * perp
            H = H_fn(cap, np.atleast_1d(z))[0]
            q = np.real(xi @ np.linalg.solve(H, np.conj(xi)))
            return k * phi_b(cap, z) + np.log(q)

        return Phi, z0


def _perp(xi):
    v = np.array([-np.conj(xi[1]), np.conj(xi[0])], dtype=complex)
    return v / np.linalg.norm(v)


def _cap_coords(metric, z):
    R = metric.grid.interface_radius
    if np.isinf(abs(z)):
        return 1, 0.0
    if abs(z) <= R:
        return 0, complex(z)
    return 1, 1.0 / complex(z)


def _base_potential(metric):
    """Cap-local Kahler potential of the base metric (analytic kinds)."""
    kind = metric.kind
    surf = metric.surface
    if kind == "football":
        b = surf.angle_at(0) if surf.cone_points else 1.0

        def phi(cap, zeta):
            return np.log1p(np.abs(zeta) ** (2 * b))
        return phi
    if kind == "model":
        delta = metric.delta
        from .cone_geometry import _local_point_data

        def phi(cap, zeta):
            zeta = np.asarray(zeta, dtype=complex)
            s = np.abs(zeta) ** 2
            out = np.log1p(s)
            for q, bb, const in _local_point_data(surf, cap, None):
                if q is None:
                    L = -np.log1p(s)
                else:
                    L = const + np.log(np.abs(zeta - q) ** 2) - np.log1p(s)
                out = out + 0.5 * delta * np.exp(bb * L)
            return out
        return phi
    if getattr(metric, "potential_fn", None) is not None:
        return metric.potential_fn
    raise ValueError(f"no analytic potential for metric kind {kind!r}")


# ----------------------------------------------------------------------
# nested complex stencils

def _complex_hessian(f, w0, h):
    """Hermitian matrix d_i d_jbar f at w0 in C^n by real central stencils."""
    n = len(w0)
    H = np.zeros((n, n), dtype=complex)
    f0 = f(w0)
    # diagonal terms: quarter of the real Laplacian in the i-th plane
    for i in range(n):
        ei = np.zeros(n, complex)
        ei[i] = 1.0
        fxx = f(w0 + h * ei) + f(w0 - h * ei) - 2 * f0
        fyy = f(w0 + 1j * h * ei) + f(w0 - 1j * h * ei) - 2 * f0
        H[i, i] = (fxx + fyy) / (4 * h * h)
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n, complex)
            ej = np.zeros(n, complex)
            ei[i] = 1.0
            ej[j] = 1.0

            def mixed(a, b):
                return (f(w0 + h * a + h * b) - f(w0 + h * a - h * b)
                        - f(w0 - h * a + h * b) + f(w0 - h * a - h * b)) \
                    / (4 * h * h)

            re = mixed(ei, ej) + mixed(1j * ei, 1j * ej)
            im = mixed(ei, 1j * ej) - mixed(1j * ei, ej)
            H[i, j] = (re + 1j * im) / 4.0
            H[j, i] = np.conj(H[i, j])
    return H


def _scalar_curvature_once(Phi, w0, h_in, h_out):
    def logdet(w):
        G = _complex_hessian(Phi, w, h_in)
        det = np.real(np.linalg.det(G))
        if det <= 0:
            raise ValueError("degenerate metric on the stencil")
        return np.log(det)

    G0 = _complex_hessian(Phi, w0, h_in)
    L = _complex_hessian(logdet, w0, h_out)
    return float(-np.real(np.trace(np.linalg.solve(G0, L))))


def scalar_curvature_at(metric, p, step=0.04, richardson=True):
    """Pointwise scalar curvature of omega_k at a ruled point by nested
    central stencils of the local potential; returns (S, stencil_error)
    where the error is the Richardson consistency gap."""
    Phi, z0 = metric.potential_at(p)

    def F(w):
        return Phi(z0 + w[0], w[1])

    w0 = np.zeros(2, complex)
    s1 = _scalar_curvature_once(F, w0, step, step)
    if not richardson:
        return s1, np.nan
    s2 = _scalar_curvature_once(F, w0, step / 2, step / 2)
    s_ext = (4.0 * s2 - s1) / 3.0
    return s_ext, abs(s2 - s1) / 3.0


# ----------------------------------------------------------------------
# expansion terms

def _lambda_f_analytic(base, H_fn, cap, z0, deriv_step=1e-4):
    """Lambda F endomorphism of the analytic bundle metric at a base point,
    via Richardson complex stencils of H."""
    from .cone_geometry import fd_dz, fd_dzbar

    def H_at(z):
        return H_fn(cap, np.atleast_1d(z))[0]

    h = max(abs(z0), 0.1) * deriv_step
    H0 = H_at(z0)
    dz = np.zeros_like(H0)
    db = np.zeros_like(H0)
    dd = np.zeros_like(H0)
    r = H0.shape[0]
    for a in range(r):
        for b in range(r):
            comp = lambda z: H_at(z)[a, b]  # noqa: E731
            dz[a, b] = fd_dz(comp, z0, deriv_step)
            db[a, b] = fd_dzbar(comp, z0, deriv_step)
            # mixed second derivative d_z d_zbar via 4-point real stencils
            dd[a, b] = (comp(z0 + h) + comp(z0 - h) + comp(z0 + 1j * h)
                        + comp(z0 - 1j * h) - 4 * comp(z0)) / (4 * h * h)
    g0 = _g_of(base, cap, z0)
    low = (-dd + dz @ np.linalg.solve(H0, db)) / g0
    low = 0.5 * (low + np.conj(low.T))
    return np.linalg.solve(H0, low)


def _g_of(base, cap, z0):
    if base.g_fn is not None:
        return float(np.real(base.g_fn(cap, np.atleast_1d(z0))[0]))
    return float(base.grid.interpolate(base.g, z0 if cap == 0 else 1.0 / z0))


def expansion_terms(base_metric, H_fn, p, rank=2):
    """(S0, S1) of the adiabatic expansion at a ruled point:

        S0 = r(r-1),
        S1 = S(omega_B) + 2 r c_F tr([Lambda F]^0 v v*_h / |v|^2_h),

    with the curvature factor pinned by the flat and diagonal ladders.
    """
    r = rank
    cap, z0 = _cap_coords(base_metric, p.base_point)
    s_base = _base_scalar_at(base_metric, cap, z0)
    endo = _lambda_f_analytic(base_metric, H_fn, cap, z0)
    endo0 = endo - np.trace(endo) / r * np.eye(r)
    H0 = H_fn(cap, np.atleast_1d(z0))[0]
    v = np.linalg.solve(H0, np.conj(p.xi))
    t = np.real((np.conj(v) @ H0 @ endo0 @ v) / (np.conj(v) @ H0 @ v))
    s1 = s_base + 2.0 * r * S1_CURVATURE_FACTOR * t
    return float(r * (r - 1)), float(s1)


def _base_scalar_at(metric, cap, z0):
    if metric.s_exact is not None:
        return float(metric.s_exact)
    S, _ = metric.scalar_curvature()
    zg = z0 if cap == 0 else (np.inf if z0 == 0 else 1.0 / z0)
    return float(metric.grid.interpolate(S, zg))


def ruled_average_expansion(base_class, beta, n_points, vol_base):
    """Coefficients (S0, S1, S2) of the topological average scalar
    curvature of [omega_k] on P(E*) for a degree-zero rank-two bundle:
    S_bar(k) = 2 + S_bar_beta(base)/k exactly."""
    sb1 = (4.0 * np.pi - (1.0 - beta) * 2.0 * np.pi * n_points) / vol_base
    return 2.0, float(sb1), 0.0


# ----------------------------------------------------------------------
# fiber machinery

class FiberGrid:
    """Round P^1 fiber with its positive Laplacian and the first
    eigenspace, shared by the vertical operator and the dictionary."""

    def __init__(self, n_rho=40, n_theta=80):
        self.surface = ConeSurface([], [], n_rho=n_rho, n_theta=n_theta)
        self.metric = build_metric(self.surface, "football")
        grid = self.metric.grid
        self.grid = grid
        # fiber coordinate u: the affine chart of the covector xi = (1, u)
        self.u = grid.z
        self._eig = None

    def laplacian_pos(self, f):
        """Positive-spectrum fiber Laplacian Delta_V."""
        return -self.metric.laplacian(f)

    def first_eigenspace(self, k_modes=3):
        if self._eig is None:
            import scipy.sparse as sp
            import scipy.sparse.linalg as spla
            Fm = (-0.5 * self.grid.F).tocsc()
            M = sp.diags(self.metric.vol).tocsc()
            vals, vecs = spla.eigsh(Fm, k=k_modes + 1, M=M, sigma=0.0,
                                    which="LM")
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
            keep = vals > 1e-8
            self._eig = (vals[keep][:k_modes],
                         [self.metric.mean_zero(vecs[:, i]) /
                          self.metric.norm_l2(vecs[:, i])
                          for i in np.where(keep)[0][:k_modes]])
        return self._eig


_FIBER_CACHE = {}


def fiber_grid(n_rho=40, n_theta=80):
    key = (n_rho, n_theta)
    if key not in _FIBER_CACHE:
        _FIBER_CACHE[key] = FiberGrid(n_rho, n_theta)
    return _FIBER_CACHE[key]


def vertical_operator(f, r=2, fiber=None):
    """(Delta_V f, L_V f) with L_V = Delta_V (Delta_V - r) on the fiber."""
    if r != 2:
        raise ValueError("fiber numerics are fixed at rank 2")
    fiber = fiber or fiber_grid()
    f = np.asarray(f, dtype=float)
    if f.shape != (fiber.grid.n_nodes,):
        raise ValueError("sample vector does not match the fiber grid")
    df = fiber.laplacian_pos(f)
    lf = fiber.laplacian_pos(df) - r * df
    return df, lf


def _projector_field(fiber, H=None):
    """P_v = v v^dagger H / |v|^2_H at every fiber node, xi = (1, u)."""
    u = fiber.u
    n = len(u)
    if H is None:
        H = np.eye(2, dtype=complex)
    Hinv = np.linalg.inv(H)
    P = np.empty((n, 2, 2), dtype=complex)
    for idx in range(n):
        xi = np.array([1.0, u[idx]])
        if np.isinf(np.abs(u[idx])):
            xi = np.array([0.0, 1.0])
        v = Hinv @ np.conj(xi)
        denom = np.real(np.conj(v) @ H @ v)
        P[idx] = np.outer(v, np.conj(v) @ H) / denom
    return P


def endo_eigen_dictionary(Phi, fiber=None, H=None):
    """Fiber function of a trace-free hermitian endomorphism:
    f_Phi([xi]) = tr(Phi v v*_h / |v|^2_h) with v the h-dual of xi."""
    Phi = np.asarray(Phi, dtype=complex)
    if np.max(np.abs(Phi - np.conj(Phi.T))) > 1e-10 * max(np.max(np.abs(Phi)), 1e-30):
        raise ValueError("endomorphism must be hermitian")
    if abs(np.trace(Phi)) > 1e-10 * max(np.max(np.abs(Phi)), 1e-30):
        raise ValueError("endomorphism must be trace free")
    fiber = fiber or fiber_grid()
    P = _projector_field(fiber, H)
    return np.real(np.einsum("ab,nba->n", Phi, P))


def endo_from_fiber_function(f, fiber=None, H=None):
    """Moment reconstruction of the trace-free hermitian endomorphism from
    a first-eigenspace fiber function: Phi = 6 <f P_v>_FS for rank 2."""
    fiber = fiber or fiber_grid()
    f = np.asarray(f, dtype=float)
    P = _projector_field(fiber, H)
    M = np.einsum("n,nab->ab", f * fiber.metric.vol, P) / fiber.metric.total_volume
    M = 6.0 * M
    M = 0.5 * (M + np.conj(M.T))
    return M - np.trace(M) / 2.0 * np.eye(2)


# ----------------------------------------------------------------------
# the linearisation and the first corrective step

def _dlambda_f(base, h_field, Phi_field, eps=1e-5):
    """Directional derivative of the curvature endomorphism
    t -> [Lambda F(h (1 + t Phi))]^0 at t = 0, by central differences."""
    H = h_field.H
    out = None
    for s in (+eps, -eps):
        Ht = H @ (np.eye(H.shape[1]) + s * Phi_field)
        Ht = 0.5 * (Ht + _adj(Ht))
        fld = HermitianField(h_field.bundle, base, Ht, check=False)
        endo = contraction_endo(fld, base)
        endo0 = endo - (np.trace(endo, axis1=1, axis2=2) / H.shape[1])[:, None, None] \
            * np.eye(H.shape[1])
        out = endo0 if out is None else (out - endo0) / (2 * eps)
    return out


def DA1_apply(base_metric, h_field, eta, Phi_field, lich=None):
    """DA1(eta, Phi): trace part Lic(eta) Id plus the trace-free
    derivative of the curvature term; the base-curve wedge term vanishes
    identically in one dimension.

    eta is a base grid function, Phi_field a trace-free hermitian
    endomorphism field (n, r, r).
    """
    r = h_field.H.shape[1]
    if lich is None:
        lich = elliptic.assemble_lichnerowicz(base_metric)
    trace_part = lich.matrix @ np.asarray(eta, dtype=float)
    dcurv = _dlambda_f(base_metric, h_field, Phi_field)
    out = -trace_part[:, None, None] * np.eye(r) \
        + 2.0 * r * S1_CURVATURE_FACTOR * dcurv
    return out


def _vectorize_tf(Phi):
    """Real coordinates (a, b, c) of the trace-free hermitian field
    Phi = [[a, b + i c], [b - i c, -a]]."""
    a = np.real(Phi[:, 0, 0])
    b = np.real(Phi[:, 0, 1])
    c = np.imag(Phi[:, 0, 1])
    return np.concatenate([a, b, c])


def _unvectorize_tf(x, n):
    a, b, c = x[:n], x[n:2 * n], x[2 * n:]
    Phi = np.zeros((n, 2, 2), dtype=complex)
    Phi[:, 0, 0] = a
    Phi[:, 1, 1] = -a
    Phi[:, 0, 1] = b + 1j * c
    Phi[:, 1, 0] = b - 1j * c
    return Phi


def _solve_trace_free(base, h_field, rhs0, tol=1e-8, maxiter=400):
    """Solve [d Lambda F[Phi]]^0 = rhs0 for a trace-free hermitian field
    by GMRES on the directional-derivative operator."""
    import scipy.sparse.linalg as spla
    n = base.grid.n_nodes

    def matvec(x):
        Phi = _unvectorize_tf(x, n)
        return _vectorize_tf(_dlambda_f(base, h_field, Phi))

    lin = spla.LinearOperator((3 * n, 3 * n), matvec=matvec)
    b = _vectorize_tf(rhs0)
    x, info = spla.gmres(lin, b, rtol=tol, maxiter=maxiter, restart=60)
    Phi = _unvectorize_tf(x, n)
    res = _vectorize_tf(_dlambda_f(base, h_field, Phi)) - b
    rel = np.linalg.norm(res) / max(np.linalg.norm(b), 1e-300)
    if info != 0 or rel > 1e-4:
        raise ObstructionError(
            f"bundle equation stagnated (relative residual {rel:.2e}); "
            "the endomorphism equation has (near-)kernel")
    return Phi


def approx_cscK_step(base_metric, h_field, H_fn=None, k_ladder=(8, 16, 32),
                     samples=None, fredholm_kwargs=None):
    """First corrective step towards an approximate cscK cone metric.

    Measures the first-order expansion coefficient field
    A1 = S(omega_B) Id + 2 r c_F [Lambda F]^0 on the base grid, solves

        DA1(eta0, Phi0) = (mean of A1) - A1     (phi0 = 0)

    through the projected Fredholm solve (trace part) and the bundle
    equation (trace-free part), and reports the k-ladder decay of the
    expansion residual before and after inserting the corrected
    first-order term.  A Lichnerowicz kernel (the football rotation field)
    is projected out and reported; a kernel of the bundle equation raises
    ObstructionError.
    """
    base = base_metric
    r = h_field.H.shape[1]
    grid = base.grid
    lich = elliptic.assemble_lichnerowicz(base)
    S, _ = base.scalar_curvature()
    S = elliptic._freeze_collar(base, S, base.collar_mask(0.02))
    endo = contraction_endo(h_field, base)
    endo0 = endo - (np.trace(endo, axis1=1, axis2=2) / r)[:, None, None] * np.eye(r)
    A1 = S[:, None, None] * np.eye(r) + 2.0 * r * S1_CURVATURE_FACTOR * endo0

    tr_field = np.real(np.trace(A1, axis1=1, axis2=2)) / r
    target = base.mean(tr_field)
    D_trace = base.mean_zero(tr_field)
    D_free = A1 - (np.real(np.trace(A1, axis1=1, axis2=2)) / r)[:, None, None] * np.eye(r)

    # trace equation: -Lic eta0 = D_trace (dS(eta) = -Lic eta)
    rep = elliptic.fredholm_solve(base, D_trace, **(fredholm_kwargs or {}))
    eta0 = rep.solution
    obstruction = 0.0
    if rep.branch == "kernel_detected":
        proj = np.asarray(D_trace, dtype=float)
        for bvec in rep.kernel_basis:
            obstruction = max(obstruction, abs(base.integrate(D_trace * bvec)))

    # trace-free equation
    sup0 = float(np.max(endo_norm(h_field, D_free)))
    if sup0 > 1e-12:
        Phi0 = _solve_trace_free(base, h_field, -D_free / (2.0 * r * S1_CURVATURE_FACTOR))
    else:
        Phi0 = np.zeros_like(h_field.H)

    corrected = A1 + DA1_apply(base, h_field, eta0, Phi0, lich=lich)
    dev_before = float(np.max(endo_norm(h_field, A1 - target * np.eye(r))))
    dev_after = float(np.max(endo_norm(h_field, corrected - target * np.eye(r))))

    decay = None
    if H_fn is not None:
        decay = _ladder_decay(base, h_field, H_fn, eta0, Phi0, k_ladder,
                              samples, target, lich)
    return {
        "eta0": eta0,
        "Phi0": Phi0,
        "phi0": 0.0,
        "first_order_deviation": dev_before,
        "first_order_deviation_corrected": dev_after,
        "kernel_obstruction": obstruction,
        "fredholm_branch": rep.branch,
        "residual_decay": decay,
    }


def _ladder_decay(base, h_field, H_fn, eta0, Phi0, k_ladder, samples,
                  s1_target, lich):
    """Log-log slopes of the expansion residual on the k-ladder with the
    constant first-order term vs the corrected first-order field."""
    if samples is None:
        samples = [RuledPoint(0.4 + 0.2j, [1.0, 0.3 - 0.2j]),
                   RuledPoint(-0.5 + 0.35j, [0.6, 1.0]),
                   RuledPoint(0.1 - 0.6j, [1.0, -0.8j])]
    r = h_field.H.shape[1]
    corr = DA1_apply(base, h_field, eta0, Phi0, lich=lich)
    res_plain, res_corr = [], []
    for k in k_ladder:
        am = AdiabaticMetric(k, base, H_fn, rank=r)
        worst_p, worst_c = 0.0, 0.0
        for p in samples:
            s_val, _ = scalar_curvature_at(am, p)
            s0, s1 = expansion_terms(base, H_fn, p, rank=r)
            cap, z0 = _cap_coords(base, p.base_point)
            s1_corr = s1 + _sample_endo(base, corr, p, cap, z0, H_fn)
            worst_p = max(worst_p, abs(s_val - s0 - s1_target / k))
            worst_c = max(worst_c, abs(s_val - s0 - s1_corr / k))
        res_plain.append(worst_p)
        res_corr.append(worst_c)
    lk = np.log(np.asarray(k_ladder, float))
    slope_plain = np.polyfit(lk, np.log(np.maximum(res_plain, 1e-14)), 1)[0]
    slope_corr = np.polyfit(lk, np.log(np.maximum(res_corr, 1e-14)), 1)[0]
    return {"k_ladder": list(k_ladder),
            "residual_plain": res_plain,
            "residual_corrected": res_corr,
            "slope_plain": float(slope_plain),
            "slope_corrected": float(slope_corr)}


def _sample_endo(base, endo_field, p, cap, z0, H_fn):
    """tr(endo P_v) at a ruled point, interpolating the endo field."""
    grid = base.grid
    zg = p.base_point
    vals = np.empty((2, 2), dtype=complex)
    for a in range(2):
        for b in range(2):
            vals[a, b] = grid.interpolate(endo_field[:, a, b], zg)
    H0 = H_fn(cap, np.atleast_1d(z0))[0]
    v = np.linalg.solve(H0, np.conj(p.xi))
    return float(np.real((np.conj(v) @ H0 @ vals @ v)
                         / (np.conj(v) @ H0 @ v)))
