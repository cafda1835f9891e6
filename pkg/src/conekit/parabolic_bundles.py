"""Parabolic structures on split bundles over the marked sphere: degrees,
slopes, induced structures and a stability oracle.

Degrees and weights are exact rationals (fractions.Fraction); flag data is
exact Gaussian-rational linear algebra, so stability verdicts are strict
inequalities decided without floating point.  Scope: split underlying
bundles over P^1, rank <= 3, flags at distinct marked points.
"""

from fractions import Fraction

import numpy as np

__all__ = [
    "QQi",
    "ParabolicBundle",
    "StabilityVerdict",
    "UnsupportedConfigurationError",
    "induced_structure",
    "model_bundle_metric",
    "parabolic_degree",
    "parabolic_slope",
    "stability_check",
]

INF = complex(np.inf)


class UnsupportedConfigurationError(ValueError):
    """Bundle outside the documented scope (non-split or rank > 3)."""


class QQi:
    """Gaussian rational a + b*i with exact Fraction components."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @classmethod
    def of(cls, x):
        if isinstance(x, QQi):
            return x
        if isinstance(x, complex):
            re, im = Fraction(x.real).limit_denominator(10 ** 9), \
                Fraction(x.imag).limit_denominator(10 ** 9)
            return cls(re, im)
        return cls(Fraction(x))

    def __add__(self, o):
        o = QQi.of(o)
        return QQi(self.re + o.re, self.im + o.im)

    def __sub__(self, o):
        o = QQi.of(o)
        return QQi(self.re - o.re, self.im - o.im)

    def __mul__(self, o):
        o = QQi.of(o)
        return QQi(self.re * o.re - self.im * o.im,
                   self.re * o.im + self.im * o.re)

    def __truediv__(self, o):
        o = QQi.of(o)
        d = o.re * o.re + o.im * o.im
        if d == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return QQi((self.re * o.re + self.im * o.im) / d,
                   (self.im * o.re - self.re * o.im) / d)

    __radd__ = __add__
    __rmul__ = __mul__

    def conj(self):
        return QQi(self.re, -self.im)

    def is_zero(self):
        return self.re == 0 and self.im == 0

    def __eq__(self, o):
        o = QQi.of(o)
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self):
        return float(self.re) + 1j * float(self.im)

    def __repr__(self):
        return f"QQi({self.re}, {self.im})"


def _vec(v):
    return tuple(QQi.of(x) for x in v)


def _rank(vectors):
    """Exact rank of a list of Gaussian-rational vectors."""
    rows = [list(v) for v in vectors]
    rank = 0
    cols = len(rows[0]) if rows else 0
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, len(rows)) if not rows[i][c].is_zero()),
                   None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        pr = rows[r][c]
        for i in range(len(rows)):
            if i != r and not rows[i][c].is_zero():
                fac = rows[i][c] / pr
                rows[i] = [a - fac * b for a, b in zip(rows[i], rows[r])]
        r += 1
        rank += 1
        if r == len(rows):
            break
    return rank


def _in_span(v, basis):
    if not basis:
        return all(x.is_zero() for x in v)
    return _rank(list(basis) + [v]) == _rank(list(basis))


class ParabolicBundle:
    """Split bundle ⊕ O(a_i) over the marked sphere with parabolic data.

    flags: for each marked point, the proper flag steps as a list of
    (vectors spanning F^p) for p = 2..l (F^1 is the full fiber and is not
    stored); weights: the full increasing list (alpha^1, ..., alpha^l).
    """

    def __init__(self, degrees, marked_points=(), flags=(), weights=()):
        self.degrees = tuple(int(a) for a in degrees)
        self.rank = len(self.degrees)
        if self.rank == 0 or self.rank > 3:
            raise UnsupportedConfigurationError(
                f"rank {self.rank} outside the supported range 1..3")
        pts = []
        for p in marked_points:
            pts.append(INF if (isinstance(p, float) and np.isinf(p)) or p in (np.inf, INF)
                       else complex(p))
        if len(set(map(str, pts))) != len(pts):
            raise ValueError("marked points must be distinct (smooth divisor)")
        self.marked_points = tuple(pts)
        if len(flags) != len(pts) or len(weights) != len(pts):
            raise ValueError("one flag and one weight list per marked point")
        self.flags = []
        self.weights = []
        for steps, ws in zip(flags, weights):
            steps = [tuple(_vec(v) for v in step) for step in steps]
            ws = [Fraction(w) for w in ws]
            dims = [self.rank] + [_rank(step) for step in steps]
            if any(d2 >= d1 for d1, d2 in zip(dims, dims[1:])) or dims[-1] == 0:
                raise ValueError("flag dimensions must strictly decrease")
            if len(ws) != len(dims):
                raise ValueError("one weight per flag step (including E itself)")
            if any(not (0 <= w < 1) for w in ws) or \
                    any(w2 <= w1 for w1, w2 in zip(ws, ws[1:])):
                raise ValueError("weights must be strictly increasing in [0,1)")
            for step in steps:
                if _rank(step) != len(step):
                    raise ValueError("flag spanning vectors must be independent")
            self.flags.append(steps)
            self.weights.append(ws)

    @property
    def degree(self):
        return sum(self.degrees)

    def flag_dims(self, k):
        return [self.rank] + [_rank(st) for st in self.flags[k]]

    def __repr__(self):
        return (f"ParabolicBundle(O{self.degrees}, points={self.marked_points}, "
                f"weights={[[str(w) for w in ws] for ws in self.weights]})")


def parabolic_degree(bundle, polarization_degree=1):
    """par deg(E) = deg(E) + sum_i sum_p rk(F_i^p/F_i^{p+1}) alpha_i^p deg(D_i)."""
    deg = Fraction(bundle.degree)
    for k in range(len(bundle.marked_points)):
        dims = bundle.flag_dims(k) + [0]
        ws = bundle.weights[k]
        for p, w in enumerate(ws):
            deg += (dims[p] - dims[p + 1]) * w * polarization_degree
    return deg


def parabolic_slope(bundle, polarization_degree=1):
    return parabolic_degree(bundle, polarization_degree) / bundle.rank


# ----------------------------------------------------------------------
# line subbundles of split bundles

class LineSub:
    """Line subbundle O(d) -> ⊕ O(a_i), given by polynomial components of
    degrees <= a_i - d with exact coefficients (ascending order)."""

    def __init__(self, d, polys, label=""):
        self.d = int(d)
        self.polys = tuple(tuple(QQi.of(c) for c in p) for p in polys)
        self.label = label

    def fiber_at(self, bundle, p):
        """Fiber direction at a marked point, in the frame adapted there."""
        if np.isinf(abs(p)):
            # top-degree coefficients in each component
            out = []
            for a_i, poly in zip(bundle.degrees, self.polys):
                top = a_i - self.d
                out.append(poly[top] if top < len(poly) else QQi(0))
            return tuple(out)
        zp = QQi.of(complex(p))
        out = []
        for poly in self.polys:
            acc, mon = QQi(0), QQi(1)
            for c in poly:
                acc = acc + c * mon
                mon = mon * zp
            out.append(acc)
        return tuple(out)

    def __repr__(self):
        return f"LineSub(O({self.d}), {self.label})"


def _induced_weight(bundle, k, fiber):
    """Largest weight whose flag step contains the fiber direction."""
    if all(x.is_zero() for x in fiber):
        raise ValueError("degenerate fiber; the candidate is not saturated here")
    best = bundle.weights[k][0]
    for step, w in zip(bundle.flags[k], bundle.weights[k][1:]):
        if _in_span(fiber, step):
            best = w
    return best


def induced_structure(bundle, sub):
    """Parabolic structure induced on a saturated line subbundle.

    The induced weight at each point is the largest alpha^p whose flag
    step contains the fiber of the subbundle.
    """
    if not isinstance(sub, LineSub):
        raise ValueError("sub must describe a line subbundle (LineSub)")
    _check_saturated(bundle, sub)
    ws = []
    for k, p in enumerate(bundle.marked_points):
        ws.append(_induced_weight(bundle, k, sub.fiber_at(bundle, p)))
    out = ParabolicBundle((sub.d,), bundle.marked_points,
                          flags=[[] for _ in bundle.marked_points],
                          weights=[[w] for w in ws])
    return out


def _check_saturated(bundle, sub):
    """A line candidate is saturated iff its components never vanish
    simultaneously (including at infinity)."""
    polys = [np.array([complex(c) for c in p], dtype=complex)
             for p in sub.polys]
    if all(len(p) == 0 or np.allclose(p, 0) for p in polys):
        raise ValueError("zero map is not a subbundle")
    roots = []
    for p in polys:
        p = np.trim_zeros(p, "b")
        if len(p) > 1:
            roots.append(set(np.round(np.roots(p[::-1]), 9)))
        elif len(p) == 1:
            return  # a unit component: nowhere zero
        else:
            roots.append(None)
    common = None
    for rts in roots:
        if rts is None:
            continue
        common = rts if common is None else common & rts
        if common is not None and not common:
            break
    if common:
        raise ValueError(f"components share the zero(s) {sorted(common, key=str)}; "
                         "the candidate is not saturated")
    # common vanishing at infinity: every component below its degree bound
    if all(len(np.trim_zeros(np.array([complex(c) for c in p]), "b")) < a_i - sub.d + 1
           for p, a_i in zip(sub.polys, bundle.degrees)):
        raise ValueError("components all drop degree; saturate at infinity first")


# ----------------------------------------------------------------------
# stability

class StabilityVerdict:
    def __init__(self, stable, polystable, margin, witness, table):
        self.stable = stable
        self.polystable = polystable
        self.margin = margin
        self.witness = witness
        self.table = table

    def as_dict(self):
        return {
            "stable": self.stable,
            "polystable": self.polystable,
            "margin": str(self.margin),
            "margin_float": float(self.margin),
            "witness": self.witness,
            "candidates": [
                {"label": lab, "slope": str(mu), "margin": str(m)}
                for lab, mu, m in self.table
            ],
        }

    def __repr__(self):
        return (f"StabilityVerdict(stable={self.stable}, "
                f"polystable={self.polystable}, margin={self.margin})")


def _exact_points(bundle):
    out = []
    for p in bundle.marked_points:
        if np.isinf(abs(p)):
            out.append(p)
        else:
            q = QQi.of(p)
            if abs(complex(q) - p) > 1e-12:
                raise UnsupportedConfigurationError(
                    "exact stability arithmetic needs Gaussian-rational points")
            out.append(p)
    return out


def _line_candidates(bundle):
    """Finite destabilizer family: summands, flag lines extended into the
    split frame, and degree-d lines through chosen flag steps."""
    r = bundle.rank
    degs = bundle.degrees
    cands = []
    # (i) summand lines
    for i, a in enumerate(degs):
        polys = [[] for _ in range(r)]
        polys[i] = [QQi(1)]
        cands.append(LineSub(a, polys, label=f"summand O({a})#{i}"))

    # degree window per the finite-family bound
    all_w = [w for ws in bundle.weights for w in ws] or [Fraction(0)]
    dw = max(all_w) - min(all_w)
    d_hi = max(degs)
    d_lo = int(np.floor(d_hi - r * float(dw))) if dw > 0 else d_hi
    d_lo = min(d_lo, min(degs))

    # (ii)+(iii) lines of degree d through chosen flag subspaces,
    # enumerated over all assignments of a flag step (or none) per point
    npts = len(bundle.marked_points)
    for d in range(d_lo, d_hi + 1):
        dims = [a - d + 1 for a in degs]  # coefficient count per component
        if all(m <= 0 for m in dims):
            continue
        choices = [list(range(-1, len(bundle.flags[k]))) for k in range(npts)]
        for assign in _product(choices):
            sol = _line_through(bundle, d, dims, assign)
            if sol is not None:
                lab = f"line O({d}) through " + ",".join(
                    "*" if a < 0 else f"F^{a + 2}@{bundle.marked_points[k]}"
                    for k, a in enumerate(assign))
                cands.append(LineSub(d, sol, label=lab))
    return cands


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for rest in _product(lists[1:]):
            yield (head,) + tuple(rest)


def _line_through(bundle, d, dims, assign):
    """Solve for polynomial components of a degree-d line whose fiber lies
    in the assigned flag steps; exact nullspace computation.  Returns a
    saturated representative or None."""
    r = bundle.rank
    ncoef = sum(max(m, 0) for m in dims)
    if ncoef == 0:
        return None
    rows = []
    pts = _exact_points(bundle)
    for k, step_idx in enumerate(assign):
        if step_idx < 0:
            continue
        step = bundle.flags[k][step_idx]
        rows.extend(_membership_rows(bundle, d, dims, pts[k], step))
    basis = _nullspace(rows, ncoef)
    for coefvec in basis:
        polys = _unpack(coefvec, dims)
        cand = LineSub(d, polys)
        try:
            _check_saturated(bundle, cand)
        except ValueError:
            continue
        ok = True
        for k, p in enumerate(bundle.marked_points):
            fib = cand.fiber_at(bundle, p)
            if all(x.is_zero() for x in fib):
                ok = False
                break
        if ok:
            return polys
    return None


def _membership_rows(bundle, d, dims, p, step):
    """Linear conditions (rows over the coefficient vector) expressing that
    the candidate's fiber at p lies in span(step)."""
    r = bundle.rank
    # complement functionals: vectors phi with phi . v = 0 for v in step
    comp = _annihilator([list(v) for v in step], r)
    rows = []
    at_inf = np.isinf(abs(p))
    zp = None if at_inf else QQi.of(complex(p))
    for phi in comp:
        row = []
        for i in range(r):
            m = max(dims[i], 0)
            for c in range(m):
                if at_inf:
                    coeff = phi[i] if c == m - 1 else QQi(0)
                else:
                    coeff = phi[i] * _pow(zp, c)
                row.append(coeff)
        rows.append(row)
    return rows


def _pow(z, n):
    out = QQi(1)
    for _ in range(n):
        out = out * z
    return out


def _annihilator(step, ncols):
    """Functionals phi with sum_i phi_i v_i = 0 for every v in the span."""
    if not step:
        return [tuple(QQi(1 if i == j else 0) for i in range(ncols))
                for j in range(ncols)]
    return _nullspace([list(v) for v in step], ncols)


def _nullspace(rows, ncols):
    """Exact nullspace basis of the linear system rows . x = 0."""
    mat = [list(r) for r in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(mat)) if not mat[i][c].is_zero()),
                   None)
        if piv is None:
            continue
        mat[r], mat[piv] = mat[piv], mat[r]
        pr = mat[r][c]
        mat[r] = [x / pr for x in mat[r]]
        for i in range(len(mat)):
            if i != r and not mat[i][c].is_zero():
                fac = mat[i][c]
                mat[i] = [a - fac * b for a, b in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
        if r == len(mat):
            break
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [QQi(0)] * ncols
        vec[fc] = QQi(1)
        for ri, pc in enumerate(pivots):
            vec[pc] = QQi(0) - mat[ri][fc]
        basis.append(tuple(vec))
    return basis


def _unpack(coefvec, dims):
    polys = []
    k = 0
    for m in dims:
        m = max(m, 0)
        polys.append(list(coefvec[k:k + m]))
        k += m
    return polys


def _pair_candidates(bundle, lines):
    """Rank-2 subsheaf candidates for rank-3 bundles: spans of candidate
    line pairs whose fibers stay independent at the marked points."""
    out = []
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            l1, l2 = lines[i], lines[j]
            indep = True
            for p in bundle.marked_points:
                f1 = l1.fiber_at(bundle, p)
                f2 = l2.fiber_at(bundle, p)
                if _rank([f1, f2]) < 2:
                    indep = False
                    break
            if indep:
                out.append((l1, l2))
    return out


def stability_check(bundle):
    """Stability verdict for a split parabolic bundle of rank <= 3.

    Enumerates the provably sufficient finite destabilizer family
    (summands, flag lines as constant subbundles, degree-d lines through
    flag steps) with induced-weight maximisation, plus rank-2 pair
    candidates at rank 3.
    """
    if bundle.rank == 1:
        return StabilityVerdict(True, True, Fraction(1), None, [])
    if bundle.rank > 3:
        raise UnsupportedConfigurationError("rank > 3 not supported")
    _exact_points(bundle)
    mu_e = parabolic_slope(bundle)
    table = []
    margin = None
    witness = None
    seen = set()
    for cand in _line_candidates(bundle):
        try:
            ind = induced_structure(bundle, cand)
        except ValueError:
            continue
        mu_f = parabolic_slope(ind)
        key = (cand.d, tuple(ws[0] for ws in ind.weights))
        if key in seen:
            continue
        seen.add(key)
        m = mu_e - mu_f
        table.append((cand.label, mu_f, m))
        if margin is None or m < margin:
            margin, witness = m, cand.label
    if bundle.rank == 3:
        lines = _line_candidates(bundle)
        for l1, l2 in _pair_candidates(bundle, lines):
            deg = Fraction(l1.d + l2.d)
            for k, p in enumerate(bundle.marked_points):
                w1 = _induced_weight(bundle, k, l1.fiber_at(bundle, p))
                w2 = _induced_weight(bundle, k, l2.fiber_at(bundle, p))
                deg += w1 + w2
            mu_f = deg / 2
            m = mu_e - mu_f
            lab = f"pair[{l1.label} + {l2.label}]"
            table.append((lab, mu_f, m))
            if m < margin:
                margin, witness = m, lab
    stable = margin > 0
    polystable = stable or (margin == 0 and _summands_equal_slope(bundle, mu_e))
    table.sort(key=lambda row: row[2])
    return StabilityVerdict(stable, polystable, margin,
                            None if stable else witness, table)


def _summands_equal_slope(bundle, mu_e):
    for i, a in enumerate(bundle.degrees):
        polys = [[] for _ in range(bundle.rank)]
        polys[i] = [QQi(1)]
        line = LineSub(a, polys)
        try:
            ind = induced_structure(bundle, line)
        except ValueError:
            return False
        if parabolic_slope(ind) != mu_e:
            return False
    return True


def model_bundle_metric(bundle, metric):
    """Li-type model metric h_0 on the bundle over a cone metric base;
    delegates to the Hermitian field machinery."""
    from .he_flow import build_model_metric
    return build_model_metric(bundle, metric)
