"""Truncated power series over K and its extensions.

A Series holds coefficients for X^0..X^D over one coefficient ring and is
immutable by convention.  Binary operations truncate to the shorter operand
unless an explicit target degree says the shorter operand is a polynomial
whose higher coefficients are exactly zero.

Heavy arithmetic is delegated to the packed kernel in kron; the naive
schoolbook product is kept here as an oracle for the kernel and for tiny
inputs in tests.  Precision propagates per coefficient: each coefficient is
a ring element carrying its own absolute precision, and series operations
combine them exactly as elementwise arithmetic would.

Evaluation comes in two flavors.  Interior evaluation demands a point of
positive valuation and returns a value whose precision accounts for the
truncated tail through an explicit tail valuation floor supplied by the
caller (0 for integral series).  Boundary evaluation is a stabilization
heuristic: it sums increments until their valuations have climbed past the
global minimum and stay there for a full window, and raises NoStabilization
otherwise.  Nothing downstream trusts a boundary value that has not been
re-certified algebraically.
"""

from __future__ import annotations

from . import kron
from .errors import (NonUnitConstantTerm, NonUnitLinearCoefficient,
                     NonzeroConstantTerm, NoStabilization, RingMismatch)
from .kron import INF, KPackedRing


def ring_for(ctx):
    """The packed coefficient-ring adapter for K itself, cached on ctx."""
    r = getattr(ctx, "_kring", None)
    if r is None:
        r = KPackedRing(ctx)
        ctx._kring = r
    return r


class Series:
    """Coefficients c[0..D] of a truncated series sum c[k] X^k."""

    __slots__ = ("ring", "_coeffs", "_ps")

    def __init__(self, ring, coeffs=None, ps=None):
        if coeffs is None and ps is None:
            raise ValueError("need coefficients or a packed form")
        self.ring = ring
        self._coeffs = list(coeffs) if coeffs is not None else None
        self._ps = ps

    # -- representations --

    @property
    def D(self):
        if self._coeffs is not None:
            return len(self._coeffs) - 1
        return self._ps.D

    def packed(self):
        if self._ps is None:
            self._ps = kron.ps_pack(self.ring, self._coeffs, self.D)
        return self._ps

    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = kron.ps_unpack(self._ps)
        return self._coeffs

    def coeff(self, k):
        if self._coeffs is not None:
            if k > len(self._coeffs) - 1:
                return self.ring.zero_elem()
            return self._coeffs[k]
        if k > self._ps.D:
            return self.ring.zero_elem()
        return kron.ps_coeff(self._ps, k)

    def __getitem__(self, k):
        return self.coeff(k)

    def truncated(self, D):
        if D >= self.D:
            return self
        if self._coeffs is not None:
            return Series(self.ring, self._coeffs[:D + 1])
        return Series(self.ring, ps=kron._truncate(self._ps, D))

    def __repr__(self):
        head = ", ".join(repr(self.coeff(k)) for k in range(min(self.D, 3) + 1))
        return f"Series(D={self.D}, [{head}{', ...' if self.D > 3 else ''}])"

    # -- arithmetic --

    def _binop_check(self, other):
        if self.ring != other.ring:
            raise RingMismatch("series over different coefficient rings")

    def __add__(self, other):
        self._binop_check(other)
        return Series(self.ring, ps=kron.ps_add(self.packed(), other.packed()))

    def __sub__(self, other):
        self._binop_check(other)
        return Series(self.ring, ps=kron.ps_sub(self.packed(), other.packed()))

    def __neg__(self):
        return Series(self.ring, ps=kron.ps_neg(self.packed()))

    def __mul__(self, other):
        return ser_mul(self, other)

    def scale(self, x):
        return Series(self.ring, ps=kron.ps_scale_elem(self.packed(), x))

    def int_scale(self, n):
        return Series(self.ring, ps=kron.ps_scale_int(self.packed(), n))

    def xshift(self, m, D=None):
        return Series(self.ring, ps=kron.ps_xshift(self.packed(), m, D))


def ser_zero(ring, D):
    return Series(ring, ps=kron.ps_zero(ring, D))


def ser_const(ring, x, D):
    return Series(ring, ps=kron.ps_from_const(ring, x, D))


def ser_x(ring, D):
    z = kron.ps_from_const(ring, ring.one_elem(), D)
    return Series(ring, ps=kron.ps_xshift(z, 1, D))


def ser_mul(a, b, D=None):
    a._binop_check(b)
    if D is None:
        D = min(a.D, b.D)
    return Series(a.ring, ps=kron.ps_mul(a.packed(), b.packed(), D))


def ser_mul_naive(a, b, D=None):
    """Schoolbook reference product, element arithmetic all the way."""
    a._binop_check(b)
    if D is None:
        D = min(a.D, b.D)
    ca, cb = a.coeffs(), b.coeffs()
    ring = a.ring
    out = []
    for k in range(D + 1):
        acc = None
        for i in range(max(0, k - (len(cb) - 1)), min(k, len(ca) - 1) + 1):
            t = ca[i] * cb[k - i]
            acc = t if acc is None else acc + t
        out.append(acc if acc is not None else ring.zero_elem())
    return Series(ring, out)


def ser_derivative(f):
    c = f.coeffs()
    if len(c) == 1:
        return Series(f.ring, [f.ring.zero_elem()])
    return Series(f.ring, [c[k] * k for k in range(1, len(c))])


def ser_reciprocal(f, D=None):
    if D is None:
        D = f.D
    c0 = f.coeff(0)
    v = c0.valuation()
    if (not v.determinate) or v.v_pi != 0:
        raise NonUnitConstantTerm("reciprocal needs a unit constant term")
    return Series(f.ring, ps=kron.ps_reciprocal(f.packed(), D))


def ser_compose(f, g, D=None, sparse=False):
    """f(g(X)) truncated at D; g must kill the constant term.

    With sparse=True the caller asserts that every coefficient of g that
    prints as zero is exactly zero, and the Taylor-split fast path is used;
    it is worth it once g has only a handful of terms.  The default dense
    path is a packed Horner loop.
    """
    if f.ring != g.ring:
        raise RingMismatch("composition across coefficient rings")
    if D is None:
        D = min(f.D, g.D)
    g0 = g.coeff(0)
    if not g0.is_zero_at_prec():
        raise NonzeroConstantTerm("composition needs g(0) = 0")
    if sparse:
        cg = g.coeffs()
        head = cg[1] if len(cg) > 1 else g.ring.zero_elem()
        tail = [(m, cg[m]) for m in range(2, len(cg))
                if not cg[m].is_zero_at_prec()]
        return Series(f.ring, ps=kron.taylor_compose(
            f.coeffs(), head, tail, D, f.ring))
    gp = kron._truncate(g.packed(), D)
    return Series(f.ring, ps=kron.horner_compose(f.coeffs()[:D + 1], gp, D))


def ser_reversion(f, D=None):
    """Series h with f(h(X)) = X; needs f(0) = 0 and a unit linear term."""
    if D is None:
        D = f.D
    if not f.coeff(0).is_zero_at_prec():
        raise NonzeroConstantTerm("reversion needs f(0) = 0")
    v1 = f.coeff(1).valuation()
    if (not v1.determinate) or v1.v_pi != 0:
        raise NonUnitLinearCoefficient("reversion needs a unit linear term")
    return Series(f.ring, kron.newton_reversion(f.coeffs()[:D + 1], D, f.ring))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _v_units(x):
    """Valuation of a ring element in ring digits; lower bound if needed."""
    v = x.valuation()
    return v.v_pi if v.determinate else v.at_least


def ser_eval(f, x, tail_vfloor=0):
    """f(x) for a point of positive valuation, Horner from the top.

    tail_vfloor is a lower bound, in ring digits, for the valuation of
    every coefficient beyond degree D; the default 0 is correct for
    integral series.  The truncation error then has valuation at least
    (D+1) v(x) + tail_vfloor, which caps the precision of the result.
    """
    from .errors import NonPositiveValuationPoint
    vx = _v_units(x)
    if vx <= 0:
        raise NonPositiveValuationPoint(
            "series evaluation needs v(x) > 0, got v = %s" % vx)
    c = f.coeffs()
    acc = c[-1]
    for k in range(len(c) - 2, -1, -1):
        # Normalizing per step keeps the accumulator's representation shift
        # from inheriting s(x) every round, which would eat the cap.
        acc = (acc * x + c[k]).normalize()
    tail_a = (f.D + 1) * vx + tail_vfloor
    return acc.with_prec(min(acc.A, tail_a))


def ser_eval_boundary(f, x, window=8):
    """Heuristic sum of f at a point where term valuations only just climb.

    Sums all stored increments f_k x^k and checks that the final `window`
    of them sit strictly above the overall minimum increment valuation; the
    claimed precision is the minimum over that window.  Raises
    NoStabilization when the tail shows no such climb.  Heuristic: the
    unseen tail is extrapolated, so callers must re-certify the value.
    """
    c = f.coeffs()
    acc = None
    vals = []
    xk = None
    for k, ck in enumerate(c):
        if k == 0:
            t = ck
        else:
            xk = x.normalize() if xk is None else (xk * x).normalize()
            t = ck * xk
        vals.append(_v_units(t) if not t.is_zero_at_prec() else INF)
        acc = t if acc is None else (acc + t).normalize()
    if len(vals) <= window:
        raise NoStabilization("series too short for the stabilization window")
    claimed = min(vals[-window:])
    floor = min(vals[:-window])
    if claimed >= INF:
        return acc  # tail increments indistinguishable from zero
    if claimed <= floor:
        raise NoStabilization(
            "tail increments (min v = %s) never climbed past the body "
            "minimum %s" % (claimed, floor))
    return acc.with_prec(min(acc.A, claimed))


# ---------------------------------------------------------------------------
# bivariate series, triangular truncation in total degree
# ---------------------------------------------------------------------------

class Bivariate:
    """F(X, Y) = sum_j cols[j](X) Y^j with total degree capped at Dtot."""

    __slots__ = ("ring", "cols", "Dtot")

    def __init__(self, ring, cols, Dtot):
        self.ring = ring
        self.cols = cols
        self.Dtot = Dtot

    def coeff(self, i, j):
        if j >= len(self.cols) or i > self.cols[j].D:
            return self.ring.zero_elem()
        return self.cols[j].coeff(i)


def bps_eval(F, x, y, tail_vfloor=0):
    """F(x, y) by Horner in Y with interior evaluation in X."""
    from .errors import NonPositiveValuationPoint
    vx, vy = _v_units(x), _v_units(y)
    if vx <= 0 or vy <= 0:
        raise NonPositiveValuationPoint("bivariate evaluation needs v > 0")
    acc = None
    for j in range(len(F.cols) - 1, -1, -1):
        # Column j is destined for multiplication by y^j, so its X-tail
        # carries j*vy extra valuation; crediting it here keeps the
        # intermediate caps from collapsing.  The final global cap below
        # is the honest bound for the whole triangular truncation.
        colv = ser_eval(F.cols[j], x, tail_vfloor=tail_vfloor + j * vy)
        acc = colv if acc is None else (acc * y + colv).normalize()
    tail_a = (F.Dtot + 1) * min(vx, vy) + tail_vfloor
    return acc.with_prec(min(acc.A, tail_a))


def bps_substitute(F, g, h, D):
    """F(g(X), h(X)) for series g, h with positive-valuation coefficients."""
    if g.ring != F.ring or h.ring != F.ring:
        raise RingMismatch("bivariate substitution across rings")
    acc = None
    for j in range(len(F.cols) - 1, -1, -1):
        col = ser_compose(F.cols[j], g, D)
        acc = col if acc is None else ser_mul(acc, h, D) + col
    return acc


# ---------------------------------------------------------------------------
# serialization and container moves
# ---------------------------------------------------------------------------

def ser_to_json(f):
    return {"D": f.D, "coeffs": [f.ring.elem_to_json(c) for c in f.coeffs()]}


def ser_from_json(ctx, obj):
    ring = ring_for(ctx)
    return Series(ring, [ring.elem_from_json(c) for c in obj["coeffs"]])


def ser_convert(f, ctx2):
    """Move a K-coefficient series into another container for K."""
    from .padic import convert
    return Series(ring_for(ctx2), [convert(c, ctx2) for c in f.coeffs()])
