"""Formal group laws attached to a uniformizer series.

A valid input series P has P(X) = pi X + ... with P = X^q mod pi and
integral coefficients.  From it we build the normalized group logarithm
L (the unique series with L(P) = pi L and L'(0) = 1), its inverse E, the
group law F(X, Y) = E(L(X) + L(Y)) as a bivariate series, and the scalar
endomorphisms [a](X) = E(a L(X)).

All internal arithmetic happens in a widened container sized from the
truncation degree, because L and E have denominators that grow linearly
in the degree; results are handed back in the caller's container.
"""

import math
import random
from fractions import Fraction

from .errors import NotLubinTate
from .padic import KElem, convert
from .series import (
    Bivariate,
    Series,
    bps_eval,
    ring_for,
    ser_compose,
    ser_const,
    ser_convert,
    ser_derivative,
    ser_eval,
    ser_mul,
    ser_reciprocal,
    ser_reversion,
    ser_x,
)
from . import kron


def lift_coeff(ctx, c):
    """Exact lift of a coefficient description into ctx.

    Ints and Fractions are container independent, so they lift at full
    precision no matter where they were written down.  A tuple is read as
    a polynomial in the uniformizer, sum of c[i] pi^i with int or Fraction
    entries, which is what seeded recipes use to stay exact across
    containers of different depth.  A KElem converts honestly: its
    precision watermark travels with it.
    """
    if isinstance(c, KElem):
        return convert(c, ctx)
    if isinstance(c, tuple):
        acc = ctx.zero()
        pw = ctx.one()
        for i, a in enumerate(c):
            if i:
                pw = pw * ctx.pi()
            acc = acc + lift_coeff(ctx, a) * pw
        return acc
    if isinstance(c, Fraction):
        return ctx.from_fraction(c)
    return ctx.from_int(c)


def validate_uniformizer_series(ctx, coeffs, pi=None):
    """Check the two congruences that make coeffs a group-law seed.

    coeffs is the ascending coefficient list of P.  Requires c0 = 0,
    c1 = the chosen uniformizer (ctx.pi() unless `pi` names an associate
    of it), every coefficient integral, c_q a unit congruent to 1, and
    every other c_k divisible by pi.  Raises NotLubinTate otherwise.
    Returns the lifted coefficient list.
    """
    q = ctx.q
    if pi is None:
        pi = ctx.pi()
    else:
        pi = lift_coeff(ctx, pi)
        vp = pi.valuation()
        if not vp.determinate or vp.v_pi != 1:
            raise NotLubinTate("chosen uniformizer does not have valuation 1")
    coeffs = [lift_coeff(ctx, c) for c in coeffs]
    if len(coeffs) <= q:
        raise NotLubinTate(f"series stops at degree {len(coeffs) - 1} < q = {q}")
    if not coeffs[0].is_zero_at_prec():
        raise NotLubinTate("constant term is not 0")
    if not (coeffs[1] - pi).is_zero_at_prec():
        raise NotLubinTate("linear coefficient is not the uniformizer")
    for k, c in enumerate(coeffs):
        if c.v_lower() < 0:
            raise NotLubinTate(f"coefficient {k} is not integral")
    if (coeffs[q] - ctx.one()).v_lower() < 1:
        raise NotLubinTate("degree-q coefficient is not 1 mod pi")
    for k, c in enumerate(coeffs):
        if k in (1, q):
            continue
        if c.v_lower() < 1:
            raise NotLubinTate(f"coefficient {k} is not 0 mod pi")
    return coeffs


def working_margin(ctx, D, extra=8):
    """Container digits to add so degree-D group data stays usable.

    The log denominators drop roughly one pi-digit every q-1 degrees and
    the same budget is spent again inside compositions, so reserve twice
    that plus a constant cushion.
    """
    per = max(1, ctx.e * (ctx.q - 1))
    return 2 * math.ceil((D + 1) / per) // ctx.e + extra


class FormalGroupData:
    """Lazy bundle of the group data attached to one uniformizer series."""

    def __init__(self, ctx, coeffs, D, margin=None, pi=None):
        validate_uniformizer_series(ctx, coeffs, pi=pi)
        self.ctx = ctx
        self.D = D
        if margin is None:
            margin = working_margin(ctx, D)
        self.wctx = ctx.widened(margin)
        self.ring = ring_for(self.wctx)
        # Recipe coefficients (ints, Fractions, pi-polynomial tuples) lift
        # exactly into the working container; KElems keep their watermark.
        wc = [lift_coeff(self.wctx, c) for c in coeffs[:D + 1]]
        wc += [self.wctx.zero()] * (D + 1 - len(wc))
        self.P = Series(self.ring, wc)
        # The uniformizer this series multiplies by: its own linear term.
        self.pi_elem = wc[1]
        self._log = None
        self._exp = None
        self._fg = {}
        self._brackets = {}

    # -- core series --

    def log(self):
        """Normalized group logarithm to degree D."""
        if self._log is None:
            self._log = group_log(self.P, self.D, pi=self.pi_elem)
        return self._log

    def exp(self):
        """Inverse of the logarithm to degree D."""
        if self._exp is None:
            self._exp = ser_reversion(self.log(), self.D)
        return self._exp

    def formal_group(self, Dtot=None):
        """The group law F(X, Y) as a bivariate series, total degree Dtot."""
        if Dtot is None:
            Dtot = min(self.D, 60)
        if Dtot not in self._fg:
            self._fg[Dtot] = group_law_from_log(self.log(), Dtot)
        return self._fg[Dtot]

    def bracket(self, a):
        """The endomorphism [a](X) = E(a L(X)) for an integral scalar a."""
        key, elem = self._scalar(a)
        got = self._brackets.get(key)
        if got is None:
            scaled = self.log().scale(elem)
            got = ser_compose(self.exp(), scaled, self.D)
            self._brackets[key] = got
        return got

    def _scalar(self, a):
        if isinstance(a, int):
            return a, self.wctx.from_int(a)
        if isinstance(a, Fraction):
            return a, self.wctx.from_fraction(a)
        if isinstance(a, KElem):
            x = convert(a, self.wctx).normalize()
            return ("k", x.s, x.digs), x
        raise TypeError(f"cannot interpret {a!r} as a scalar")

    # -- point operations (positive-valuation points in the working field) --

    def lift(self, x):
        return lift_coeff(self.wctx, x)

    def add_points(self, x, y, Dtot=None):
        F = self.formal_group(Dtot)
        return bps_eval(F, self.lift(x), self.lift(y))

    def mul_point(self, a, x):
        return ser_eval(self.bracket(a), self.lift(x))

    def neg_point(self, x):
        return self.mul_point(-1, x)

    # -- readback --

    def narrowed(self, f):
        """Convert a working-ring series back to the caller's container."""
        return ser_convert(f, self.ctx)


def group_log(P, D, pi=None):
    """The series L with L(P) = pi L, L = X + O(X^2), to degree D.

    Coefficient m falls out of the functional equation at X^m once
    coefficients below m are known:
        pi l_m = [X^m] sum_{k <= m} l_k P^k  and  [X^m] P^m = pi^m,
    so l_m = ([X^m] sum_{k < m} l_k P^k) / (pi - pi^m).

    pi must be P's linear coefficient at full precision; seeds normalized
    to an associate uniformizer pass theirs explicitly and get the log of
    the group they actually define.  P's own coefficient is not read here
    because a computed seed may know it only to low precision.
    """
    ring = P.ring
    ctx = ring.ctx
    if pi is None:
        pi = ctx.pi()
    one = ctx.one()
    Pps = P.packed()
    Pow = Pps
    acc = Pps
    l = [ctx.zero(), one]
    pi_pow = pi
    for m in range(2, D + 1):
        pi_pow = pi_pow * pi
        num = kron.ps_coeff(acc, m)
        # Normalizing keeps the representation shift at the true valuation;
        # otherwise each division inherits the accumulator's common shift and
        # the pack of the next step drags S up by one per degree.
        lm = (num / (pi - pi_pow)).normalize()
        l.append(lm)
        if m < D:
            Pow = kron.ps_mul(Pow, Pps, D)
            acc = kron.ps_add(acc, kron.ps_scale_elem(Pow, lm))
    return Series(ring, l)


def group_law_from_log(L, Dtot):
    """F(X, Y) = E(L(X) + L(Y)) by a Taylor expansion in L(Y).

    Writing F = sum_j W_j(X) L(Y)^j, the columns obey W_0 = X and
    W_{j+1} = W_j' / ((j+1) L'), which needs no composition at all; the
    bivariate coefficients then collect [Y^i] L^j.
    """
    ring = L.ring
    ctx = ring.ctx
    L = L.truncated(Dtot)
    R = ser_reciprocal(ser_derivative(L), Dtot)
    Ws = [ser_x(ring, Dtot)]
    for j in range(1, Dtot + 1):
        w = ser_mul(ser_derivative(Ws[-1]), R, Dtot - j)
        if j > 1:
            w = w.scale(ctx.from_fraction(Fraction(1, j)))
        Ws.append(w)
    Lpow = [ser_const(ring, ctx.one(), Dtot), L]
    for j in range(2, Dtot + 1):
        Lpow.append(ser_mul(Lpow[-1], L, Dtot))
    cols = []
    for i in range(Dtot + 1):
        col = None
        for j in range(i + 1):
            c = Lpow[j].coeff(i) if j else (ctx.one() if i == 0 else None)
            # A zero-at-precision c still carries an O(pi^A) error bar, so it
            # must be folded in rather than skipped: dropping it would claim
            # precision the assembly does not have.
            if c is None:
                continue
            term = Ws[j].truncated(Dtot - i).scale(c)
            col = term if col is None else col + term
        cols.append(col if col is not None else
                    Series(ring, [ctx.zero()] * (Dtot - i + 1)))
    return Bivariate(ring, cols, Dtot)


def log_coefficient_floor(data):
    """Denominator growth report for the log: v_p(l_k) vs -(k-1)/(e(q-1)).

    Returns (ok, rows) where each row is (k, v_p, floor) for coefficients
    with determinate valuation.  The floor is the integrality budget the
    rest of the pipeline assumes, so a False here poisons everything
    downstream and is worth surfacing loudly.
    """
    ctx = data.wctx
    rows = []
    ok = True
    for k, c in enumerate(data.log().coeffs()):
        if k == 0 or c.is_zero_at_prec():
            continue
        vp = c.valuation().v_p
        floor = Fraction(-(k - 1), ctx.e * (ctx.q - 1))
        rows.append((k, vp, floor))
        if vp < floor:
            ok = False
    return ok, rows


def exp_coefficient_floor(data, D=None):
    """Denominator growth report for the exp: v_p(b_k) vs -(k-1)/(e(q-1)).

    Same contract as log_coefficient_floor but for the inverse series,
    whose convergence on the open unit disk rests exactly on this bound.
    """
    ctx = data.wctx
    if D is None:
        D = data.D
    rows = []
    ok = True
    for k, c in enumerate(data.exp().coeffs()[:D + 1]):
        if k == 0 or c.is_zero_at_prec():
            continue
        vp = c.valuation().v_p
        floor = Fraction(-(k - 1), ctx.e * (ctx.q - 1))
        rows.append((k, vp, floor))
        if vp < floor:
            ok = False
    return ok, rows


# ---------------------------------------------------------------------------
# functional-equation construction: group data straight from a seed series
# ---------------------------------------------------------------------------

def fe_log(ctx_or_ring, g_coeffs, D):
    """f with f = g + pi^{-1} f(X^q), coefficientwise f_m = g_m + f_{m/q}/pi.

    g must have g_0 = 0 and g_1 = 1; integral g gives the standard
    denominator growth.  The division by pi is an exact shift, so this
    construction costs no precision at all.
    """
    ring = ctx_or_ring if hasattr(ctx_or_ring, "ctx") else ring_for(ctx_or_ring)
    ctx = ring.ctx
    q = ctx.q
    g = [convert(c, ctx) if isinstance(c, KElem) else ctx.from_int(c)
         for c in g_coeffs]
    if not g[0].is_zero_at_prec():
        raise NotLubinTate("seed must vanish at 0")
    if not (g[1] - ctx.one()).is_zero_at_prec():
        raise NotLubinTate("seed must have slope 1")
    f = [ctx.zero()] * (D + 1)
    for m in range(1, D + 1):
        fm = g[m] if m < len(g) else ctx.zero()
        if m % q == 0:
            fm = fm + f[m // q].shift_pi(-1)
        f[m] = fm
    return Series(ring, f)


def fe_uniformizer_series(f, D=None):
    """P = f^{-1}(pi f(X)): the uniformizer series whose log is f."""
    if D is None:
        D = f.D
    ctx = f.ring.ctx
    inner = f.scale(ctx.pi()).truncated(D)
    return ser_compose(ser_reversion(f, D), inner, D)


def special_log_coeffs(ctx, D):
    """sum of X^{q^i} / pi^i to degree D, the fe_log of the seed X."""
    out = [ctx.zero()] * (D + 1)
    m, i = 1, 0
    while m <= D:
        out[m] = ctx.one().shift_pi(-i)
        m *= ctx.q
        i += 1
    return out


# ---------------------------------------------------------------------------
# deterministic sample inputs
# ---------------------------------------------------------------------------

def random_uniformizer_poly(ctx, seed, extra_terms=2):
    """Seeded valid uniformizer polynomial, identical in every container.

    The shape is pi X + pi * (small random) X^k + X^q plus a few
    pi-divisible terms above degree q when extra_terms asks for them.
    Coefficients come back in recipe form (ints and pi-polynomial tuples,
    see lift_coeff), so the same seed lifts exactly at any depth.
    """
    rng = random.Random(f"{seed}:{ctx.p}:{ctx.f}:{ctx.e}:uniformizer")
    q = ctx.q
    coeffs = [0, (0, 1)]
    for k in range(2, q):
        coeffs.append((0, rng.randrange(0, ctx.p ** 6)))
    coeffs.append(1)
    for _ in range(extra_terms):
        coeffs.append((0, rng.randrange(0, ctx.p ** 6)))
    return coeffs
