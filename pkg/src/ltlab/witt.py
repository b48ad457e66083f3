"""Ramified Witt vectors over pi-torsion-free coefficient algebras.

Components live in a coefficient algebra A: field elements, truncated
power series, or sparse multivariate polynomials.  The ghost map sends
(a_0, a_1, ...) to the vector of sums over i of pi^i a_i^(q^(n-i));
over a pi-torsion-free A it is injective, so all arithmetic goes ghost
side, operates pointwise, and comes back through the division recursion

    u_0 = a_0,   u_{n+1} = W_n(a_0^q, ..., a_n^q) + pi^{n+1} a_{n+1}.

Each level-n division by pi^n must be exact; an inexact one means the
vector is not in the ghost image and raises NotInGhostImage.  The same
exception with a precision message signals that the container is too
shallow to certify the division.  Universal structural polynomials are
produced by running unghost over a polynomial algebra, and stay small
only for levels <= 2, which is all the desk-scale checks need.
"""

import math

from .errors import IndeterminateValuation, NotInGhostImage, NotLubinTate
from .series import Series, ser_eval, ser_mul


# ---------------------------------------------------------------------------
# coefficient algebras
# ---------------------------------------------------------------------------

class ElemAlgebra:
    """Field elements of one context as the coefficient algebra."""

    def __init__(self, ctx):
        self.ctx = ctx
        self.q = ctx.q

    def zero(self):
        return self.ctx.zero()

    def one(self):
        return self.ctx.one()

    def embed_scalar(self, c):
        from .formal import lift_coeff
        return lift_coeff(self.ctx, c)

    def add(self, a, b):
        return a + b

    def neg(self, a):
        return -a

    def mul(self, a, b):
        return a * b

    def pow(self, a, k):
        return a ** k

    def pi_pow_mul(self, a, k):
        out = a
        pi = self.ctx.pi()
        for _ in range(k):
            out = out * pi
        return out

    def div_pi(self, a, k):
        """Exact division by pi^k; the quotient must stay integral."""
        if k == 0:
            return a
        out = a.shift_pi(-k)
        v = out.valuation()
        if v.determinate:
            if v.v_pi < 0:
                raise NotInGhostImage(
                    "ghost recursion needs division by pi^%d, element has "
                    "valuation %d" % (k, v.v_pi + k))
        elif v.at_least < 0:
            raise NotInGhostImage(
                "cannot certify divisibility by pi^%d at precision O(pi^%d)"
                % (k, v.at_least + k))
        return out.normalize()

    def is_zero(self, a):
        return a.is_zero_at_prec()

    def unit_residue(self, a):
        """True when a is a unit, False when v > 0; None if undecidable."""
        v = a.valuation()
        if v.determinate:
            return v.v_pi == 0
        if v.at_least > 0:
            return False
        return None


class SeriesAlgebra:
    """Truncated power series over a context; pi acts coefficientwise."""

    def __init__(self, ring, D):
        self.ring = ring
        self.ctx = ring.ctx
        self.D = D
        self.q = ring.ctx.q

    def zero(self):
        from .series import ser_zero
        return ser_zero(self.ring, self.D)

    def one(self):
        from .series import ser_const
        return ser_const(self.ring, self.ctx.one(), self.D)

    def embed_scalar(self, c):
        from .formal import lift_coeff
        from .series import ser_const
        return ser_const(self.ring, lift_coeff(self.ctx, c), self.D)

    def add(self, a, b):
        return a + b

    def neg(self, a):
        return -a

    def mul(self, a, b):
        return ser_mul(a, b, self.D)

    def pow(self, a, k):
        if k == 0:
            return self.one()
        out = None
        base = a
        while k:
            if k & 1:
                out = base if out is None else self.mul(out, base)
            k >>= 1
            if k:
                base = self.mul(base, base)
        return out

    def pi_pow_mul(self, a, k):
        out = a
        for _ in range(k):
            out = out.scale(self.ctx.pi())
        return out

    def div_pi(self, a, k):
        if k == 0:
            return a
        elem = ElemAlgebra(self.ctx)
        return Series(self.ring, [elem.div_pi(c, k) for c in a.coeffs()])

    def is_zero(self, a):
        return all(c.is_zero_at_prec() for c in a.coeffs())


class PolyAlgebra:
    """Sparse multivariate polynomials over one context, exact arithmetic."""

    def __init__(self, ctx, names):
        self.ctx = ctx
        self.names = tuple(names)
        self.nv = len(self.names)
        self.q = ctx.q

    def zero(self):
        return MultiPoly(self, {})

    def one(self):
        return MultiPoly(self, {(0,) * self.nv: self.ctx.one()})

    def var(self, i):
        e = [0] * self.nv
        e[i] = 1
        return MultiPoly(self, {tuple(e): self.ctx.one()})

    def embed_scalar(self, c):
        from .formal import lift_coeff
        cc = lift_coeff(self.ctx, c)
        if cc.is_zero_at_prec():
            return self.zero()
        return MultiPoly(self, {(0,) * self.nv: cc})

    def add(self, a, b):
        out = dict(a.terms)
        for e, c in b.terms.items():
            s = out.get(e)
            s = c if s is None else s + c
            if s.is_zero_at_prec():
                out.pop(e, None)
            else:
                out[e] = s
        return MultiPoly(self, out)

    def neg(self, a):
        return MultiPoly(self, {e: -c for e, c in a.terms.items()})

    def mul(self, a, b):
        out = {}
        for ea, ca in a.terms.items():
            for eb, cb in b.terms.items():
                e = tuple(x + y for x, y in zip(ea, eb))
                c = ca * cb
                s = out.get(e)
                s = c if s is None else s + c
                if s.is_zero_at_prec():
                    out.pop(e, None)
                else:
                    out[e] = s
        return MultiPoly(self, out)

    def pow(self, a, k):
        if k == 0:
            return self.one()
        out = None
        base = a
        while k:
            if k & 1:
                out = base if out is None else self.mul(out, base)
            k >>= 1
            if k:
                base = self.mul(base, base)
        return out

    def pi_pow_mul(self, a, k):
        elem = ElemAlgebra(self.ctx)
        return MultiPoly(self, {e: elem.pi_pow_mul(c, k)
                                for e, c in a.terms.items()})

    def div_pi(self, a, k):
        elem = ElemAlgebra(self.ctx)
        return MultiPoly(self, {e: elem.div_pi(c, k)
                                for e, c in a.terms.items()})

    def is_zero(self, a):
        return all(c.is_zero_at_prec() for c in a.terms.values())


class MultiPoly:
    """One sparse polynomial: exponent tuple -> coefficient."""

    __slots__ = ("alg", "terms")

    def __init__(self, alg, terms):
        self.alg = alg
        self.terms = terms

    def coeff(self, expt):
        return self.terms.get(tuple(expt), self.alg.ctx.zero())

    def eval_in(self, algebra, assignment):
        """Value in another algebra, variables bound by `assignment`."""
        acc = algebra.zero()
        for e, c in self.terms.items():
            t = algebra.embed_scalar(c)
            for i, k in enumerate(e):
                if k:
                    t = algebra.mul(t, algebra.pow(assignment[i], k))
            acc = algebra.add(acc, t)
        return acc

    def int_coeffs(self):
        """Exponent -> canonical integer, valid when the base is Q_p-like.

        The canonical integer of a coefficient is its digit residue, so
        this is only faithful for unramified rational contexts where a
        single digit holds the whole value.  Each value is reduced at its
        own certified precision p^(A - s), never beyond p^N: divisions on
        the way here shrink A, and reducing any further would claim
        digits the recursion no longer knows.
        """
        ctx = self.alg.ctx
        out = {}
        for e, c in self.terms.items():
            cn = c.normalize()
            if cn.s > 0:
                raise ValueError("non-integral coefficient")
            cap = ctx.p ** min(ctx.N, cn.A - cn.s)
            out[e] = cn.digs[0] * ctx.p ** (-cn.s) % cap
        return out

    def __repr__(self):
        names = self.alg.names
        bits = []
        for e in sorted(self.terms):
            c = self.terms[e]
            mono = "*".join(f"{names[i]}^{k}" if k > 1 else names[i]
                            for i, k in enumerate(e) if k)
            bits.append(f"({c!r})" + ("*" + mono if mono else ""))
        return " + ".join(bits) or "0"


# ---------------------------------------------------------------------------
# ghost map and its inverse
# ---------------------------------------------------------------------------

def ghost_poly(alg, comps, n):
    """W_n(comps) = sum over i <= n of pi^i comps[i]^(q^(n-i))."""
    acc = None
    for i in range(n + 1):
        t = alg.pow(comps[i], alg.q ** (n - i))
        t = alg.pi_pow_mul(t, i)
        acc = t if acc is None else alg.add(acc, t)
    return acc


class WittVector:
    """Finite-length Witt vector with an eagerly cached ghost vector."""

    __slots__ = ("alg", "comps", "ghost")

    def __init__(self, alg, comps, ghost=None):
        self.alg = alg
        self.comps = list(comps)
        if ghost is None:
            ghost = [ghost_poly(alg, self.comps, n)
                     for n in range(len(self.comps))]
        self.ghost = ghost

    @property
    def length(self):
        return len(self.comps)

    def __add__(self, other):
        return witt_arith("add", self, other)

    def __mul__(self, other):
        return witt_arith("mul", self, other)

    def __neg__(self):
        u = [self.alg.neg(g) for g in self.ghost]
        return witt_unghost(self.alg, u)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, x):
        return witt_arith("scalar", self, x)

    def __repr__(self):
        return f"WittVector({self.comps!r})"


def witt_unghost(alg, u):
    """The unique preimage of u under the ghost map; levelwise recursion.

    Level n costs an exact division by pi^n, so n digits of precision.
    """
    comps = []
    for n, un in enumerate(u):
        rhs = un
        if n:
            prev = [alg.pow(c, alg.q) for c in comps]
            rhs = alg.add(un, alg.neg(ghost_poly(alg, prev, n - 1)))
        comps.append(alg.div_pi(rhs, n))
    return WittVector(alg, comps, ghost=list(u))


def witt_zero(alg, m):
    return WittVector(alg, [alg.zero()] * (m + 1))


def witt_one(alg, m):
    return WittVector(alg, [alg.one()] + [alg.zero()] * m)


def witt_arith(op, w1, arg):
    """Ghost-route arithmetic: add, mul, or scalar action of O_K."""
    alg = w1.alg
    if op == "scalar":
        x = alg.embed_scalar(arg)
        u = [alg.mul(x, g) for g in w1.ghost]
        return witt_unghost(alg, u)
    w2 = arg
    if w2.alg is not alg and w2.alg.__class__ is not alg.__class__:
        raise ValueError("witt vectors over different coefficient algebras")
    if w1.length != w2.length:
        raise ValueError("witt vectors of different lengths")
    if op == "add":
        u = [alg.add(a, b) for a, b in zip(w1.ghost, w2.ghost)]
    elif op == "mul":
        u = [alg.mul(a, b) for a, b in zip(w1.ghost, w2.ghost)]
    else:
        raise ValueError(f"unknown op {op!r}")
    return witt_unghost(alg, u)


def teichmuller(alg, a, m):
    """[a] = (a, 0, ..., 0), ghost vector of successive q-th powers."""
    comps = [a] + [alg.zero()] * m
    ghost = [alg.pow(a, alg.q ** n) for n in range(m + 1)]
    return WittVector(alg, comps, ghost=ghost)


def frobenius(w):
    """Ghost shift by one; output one shorter than the input."""
    return witt_unghost(w.alg, w.ghost[1:])


def verschiebung(w):
    """(a_0, ..., a_m) -> (0, a_0, ..., a_m), one longer."""
    alg = w.alg
    comps = [alg.zero()] + list(w.comps)
    ghost = [alg.zero()] + [alg.pi_pow_mul(g, 1) for g in w.ghost]
    return WittVector(alg, comps, ghost=ghost)


# ---------------------------------------------------------------------------
# universal structural polynomials
# ---------------------------------------------------------------------------

def structural_polys(ctx, n, x=None):
    """The addition, product, inverse, scalar, and Frobenius polynomials.

    Computed by unghosting over the polynomial algebra in X_0..X_n and
    Y_0..Y_n, which is pi-torsion-free, so every division is exact.
    Returns a dict with keys "S", "P", "I", "F" and, when x is given,
    "C"; each value is the list of levels 0..n (F one level deeper in
    its variable count).
    """
    if n > 2:
        raise ValueError("structural polynomials above level 2 blow up")
    names = [f"X{i}" for i in range(n + 2)] + [f"Y{i}" for i in range(n + 1)]
    alg = PolyAlgebra(ctx, names)
    xs = [alg.var(i) for i in range(n + 2)]
    ys = [alg.var(n + 2 + i) for i in range(n + 1)]
    gx = [ghost_poly(alg, xs, i) for i in range(n + 1)]
    gy = [ghost_poly(alg, ys, i) for i in range(n + 1)]
    out = {
        "S": witt_unghost(alg, [alg.add(a, b) for a, b in zip(gx, gy)]).comps,
        "P": witt_unghost(alg, [alg.mul(a, b) for a, b in zip(gx, gy)]).comps,
        "I": witt_unghost(alg, [alg.neg(a) for a in gx]).comps,
        "F": witt_unghost(
            alg, [ghost_poly(alg, xs, i + 1) for i in range(n + 1)]).comps,
    }
    if x is not None:
        xe = alg.embed_scalar(x)
        out["C"] = witt_unghost(alg, [alg.mul(xe, g) for g in gx]).comps
    return out


def classical_oracle(p, m, N=24):
    """Check W_m(F_p) against Z/p^m, exhaustively; True on full agreement.

    Componentwise structural polynomials reduced mod p give the ring
    operations on length-m vectors over F_p; the candidate isomorphism
    sends a vector to the ghost polynomial of its canonical integer
    lifts, reduced mod p^m.  Checks bijectivity, both ring operations on
    every pair, and the additive order of the identity.
    """
    from .padic import make_context
    from itertools import product as iproduct
    if m < 1 or m > 3:
        raise ValueError("oracle is exhaustive only for 1 <= m <= 3")
    ctx = make_context(p, N=N)
    polys = structural_polys(ctx, m - 1)
    nv = m
    sp = [pl.int_coeffs() for pl in polys["S"]]
    pp = [pl.int_coeffs() for pl in polys["P"]]

    def apply_mod_p(levels, a, b):
        # variable layout is X_0..X_m, Y_0..Y_{m-1}: one spare X for F
        vals = list(a) + [0] + list(b)
        out = []
        for lvl in levels:
            s = 0
            for e, c in lvl.items():
                t = c
                for i, k in enumerate(e):
                    if k:
                        t *= pow(vals[i], k, p)
                s += t
            out.append(s % p)
        return tuple(out)

    def to_zpm(w):
        # ghost at the top level with canonical integer lifts
        s = 0
        for i, a in enumerate(w):
            s += p ** i * pow(a, p ** (m - 1 - i), p ** m)
        return s % p ** m

    vecs = list(iproduct(range(p), repeat=nv))
    images = {to_zpm(w) for w in vecs}
    if len(images) != p ** m:
        return False
    for a in vecs:
        for b in vecs:
            if to_zpm(apply_mod_p(sp, a, b)) != (to_zpm(a) + to_zpm(b)) % p ** m:
                return False
            if to_zpm(apply_mod_p(pp, a, b)) != (to_zpm(a) * to_zpm(b)) % p ** m:
                return False
    one = tuple([1] + [0] * (m - 1))
    acc = one
    for k in range(1, p ** m):
        acc = apply_mod_p(sp, acc, one)
        if acc == (0,) * m and k + 1 != p ** m:
            return False
    return acc == (0,) * m


# ---------------------------------------------------------------------------
# the S_P construction and the valuation criterion
# ---------------------------------------------------------------------------

def validate_frobenius_series(ctx, coeffs):
    """P(0) = 0 and P = X^q mod pi: P reduces to Frobenius on the residue."""
    from .formal import lift_coeff
    coeffs = [lift_coeff(ctx, c) for c in coeffs]
    q = ctx.q
    if len(coeffs) <= q:
        raise NotLubinTate(f"series stops at degree {len(coeffs) - 1} < q = {q}")
    if not coeffs[0].is_zero_at_prec():
        raise NotLubinTate("constant term is not 0")
    for k, c in enumerate(coeffs):
        if c.v_lower() < 0:
            raise NotLubinTate(f"coefficient {k} is not integral")
        want = 1 if k == q else 0
        if (c - ctx.from_int(want)).v_lower() < 1:
            raise NotLubinTate(f"coefficient {k} is not {want} mod pi")
    return coeffs


def sP(h, P, m, D=None):
    """The Witt vector over the series ring with ghost (h, h(P), h(P(P)), ...)."""
    ring = h.ring
    if D is None:
        D = min(h.D, P.D)
    validate_frobenius_series(ring.ctx, P.coeffs())
    from .series import ser_compose
    alg = SeriesAlgebra(ring, D)
    u = [h.truncated(D)]
    for _ in range(m):
        u.append(ser_compose(u[-1], P.truncated(D), D))
    return witt_unghost(alg, u)


def sPa(h, P, a, m):
    """Specialization of sP at X = a: unghost of (h(a), h(P(a)), ...).

    Evaluating the ghost vector first is much cheaper than specializing
    the series components, and lands in the same Witt vector by
    functoriality.
    """
    ctx = a.ctx
    v = a.valuation()
    if not (v.determinate and v.v_pi > 0) and not (v.at_least > 0):
        raise ValueError("specialization point needs positive valuation")
    from .series import ser_convert
    hh = h if h.ring.ctx is ctx else ser_convert(h, ctx)
    PP = P if P.ring.ctx is ctx else ser_convert(P, ctx)
    validate_frobenius_series(ctx, PP.coeffs())
    alg = ElemAlgebra(ctx)
    pt = a
    u = [ser_eval(hh, pt)]
    for _ in range(m):
        pt = ser_eval(PP, pt)
        u.append(ser_eval(hh, pt))
    return witt_unghost(alg, u)


def key_valuation_criterion(h, P, a):
    """The valuation index r with v_p(h(0)) = r v_p(pi), read off components.

    Computes S_{P,a}(h) to length r + 1 and checks the biconditional in
    both directions: components 0..r-1 have positive valuation, component
    r is a unit, and conversely the first unit component sits at index r.
    Returns r, or math.inf when h(0) = 0 at working precision (then every
    computed component must have positive valuation).
    """
    ctx = a.ctx
    a0 = h.coeff(0)
    val = a0.valuation()
    if not val.determinate:
        if val.at_least >= 3:
            w = sPa(h, P, a, 2)
            for i, c in enumerate(w.comps):
                u = ElemAlgebra(ctx).unit_residue(c)
                if u is None:
                    raise IndeterminateValuation(
                        f"component {i} valuation undecidable")
                if u:
                    raise NotInGhostImage(
                        f"component {i} is a unit although h(0) = 0 at "
                        "working precision")
            return math.inf
        raise IndeterminateValuation(
            "constant term of h known only to O(pi^%d)" % val.at_least)
    r = val.v_pi
    w = sPa(h, P, a, r + 1)
    alg = ElemAlgebra(ctx)
    first_unit = None
    for i, c in enumerate(w.comps):
        u = alg.unit_residue(c)
        if u is None:
            raise IndeterminateValuation(f"component {i} valuation undecidable")
        if u and first_unit is None:
            first_unit = i
    if first_unit != r:
        raise NotInGhostImage(
            f"criterion failed: first unit component at {first_unit}, "
            f"expected {r}")
    return r


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def witt_to_json(w):
    from .padic import kelem_to_json
    from .series import ser_to_json
    if isinstance(w.alg, ElemAlgebra):
        return {"kind": "elem", "comps": [kelem_to_json(c) for c in w.comps]}
    if isinstance(w.alg, SeriesAlgebra):
        return {"kind": "series", "comps": [ser_to_json(c) for c in w.comps]}
    raise TypeError("only element and series Witt vectors serialize")


def witt_from_json(alg, obj):
    from .padic import kelem_from_json
    from .series import ser_from_json
    if obj["kind"] == "elem":
        comps = [kelem_from_json(alg.ctx, c) for c in obj["comps"]]
    elif obj["kind"] == "series":
        comps = [ser_from_json(alg.ctx, c) for c in obj["comps"]]
    else:
        raise ValueError(f"unknown witt payload {obj['kind']!r}")
    return WittVector(alg, comps)
