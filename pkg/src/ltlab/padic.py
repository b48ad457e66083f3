"""Exact truncated-precision arithmetic in finite extensions of Q_p.

A base field K/Q_p is presented as a two-stage tower: an unramified stage
Z_p[t]/(m(t)) of inertia degree f, followed by an optional Eisenstein stage
K = U[u]/(E(u)) of ramification degree e.  The residue field has q = p^f
elements and pi (= u, or p when e = 1) is the working uniformizer.

An element is stored as

    x = pi^(-shift) * y

where y is a digit vector of length e*f over Z/p^N in the basis
{u^i t^j : 0 <= i < e, 0 <= j < f}, together with an absolute precision
``abs_prec`` in pi-digits: the stored value is a representative of x modulo
pi^abs_prec and nothing more.  All arithmetic is exact on representatives;
precision fields only record how many digits of the result are meaningful.
Precision propagation follows the interval rules

    add/sub:  A = min(A_a, A_b)
    mul:      A = min(A_a + v(b), A_b + v(a))
    div:      A = min(A_a - v(b), A_b + v(a) - 2 v(b))

with the convention that an element indistinguishable from zero contributes
its precision as a valuation lower bound.  An element is *indistinguishable
from zero* when v(x) cannot be certified below abs_prec; asking to divide by
such an element, or to report its exact valuation, raises instead of
guessing.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    DivisionByIndistinguishableZero,
    HenselCriterionFailed,
    IndeterminateValuation,
    NotEisenstein,
    NotPrime,
    PrecisionExhausted,
    ReducibleModulus,
    RingMismatch,
)

# Sentinel for "valuation at least the container bound".
BIG = 1 << 40


def _is_prime(n):
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def _pval(x, p):
    """p-adic valuation of a nonnegative int; None when x == 0."""
    if x == 0:
        return None
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


# ---------------------------------------------------------------------------
# polynomial arithmetic over F_p, used only for context validation and
# residue-field inverses
# ---------------------------------------------------------------------------

def _fp_trim(a):
    while a and a[-1] == 0:
        a.pop()
    return a


def _fp_mulmod(a, b, mod, p):
    out = [0] * (len(a) + len(b) - 1) if a and b else []
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] = (out[i + j] + ai * bj) % p
    return _fp_divmod(out, mod, p)[1]


def _fp_divmod(a, b, p):
    a = list(a)
    _fp_trim(a)
    db, lb = len(b) - 1, b[-1]
    inv_lb = pow(lb, p - 2, p)
    q = [0] * max(0, len(a) - db)
    while len(a) - 1 >= db and a:
        c = (a[-1] * inv_lb) % p
        k = len(a) - 1 - db
        q[k] = c
        for j in range(len(b)):
            a[k + j] = (a[k + j] - c * b[j]) % p
        _fp_trim(a)
    return q, a


def _fp_powmod(a, n, mod, p):
    r = [1]
    while n:
        if n & 1:
            r = _fp_mulmod(r, a, mod, p)
        a = _fp_mulmod(a, a, mod, p)
        n >>= 1
    return r


def _fp_gcd(a, b, p):
    a, b = list(a), list(b)
    _fp_trim(a)
    _fp_trim(b)
    while b:
        a, b = b, _fp_divmod(a, b, p)[1]
    return a


def _fp_xgcd(a, b, p):
    # returns (g, s) with s*a = g mod b
    r0, r1 = list(a), list(b)
    s0, s1 = [1], []
    while _fp_trim(r1):
        q, r = _fp_divmod(r0, r1, p)
        r0, r1 = r1, r
        t = list(s0)
        for i, qi in enumerate(q):
            if qi:
                for j, sj in enumerate(s1):
                    while len(t) <= i + j:
                        t.append(0)
                    t[i + j] = (t[i + j] - qi * sj) % p
        _fp_trim(t)
        s0, s1 = s1, t
    return r0, s0


def _irreducible_mod_p(monic, p):
    """monic: full ascending coefficient list over F_p, degree f >= 1."""
    f = len(monic) - 1
    if f == 1:
        return True
    # X^(p^f) == X mod (monic), and gcd(X^(p^(f/l)) - X, monic) == 1 for
    # every prime l dividing f
    x = [0, 1]
    xq = _fp_powmod(x, p ** f, monic, p)
    diff = list(xq)
    while len(diff) < 2:
        diff.append(0)
    diff[1] = (diff[1] - 1) % p
    if _fp_trim(diff):
        return False
    ell = 2
    ff = f
    checked = set()
    while ff > 1:
        while ff % ell:
            ell += 1
        if ell not in checked:
            checked.add(ell)
            xk = _fp_powmod(x, p ** (f // ell), monic, p)
            d = list(xk)
            while len(d) < 2:
                d.append(0)
            d[1] = (d[1] - 1) % p
            g = _fp_gcd(d, monic, p)
            if len(g) - 1 >= 1:
                return False
        ff //= ell
    return True


def _canonical_irreducible(p, f):
    """Deterministic smallest monic irreducible of degree f mod p."""
    if f == 1:
        return [0, 1]
    bound = p ** f
    for code in range(bound):
        low = [(code // p ** i) % p for i in range(f)]
        cand = low + [1]
        if _irreducible_mod_p(cand, p):
            return cand
    raise ReducibleModulus(f"no irreducible of degree {f} mod {p}")  # unreachable


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------

class Context:
    """Arithmetic context for K/Q_p with container precision N p-digits.

    Moduli are kept as exact integer polynomials so that the same field can
    be rebuilt at any container precision; ``widened(extra)`` returns a
    context over the identical field with a larger container.  Digit vectors
    of length e*f are indexed by i*f + j for the basis monomial u^i t^j.
    """

    def __init__(self, p, f, N, unram_modulus=None, eisenstein_modulus=None):
        if not isinstance(p, int) or not _is_prime(p):
            raise NotPrime(f"p = {p!r} is not prime")
        if f < 1 or N < 4:
            raise NotPrime(f"need f >= 1 and N >= 4, got f={f}, N={N}")
        self.p = p
        self.f = f
        self.N = N
        self.q = p ** f
        self.mask = p ** N

        if unram_modulus is None:
            unram_modulus = _canonical_irreducible(p, f)
        unram_modulus = [int(c) for c in unram_modulus]
        if len(unram_modulus) != f + 1 or unram_modulus[-1] != 1:
            raise ReducibleModulus("unramified modulus must be monic of degree f")
        if not _irreducible_mod_p([c % p for c in unram_modulus], p):
            raise ReducibleModulus(f"{unram_modulus} is reducible mod {p}")
        self.unram_modulus = tuple(unram_modulus)

        if eisenstein_modulus is None:
            self.e = 1
            self.eisenstein_modulus = None
        else:
            eis = [self._as_uvec_exact(c) for c in eisenstein_modulus]
            e = len(eis) - 1
            if e < 1 or eis[-1] != tuple([1] + [0] * (f - 1)):
                raise NotEisenstein("Eisenstein modulus must be monic over the unramified stage")
            for c in eis[:-1]:
                if any(ci % p for ci in c):
                    raise NotEisenstein("lower Eisenstein coefficients must have positive valuation")
            if all(ci % (p * p) == 0 for ci in eis[0]):
                raise NotEisenstein("constant term must have valuation exactly 1")
            self.e = e
            self.eisenstein_modulus = tuple(eis[:-1])
        self.ef = self.e * self.f
        self.prec_cap = self.N * self.e

        self._build_tables()
        self._widened_cache = {}

    # -- construction helpers --

    def _as_uvec_exact(self, c):
        if isinstance(c, int):
            return tuple([c] + [0] * (self.f - 1))
        c = tuple(int(x) for x in c)
        if len(c) != self.f:
            raise NotEisenstein(f"coefficient {c!r} has wrong length for f={self.f}")
        return c

    def _build_tables(self):
        p, f, e, mask = self.p, self.f, self.e, self.mask
        # t^f .. t^(2f-2) reduced mod the unramified modulus, as U-vectors
        self._t_pows = []
        if f > 1:
            m = [c % mask for c in self.unram_modulus[:-1]]
            cur = [(-c) % mask for c in m]  # t^f
            self._t_pows.append(tuple(cur))
            for _ in range(f - 2):
                nxt = [0] + cur[:-1]
                top = cur[-1]
                for j in range(f):
                    nxt[j] = (nxt[j] - top * m[j]) % mask
                cur = nxt
                self._t_pows.append(tuple(cur))
        # u^e .. u^(2e-2) reduced mod the Eisenstein modulus, as digit vectors
        self._u_pows = []
        if e > 1:
            eis = [tuple(c % mask for c in vec) for vec in self.eisenstein_modulus]
            cur = [tuple((-c) % mask for c in vec) for vec in eis]  # u^e
            self._u_pows.append(self._flatten(cur))
            for _ in range(e - 2):
                top = cur[-1]
                nxt = [tuple([0] * f)] + cur[:-1]
                corr = [tuple((-c) % mask for c in vec) for vec in eis]
                for i in range(e):
                    nxt[i] = tuple((a + self._umul(top, corr[i])[j]) % mask for j, a in enumerate(nxt[i]))
                cur = nxt
                self._u_pows.append(self._flatten(cur))
            # constant used when dividing by pi: for y with v(y) >= 1,
            # y/u = (y with u-slots shifted down) + (a_0/p) * u_inv_digs,
            # where u_inv_digs = -(c_1 + c_2 u + ... + u^(e-1)) * (c_0/p)^(-1)
            c0p = tuple((c // p) % mask for c in eis[0])
            binv = [tuple((-c) % mask for c in eis[i]) for i in range(1, e)]
            binv.append(tuple([mask - 1] + [0] * (f - 1)))
            scale = self._u_inv_newton(c0p)
            self._u_inv_digs = self._flatten([self._umul(scale, vec) for vec in binv])

        zero = tuple([0] * self.ef)
        self._zero_digs = zero
        one = [0] * self.ef
        one[0] = 1
        self._one_digs = tuple(one)
        pi = [0] * self.ef
        if e == 1:
            pi[0] = p % mask
        else:
            pi[f] = 1
        self._pi_digs = tuple(pi)

        # exact integer value of pi^e when the Eisenstein modulus is the
        # binomial u^e + c_0 with scalar c_0; None when pi^e is not a
        # rational integer (then pi-power scalings go through kmul)
        if e == 1:
            self.pi_e_int = p
        else:
            lower = self.eisenstein_modulus
            scalar = (all(all(x == 0 for x in vec) for vec in lower[1:])
                      and all(x == 0 for x in lower[0][1:]))
            self.pi_e_int = -lower[0][0] if scalar else None
        if e > 1:
            # unit pi^e/p as a digit vector, for exact denominator moves
            self._pi_e_over_p = self.kdiv_p(self._u_pows[0])
            self._pipow_tbl = [self._one_digs, self._pi_digs]

    def _flatten(self, uvecs):
        out = []
        for vec in uvecs:
            out.extend(vec)
        return tuple(out)

    # -- unramified-stage vector ops (tuples of length f) --

    def _umul(self, a, b):
        f, mask = self.f, self.mask
        if f == 1:
            return ((a[0] * b[0]) % mask,)
        conv = [0] * (2 * f - 1)
        for i in range(f):
            ai = a[i]
            if ai:
                for j in range(f):
                    conv[i + j] += ai * b[j]
        out = [c % mask for c in conv[:f]]
        for k in range(f, 2 * f - 1):
            c = conv[k] % mask
            if c:
                red = self._t_pows[k - f]
                for j in range(f):
                    out[j] = (out[j] + c * red[j]) % mask
        return tuple(out)

    def _u_inv_newton(self, a):
        """Inverse of a p-adic unit in the unramified stage."""
        r = tuple(c % self.p for c in a)
        z = self._fq_inv(r)
        z = tuple(z[j] if j < len(z) else 0 for j in range(self.f))
        bits = 1
        two = tuple([2] + [0] * (self.f - 1))
        while bits < self.N:
            az = self._umul(a, z)
            corr = tuple((two[j] - az[j]) % self.mask for j in range(self.f))
            z = self._umul(z, corr)
            bits *= 2
        return z

    def _fq_inv(self, r):
        p, f = self.p, self.f
        if f == 1:
            return (pow(r[0], p - 2, p),)
        mbar = [c % p for c in self.unram_modulus]
        g, s = _fp_xgcd(list(r), mbar, p)
        if len(g) != 1:
            raise ZeroDivisionError("residue is not a unit")
        ginv = pow(g[0], p - 2, p)
        return tuple((ginv * (s[j] if j < len(s) else 0)) % p for j in range(f))

    # -- full digit-vector ops (tuples of length e*f) --

    def kadd(self, a, b):
        mask = self.mask
        return tuple((x + y) % mask for x, y in zip(a, b))

    def ksub(self, a, b):
        mask = self.mask
        return tuple((x - y) % mask for x, y in zip(a, b))

    def kneg(self, a):
        mask = self.mask
        return tuple((-x) % mask for x in a)

    def kint(self, a, n):
        mask = self.mask
        n %= mask
        return tuple((x * n) % mask for x in a)

    def kmul_uscalar(self, uvec, a):
        """Digit vector a times a scalar from the unramified stage."""
        out = []
        for i in range(self.e):
            out.append(self._umul(uvec, a[i * self.f:(i + 1) * self.f]))
        return self._flatten(out)

    def kmul(self, a, b):
        e, f, mask = self.e, self.f, self.mask
        if self.ef == 1:
            return ((a[0] * b[0]) % mask,)
        if e == 1:
            return self._umul(a, b)
        av = [a[i * f:(i + 1) * f] for i in range(e)]
        bv = [b[i * f:(i + 1) * f] for i in range(e)]
        conv = [None] * (2 * e - 1)
        for i in range(e):
            for j in range(e):
                t = self._umul(av[i], bv[j])
                if conv[i + j] is None:
                    conv[i + j] = list(t)
                else:
                    for k in range(f):
                        conv[i + j][k] = (conv[i + j][k] + t[k]) % mask
        out = list(self._flatten([tuple(c) for c in conv[:e]]))
        for k in range(e, 2 * e - 1):
            if conv[k] is None:
                continue
            prod = self.kmul_uscalar(tuple(conv[k]), self._u_pows[k - e])
            for j in range(self.ef):
                out[j] = (out[j] + prod[j]) % mask
        return tuple(out)

    def kval(self, a):
        """v_pi of a digit vector, or None when zero mod the container."""
        e, f, p = self.e, self.f, self.p
        best = None
        for i in range(e):
            vu = None
            for j in range(f):
                vc = _pval(a[i * f + j], p)
                if vc is not None and (vu is None or vc < vu):
                    vu = vc
                    if vu == 0:
                        break
            if vu is not None:
                cand = e * vu + i
                if best is None or cand < best:
                    best = cand
        return best

    def kdiv_p(self, a):
        return tuple(x // self.p for x in a)

    def kdiv_pi(self, a):
        """Exact division of a digit vector by pi; caller ensures v >= 1."""
        e, f = self.e, self.f
        if e == 1:
            return self.kdiv_p(a)
        w = list(a[f:]) + [0] * f
        a0p = tuple(x // self.p for x in a[:f])
        corr = self.kmul_uscalar(a0p, self._u_inv_digs)
        return tuple((w[j] + corr[j]) % self.mask for j in range(self.ef))

    def kmul_u(self, a):
        e, f, mask = self.e, self.f, self.mask
        out = [0] * f + list(a[:-f])
        top = tuple(a[(e - 1) * f:])
        if any(top):
            prod = self.kmul_uscalar(top, self._u_pows[0])
            for j in range(self.ef):
                out[j] = (out[j] + prod[j]) % mask
        return tuple(out)

    def kmul_pi_pow(self, a, k):
        """Multiply a digit vector by pi^k, k >= 0."""
        if k == 0:
            return a
        kp, r = divmod(k, self.e)
        if kp:
            if self.pi_e_int is not None:
                scale = pow(self.pi_e_int % self.mask, kp, self.mask)
                a = tuple((x * scale) % self.mask for x in a)
            else:
                # pi^e is not a rational integer; walk the power table
                for _ in range(kp * self.e):
                    a = self.kmul_u(a)
        for _ in range(r):
            a = self.kmul_u(a)
        return a

    def kinv_unit(self, a):
        """Inverse of a digit vector with v_pi = 0."""
        e, f, mask = self.e, self.f, self.mask
        if e == 1:
            return tuple(self._u_inv_newton(a))
        r = tuple(c % self.p for c in a[:f])
        z0 = self._fq_inv(r)
        z = self._flatten([z0] + [tuple([0] * f)] * (e - 1))
        steps = 1
        while steps < self.prec_cap:
            az = self.kmul(a, z)
            corr = list(self.kneg(az))
            corr[0] = (corr[0] + 2) % mask
            z = self.kmul(z, tuple(corr))
            steps *= 2
        return z

    # -- element factories --

    def zero(self, prec=None):
        return KElem(self, 0, self._zero_digs, self.prec_cap if prec is None else prec)

    def one(self):
        return KElem(self, 0, self._one_digs, self.prec_cap)

    def pi(self):
        return KElem(self, 0, self._pi_digs, self.prec_cap)

    def from_int(self, n):
        return KElem(self, 0, self.kint(self._one_digs, n), self.prec_cap)

    def from_fraction(self, fr):
        fr = Fraction(fr)
        if fr == 0:
            return self.zero()
        num, den = fr.numerator, fr.denominator
        vn = _pval(abs(num), self.p)
        vd = _pval(den, self.p)
        num_u = num // self.p ** vn
        den_u = den // self.p ** vd
        unit = (num_u * pow(den_u, -1, self.mask)) % self.mask
        w = vn - vd  # value = unit * p^w
        if w >= 0:
            digs = self.kint(self._one_digs, (unit * pow(self.p, w, self.mask)) % self.mask)
            return KElem(self, 0, digs, self.prec_cap)
        # p^w = pi^(e w) * (pi^e / p)^(-w); the second factor is a unit
        s = -self.e * w
        digs = self.kint(self._one_digs, unit)
        if self.e > 1:
            corr = self._one_digs
            for _ in range(-w):
                corr = self.kmul(corr, self._pi_e_over_p)
            digs = self.kmul(digs, corr)
        return KElem(self, s, digs, self.prec_cap - s)

    def from_digits(self, digs, shift=0, prec=None):
        digs = tuple(int(d) % self.mask for d in digs)
        if len(digs) != self.ef:
            raise RingMismatch(f"digit vector must have length {self.ef}")
        A = self.prec_cap - shift if prec is None else min(prec, self.prec_cap - shift)
        return KElem(self, shift, digs, A)

    # -- container management --

    def widened(self, extra):
        if extra <= 0:
            return self
        N2 = self.N + extra
        ctx = self._widened_cache.get(N2)
        if ctx is None:
            eis = None
            if self.e > 1:
                eis = [list(v) for v in self.eisenstein_modulus] + [[1] + [0] * (self.f - 1)]
            ctx = Context(self.p, self.f, N2, list(self.unram_modulus), eis)
            self._widened_cache[N2] = ctx
        return ctx

    def same_field(self, other):
        return (self.p == other.p and self.f == other.f and self.e == other.e
                and self.unram_modulus == other.unram_modulus
                and self.eisenstein_modulus == other.eisenstein_modulus)

    # -- misc --

    def residue_vectors(self):
        """All q residue-field elements as F_p coefficient tuples."""
        out = []
        for code in range(self.q):
            out.append(tuple((code // self.p ** j) % self.p for j in range(self.f)))
        return out

    def to_json(self):
        obj = {
            "p": self.p,
            "f": self.f,
            "unram_modulus": [int(c) for c in self.unram_modulus],
            "eisenstein_modulus": None,
            "N": self.N,
        }
        if self.e > 1:
            obj["eisenstein_modulus"] = [list(v) for v in self.eisenstein_modulus] + [[1] + [0] * (self.f - 1)]
        return obj

    @classmethod
    def from_json(cls, obj):
        return cls(obj["p"], obj["f"], obj["N"], obj.get("unram_modulus"),
                   obj.get("eisenstein_modulus"))

    def __repr__(self):
        ram = "" if self.e == 1 else f", e={self.e}"
        return f"Context(p={self.p}, f={self.f}{ram}, N={self.N})"


def make_context(p, f=1, eisenstein_modulus=None, N=40, unram_modulus=None):
    return Context(p, f, N, unram_modulus, eisenstein_modulus)


# ---------------------------------------------------------------------------
# elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValuationResult:
    """Result of a valuation query.

    ``v_pi``/``v_p`` are exact when ``determinate``; otherwise only the
    lower bound ``at_least`` (in pi-digits) is known.
    """
    determinate: bool
    v_pi: int | None
    v_p: Fraction | None
    at_least: int


class KElem:
    """One element of K at a fixed precision.  Immutable by convention."""

    __slots__ = ("ctx", "s", "digs", "A")

    def __init__(self, ctx, s, digs, A):
        self.ctx = ctx
        self.s = s
        self.digs = digs
        self.A = min(A, ctx.prec_cap - s)

    # -- inspection --

    def normalize(self):
        """Canonical form: unit digit vector, or all-zero digits with s=0."""
        v = self.ctx.kval(self.digs)
        if v is None:
            if not any(self.digs) and self.s == 0:
                return self
            return KElem(self.ctx, 0, self.ctx._zero_digs, self.A)
        if v == 0:
            return self
        d = self.digs
        for _ in range(v):
            d = self.ctx.kdiv_pi(d)
        return KElem(self.ctx, self.s - v, d, self.A)

    def valuation(self):
        v = self.ctx.kval(self.digs)
        if v is None or v - self.s >= self.A:
            return ValuationResult(False, None, None, self.A)
        vp = v - self.s
        return ValuationResult(True, vp, Fraction(vp, self.ctx.e), vp)

    def v_exact(self):
        r = self.valuation()
        if not r.determinate:
            raise IndeterminateValuation(
                f"valuation >= {r.at_least} pi-digits but not determinate at this precision")
        return r.v_pi

    def v_lower(self):
        r = self.valuation()
        return r.v_pi if r.determinate else r.at_least

    def is_zero_at_prec(self):
        return not self.valuation().determinate

    def residue(self):
        """Image in the residue field, as an F_p coefficient tuple."""
        x = self.normalize()
        if x.s > 0 and not x.is_zero_at_prec():
            raise IndeterminateValuation("element is not integral")
        if x.s < 0 or x.is_zero_at_prec():
            return tuple([0] * self.ctx.f)
        return tuple(c % self.ctx.p for c in x.digs[:self.ctx.f])

    # -- arithmetic --

    def _match(self, other):
        if isinstance(other, int):
            other = self.ctx.from_int(other)
        if not isinstance(other, KElem):
            return None
        if other.ctx is not self.ctx:
            raise RingMismatch(f"cannot mix {self.ctx!r} and {other.ctx!r}")
        return other

    def __add__(self, other):
        b = self._match(other)
        if b is None:
            return NotImplemented
        ctx = self.ctx
        S = max(self.s, b.s)
        da = ctx.kmul_pi_pow(self.digs, S - self.s)
        db = ctx.kmul_pi_pow(b.digs, S - b.s)
        A = min(self.A, b.A)
        if A <= 0:
            raise PrecisionExhausted("additive precision exhausted")
        return KElem(ctx, S, ctx.kadd(da, db), A)

    def __sub__(self, other):
        b = self._match(other)
        if b is None:
            return NotImplemented
        return self + (-b)

    def __neg__(self):
        return KElem(self.ctx, self.s, self.ctx.kneg(self.digs), self.A)

    def __mul__(self, other):
        b = self._match(other)
        if b is None:
            return NotImplemented
        ctx = self.ctx
        A = min(self.A + b.v_lower(), b.A + self.v_lower())
        if A <= -ctx.prec_cap:
            raise PrecisionExhausted("multiplicative precision exhausted")
        return KElem(ctx, self.s + b.s, ctx.kmul(self.digs, b.digs), A)

    def __truediv__(self, other):
        b = self._match(other)
        if b is None:
            return NotImplemented
        ctx = self.ctx
        bn = b.normalize()
        vr = bn.valuation()
        if not vr.determinate:
            raise DivisionByIndistinguishableZero(
                f"divisor indistinguishable from 0 (precision {b.A} pi-digits)")
        vb = vr.v_pi
        inv = ctx.kinv_unit(bn.digs)
        A = min(self.A - vb, b.A + self.v_lower() - 2 * vb)
        if A <= 0:
            raise PrecisionExhausted("division exhausted the available precision")
        return KElem(ctx, self.s - bn.s, ctx.kmul(self.digs, inv), A)

    __radd__ = __add__

    def __rsub__(self, other):
        b = self._match(other)
        if b is None:
            return NotImplemented
        return b - self

    __rmul__ = __mul__

    def __rtruediv__(self, other):
        b = self._match(other)
        if b is None:
            return NotImplemented
        return b / self

    def __pow__(self, n):
        if n < 0:
            return self.ctx.one() / self ** (-n)
        r = self.ctx.one()
        b = self
        while n:
            # Normalizing per step keeps the representation shift at the
            # true valuation; raw products double s every squaring and the
            # precision cap collapses long before the value runs out.
            if n & 1:
                r = (r * b).normalize()
            if n > 1:
                b = (b * b).normalize()
            n >>= 1
        return r

    def shift_pi(self, k):
        """Multiply by pi^k for any integer k, exactly."""
        return KElem(self.ctx, self.s - k, self.digs, self.A + k)

    def with_prec(self, A):
        return KElem(self.ctx, self.s, self.digs, min(self.A, A))

    # -- comparisons are precision-qualified --

    def __eq__(self, other):
        b = self._match(other)
        if b is None:
            return NotImplemented
        return (self - b).is_zero_at_prec()

    __hash__ = None

    def __repr__(self):
        x = self.normalize()
        v = "0" if x.is_zero_at_prec() else f"pi^{-x.s}*{list(x.digs)}"
        return f"KElem({v} + O(pi^{x.A}))"


# ---------------------------------------------------------------------------
# functional API
# ---------------------------------------------------------------------------

def arith(op, a, b):
    """Dispatch one arithmetic operation with precision propagation."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown op {op!r}")


def valuation(a):
    return a.valuation()


def convert(x, ctx2):
    """Move x to a context over the same field with a different container."""
    if x.ctx is ctx2:
        return x
    if not x.ctx.same_field(ctx2):
        raise RingMismatch("contexts present different fields")
    digs = tuple(d % ctx2.mask for d in x.digs)
    return KElem(ctx2, x.s, digs, x.A)


def teichmuller_root(ctx, r):
    """The (q-1)-st root of unity (or 0) reducing to the residue r.

    r may be an int, an F_p coefficient tuple of length f, or a KElem whose
    residue is taken.  Computed by iterating x -> x^q to stabilization,
    which is exact at the container precision.
    """
    if isinstance(r, KElem):
        r = r.residue()
    if isinstance(r, int):
        r = tuple((r // ctx.p ** j) % ctx.p for j in range(ctx.f))
    r = tuple(int(c) % ctx.p for c in r)
    if not any(r):
        return ctx.zero()
    x = ctx._flatten([r] + [tuple([0] * ctx.f)] * (ctx.e - 1))
    for _ in range(ctx.prec_cap + 8):
        nxt = _kpow_digs(ctx, x, ctx.q)
        if nxt == x:
            break
        x = nxt
    return KElem(ctx, 0, x, ctx.prec_cap)


def _kpow_digs(ctx, digs, n):
    res = None
    cur = digs
    while n:
        if n & 1:
            res = cur if res is None else ctx.kmul(res, cur)
        cur = ctx.kmul(cur, cur)
        n >>= 1
    return res if res is not None else ctx._one_digs


def mu_roots(ctx):
    """All q-1 Teichmuller roots of unity, deterministic order."""
    out = []
    for r in ctx.residue_vectors():
        if any(r):
            out.append(teichmuller_root(ctx, r))
    return out


def poly_eval(coeffs, x):
    """Horner evaluation of a coefficient list (ascending) at a KElem."""
    acc = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * x + c
    return acc


def hensel_lift(coeffs, x0):
    """Newton-lift a root of the polynomial given by ascending coeffs.

    Requires v(g(x0)) > 2 v(g'(x0)); raises HenselCriterionFailed otherwise.
    """
    dcoeffs = [c * i for i, c in enumerate(coeffs)][1:]
    g0 = poly_eval(coeffs, x0)
    gp0 = poly_eval(dcoeffs, x0)
    vg = g0.v_lower()
    try:
        vgp = gp0.v_exact()
    except IndeterminateValuation as exc:
        raise HenselCriterionFailed("derivative indistinguishable from 0") from exc
    if not (vg > 2 * vgp):
        raise HenselCriterionFailed(
            f"v(g(x0)) = {vg} is not greater than 2*v(g'(x0)) = {2 * vgp}")
    x = x0
    for _ in range(64):
        gx = poly_eval(coeffs, x)
        if gx.is_zero_at_prec():
            break
        step = gx / poly_eval(dcoeffs, x)
        if step.is_zero_at_prec():
            break
        x = x - step
    return x


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _int_to_base_p(n, p, N):
    digs = []
    for _ in range(N):
        n, r = divmod(n, p)
        digs.append(str(r))
    out = "".join(digs).rstrip("0")
    return out or "0"


def _int_from_base_p(s, p):
    n = 0
    for ch in reversed(s):
        n = n * p + int(ch)
    return n


def kelem_to_json(x):
    xn = x.normalize()
    ctx = x.ctx
    return {
        "shift": xn.s,
        "digits": [_int_to_base_p(d, ctx.p, ctx.N) for d in xn.digs],
        "abs_prec": xn.A,
    }


def kelem_from_json(ctx, obj):
    digs = tuple(_int_from_base_p(s, ctx.p) % ctx.mask for s in obj["digits"])
    return KElem(ctx, obj["shift"], digs, obj["abs_prec"])
