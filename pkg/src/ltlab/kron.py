"""Packed kernels for dense truncated power series.

A series over one of our coefficient rings is a vector of digit limbs over
Z/p^M.  Multiplying two such series is an integer convolution, so we pack
the limbs of a whole series into one big Python integer (classical Kronecker
substitution) and let CPython's big-integer multiplication do the work; the
per-limb bit width is chosen so that no convolution sum can overflow into
its neighbor.  Quotient-ring structure (the unramified modulus, the
Eisenstein modulus, a tower modulus) is restored after products by
masked-shift folds that also happen in the packed domain.

Precision and valuation bookkeeping ride along as numpy int64 arrays, one
entry per X-coefficient, combined with (min,+) convolutions.  Units are
"ring digits": pi-digits of K for K-coefficient series, and v_L-normalized
digits for series over a totally ramified extension L of degree d over K,
where one pi_K digit is worth d ring digits.  The common denominator shift
S of a packed series is counted in pi_K digits throughout.

Everything is exact modulo the container p^M.  The arrays A (absolute
precision) and V (valuation lower bound) are sound: they may understate
what is known but never overstate it.  A[k] = INF marks a coefficient that
is exactly zero as far as this pipeline is concerned (subject to the
container cap applied when elements are extracted).
"""

from __future__ import annotations

import math

import numpy as np

INF = 1 << 40
# anything at or above this is treated as INF; real digit counts are tiny,
# so INF plus a negative valuation still lands far inside the saturated zone
_SAT = INF >> 1


def sat(arr):
    """Clamp an int64 precision/valuation array back onto the INF sentinel."""
    return np.where(arr >= _SAT, INF, arr)


def minplus(u, v):
    """w[k] = min over i of u[i] + v[k-i], INF-saturated."""
    n, m = len(u), len(v)
    rv = v[::-1]
    if n > 1:
        pad = np.full(n - 1, INF, dtype=np.int64)
        rvp = np.concatenate([pad, rv, pad])
    else:
        rvp = rv
    W = np.lib.stride_tricks.sliding_window_view(rvp, n)
    out = np.min(u[None, :] + W[::-1], axis=1)
    return sat(out)


def _pack_limbs(limbs, bbytes):
    buf = bytearray(len(limbs) * bbytes)
    off = 0
    for x in limbs:
        if x:
            nb = (x.bit_length() + 7) >> 3
            buf[off:off + nb] = x.to_bytes(nb, "little")
        off += bbytes
    return int.from_bytes(buf, "little")


def _unpack_limbs(val, count, bbytes):
    need = count * bbytes
    blen = max(need, (val.bit_length() + 7) >> 3)
    raw = val.to_bytes(blen, "little")
    return [int.from_bytes(raw[k * bbytes:(k + 1) * bbytes], "little")
            for k in range(count)]


class PackedRing:
    """Layout and fold tables shared by every packed series over one ring.

    Subclasses fix ctx, unit (ring digits per pi_K digit), rank, and the
    variable layout ``dims``: a list of (reduced_extent, pre_extent) pairs,
    innermost variable first.  A pre extent of 2r-1 leaves room for products
    of reduced operands; folds bring degrees back under r afterwards.
    """

    DMAX = 1100
    GUARD = 20

    def _finish_init(self):
        ctx = self.ctx
        self.p = ctx.p
        self.mask = ctx.mask
        self.PR = 1
        self.strides = []
        for red, pre in self.dims:
            self.strides.append(self.PR)
            self.PR *= pre
        total = 1
        for red, pre in self.dims:
            total *= red
        assert total == self.rank
        bbits = 2 * ctx.N * math.log2(self.p) + math.log2(self.DMAX * self.rank)
        self.bbytes = (int(bbits) + self.GUARD + 7) // 8 + 1
        self.bbits = 8 * self.bbytes
        self._mask_cache = {}
        self._rep_cache = {}
        self._fold_ops = self._build_folds()

    # -- packed-int helpers --

    def _repeat_mask(self, nper, period, lo, hi):
        """All-ones limbs at slots lo..hi-1 of each of nper periods."""
        key = (nper, period, lo, hi)
        m = self._mask_cache.get(key)
        if m is None:
            bb = self.bbytes
            if period == 0:
                m = ((1 << (8 * bb * (hi - lo))) - 1) << (8 * bb * lo)
            else:
                pat = bytearray(period * bb)
                pat[lo * bb:hi * bb] = b"\xff" * ((hi - lo) * bb)
                m = int.from_bytes(bytes(pat) * nper, "little")
            self._mask_cache[key] = m
        return m

    def low_x_mask(self, nx):
        return self._repeat_mask(1, 0, 0, nx * self.PR)

    def rep_value(self, count, value):
        """Packed int with the same value in every one of count slots."""
        key = (count, value)
        m = self._rep_cache.get(key)
        if m is None:
            m = int.from_bytes(value.to_bytes(self.bbytes, "little") * count,
                               "little")
            self._rep_cache[key] = m
        return m

    def normalize_val(self, val, nslots):
        """Reduce every limb mod p^M; drops content beyond nslots."""
        limbs = _unpack_limbs(val, nslots, self.bbytes)
        mask = self.mask
        return _pack_limbs([x % mask for x in limbs], self.bbytes)

    # -- folds --

    def _build_folds(self):
        ops = []
        for lvl, (red, pre) in enumerate(self.dims):
            if pre <= 1 or red == pre:
                continue
            red_int = _pack_limbs(self._reduction_limbs(lvl), self.bbytes)
            ops.append((lvl, red, pre, self.strides[lvl], red_int))
        return ops

    def _reduction_limbs(self, lvl):
        """Reduced limb image of var_lvl^red_extent, one element block."""
        raise NotImplementedError

    def reduce_packed(self, val, nx):
        """Fold all variable degrees below their reduced extents.

        Returns a fully limb-normalized int; content beyond nx X-slots is
        dropped.  Limbs are normalized before every pass so a fold product
        never exceeds the limb width.
        """
        if not self._fold_ops:
            return val
        nslots = nx * self.PR
        while True:
            val = self.normalize_val(val, nslots)
            did = False
            for lvl, red, pre, stride, red_int in self._fold_ops:
                period = stride * pre
                nper = (nslots + period - 1) // period
                himask = self._repeat_mask(nper, period, 0, (pre - red) * stride)
                hi = (val >> (self.bbits * red * stride)) & himask
                if hi:
                    lomask = self._repeat_mask(nper, period, 0, red * stride)
                    val = (val & lomask) + hi * red_int
                    did = True
            if not did:
                return val

    # -- element adapters --

    def elem_raw(self, x):
        """(shift s in pi_K digits, limb list len PR, A units, V units)."""
        raise NotImplementedError

    def rescale_digs(self, limbs, k):
        """Limb list times pi_K^k for k >= 0, still reduced."""
        raise NotImplementedError

    def build_elem(self, S, limbs, A_units):
        raise NotImplementedError

    def zero_elem(self):
        raise NotImplementedError

    def one_elem(self):
        limbs = [0] * self.PR
        limbs[0] = 1
        return self.build_elem(0, limbs, INF)


class KPackedRing(PackedRing):
    """K itself: limbs are the e*f digit vector, ring digit = pi digit."""

    def __init__(self, ctx):
        self.ctx = ctx
        e, f = ctx.e, ctx.f
        self.unit = 1
        self.rank = e * f
        self.dims = [(f, 2 * f - 1 if f > 1 else 1),
                     (e, 2 * e - 1 if e > 1 else 1)]
        self._finish_init()

    def _slot(self, iu, it):
        return iu * self.strides[1] + it

    def _reduction_limbs(self, lvl):
        ctx = self.ctx
        limbs = [0] * self.PR
        if lvl == 0:
            for it, c in enumerate(ctx._t_pows[0]):
                limbs[self._slot(0, it)] = c
        else:
            for iu in range(ctx.e):
                for it in range(ctx.f):
                    limbs[self._slot(iu, it)] = ctx._u_pows[0][iu * ctx.f + it]
        return limbs

    def elem_raw(self, x):
        ctx = self.ctx
        if self.PR == ctx.e * ctx.f:
            limbs = list(x.digs)
        else:
            limbs = [0] * self.PR
            for iu in range(ctx.e):
                for it in range(ctx.f):
                    limbs[self._slot(iu, it)] = x.digs[iu * ctx.f + it]
        v = ctx.kval(x.digs)
        V = x.A if (v is None or v - x.s >= x.A) else v - x.s
        return x.s, limbs, x.A, V

    def rescale_digs(self, limbs, k):
        ctx = self.ctx
        if k == 0:
            return limbs
        digs = tuple(limbs[self._slot(iu, it)]
                     for iu in range(ctx.e) for it in range(ctx.f))
        digs = ctx.kmul_pi_pow(digs, k)
        out = [0] * self.PR
        for iu in range(ctx.e):
            for it in range(ctx.f):
                out[self._slot(iu, it)] = digs[iu * ctx.f + it]
        return out

    def build_elem(self, S, limbs, A_units):
        from .padic import KElem
        ctx = self.ctx
        digs = tuple(limbs[self._slot(iu, it)] % ctx.mask
                     for iu in range(ctx.e) for it in range(ctx.f))
        return KElem(ctx, S, digs, min(A_units, ctx.prec_cap - S))

    def zero_elem(self):
        return self.ctx.zero()

    def embed(self, x):
        return x

    def elem_to_json(self, x):
        from .padic import kelem_to_json
        return kelem_to_json(x)

    def elem_from_json(self, obj):
        from .padic import kelem_from_json
        return kelem_from_json(self.ctx, obj)

    def __eq__(self, other):
        return isinstance(other, KPackedRing) and other.ctx is self.ctx

    def __hash__(self):
        return hash(("K", id(self.ctx)))


class PackedSeries:
    """One truncated series in packed form.

    coefficient k  =  pi_K^(-S) * (element decoded from limb block k)
    A[k], V[k]: absolute precision / valuation lower bound, ring digits
    bound: upper bound on any limb magnitude, for overflow scheduling
    """

    __slots__ = ("ring", "D", "S", "val", "A", "V", "bound")

    def __init__(self, ring, D, S, val, A, V, bound):
        self.ring = ring
        self.D = D
        self.S = S
        self.val = val
        self.A = A
        self.V = V
        self.bound = bound

    def copy(self):
        return PackedSeries(self.ring, self.D, self.S, self.val,
                            self.A.copy(), self.V.copy(), self.bound)


def ps_pack(ring, elems, D, S=None):
    raws = [ring.elem_raw(x) for x in elems[:D + 1]]
    smax = max((r[0] for r in raws), default=0)
    if S is None:
        S = max(smax, 0)
    elif S < smax:
        raise ValueError("requested common shift below a coefficient shift")
    limbs = []
    A = np.full(D + 1, INF, dtype=np.int64)
    V = np.full(D + 1, INF, dtype=np.int64)
    for k, (s, lb, a, v) in enumerate(raws):
        if S > s:
            lb = ring.rescale_digs(lb, S - s)
        limbs.extend(lb)
        A[k] = min(a, INF)
        V[k] = min(v, INF)
    limbs.extend([0] * ((D + 1 - len(raws)) * ring.PR))
    return PackedSeries(ring, D, S, _pack_limbs(limbs, ring.bbytes),
                        A, V, ring.mask - 1)


def ps_zero(ring, D):
    A = np.full(D + 1, INF, dtype=np.int64)
    V = np.full(D + 1, INF, dtype=np.int64)
    return PackedSeries(ring, D, 0, 0, A, V, 0)


def ps_from_const(ring, x, D):
    return ps_add_const(ps_zero(ring, D), x)


def _cap_units(ring, S):
    return (ring.ctx.prec_cap - S) * ring.unit + (ring.unit - 1)


def ps_unpack(ps):
    ring = ps.ring
    ps = ps_normalized(ps)
    limbs = _unpack_limbs(ps.val, (ps.D + 1) * ring.PR, ring.bbytes)
    cap = _cap_units(ring, ps.S)
    return [ring.build_elem(ps.S, limbs[k * ring.PR:(k + 1) * ring.PR],
                            int(min(ps.A[k], cap)))
            for k in range(ps.D + 1)]


def ps_coeff(ps, k):
    ring = ps.ring
    ps = ps_normalized(ps)
    bits = ring.bbits * ring.PR
    block = (ps.val >> (bits * k)) & ((1 << bits) - 1)
    limbs = _unpack_limbs(block, ring.PR, ring.bbytes)
    return ring.build_elem(ps.S, limbs, int(min(ps.A[k], _cap_units(ring, ps.S))))


def ps_normalized(ps, force=False):
    ring = ps.ring
    if not force and ps.bound < ring.mask:
        return ps
    val = ring.normalize_val(ps.val, (ps.D + 1) * ring.PR)
    return PackedSeries(ring, ps.D, ps.S, val, ps.A, ps.V, ring.mask - 1)


def _ensure_headroom(ps, factor_bound, terms):
    if ps.bound * max(factor_bound, 1) * max(terms, 1) >= (1 << ps.ring.bbits):
        return ps_normalized(ps, force=True)
    return ps


def _one_limbs(ring):
    limbs = [0] * ring.PR
    limbs[0] = 1
    return limbs


def _mul_by_limbs(ps, limbs, s_elem, v_elem, a_elem):
    """Multiply by one reduced element given as a limb list."""
    ring = ps.ring
    eb = max(limbs) if limbs else 0
    ps = _ensure_headroom(ps, eb, ring.rank)
    eint = _pack_limbs(limbs, ring.bbytes)
    val = ps.val * eint if (eint and ps.val) else 0
    if ring._fold_ops:
        val = ring.reduce_packed(val, ps.D + 1)
        bound = ring.mask - 1
    else:
        bound = min(ps.bound * max(eb, 1) * ring.rank, (1 << ring.bbits) - 1)
    if a_elem >= INF and v_elem >= INF:
        A, V = ps.A, ps.V
    else:
        A = sat(np.minimum(ps.A + v_elem, ps.V + a_elem))
        V = sat(ps.V + v_elem)
    return PackedSeries(ring, ps.D, ps.S + s_elem, val, A, V, bound)


def ps_scale_elem(ps, x):
    s, limbs, a, v = ps.ring.elem_raw(x)
    return _mul_by_limbs(ps, limbs, s, v, a)


def ps_scale_int(ps, n):
    ring = ps.ring
    if n == 0:
        return ps_zero(ring, ps.D)
    from .padic import _pval
    vu = (_pval(abs(n), ring.ctx.p) or 0) * ring.ctx.e * ring.unit
    n_red = n % ring.mask
    if n_red == 0:
        # n is divisible by the whole container; value is 0 mod p^M but we
        # still know the valuation shift, keep a representative product
        n_red = ring.mask
    ps = _ensure_headroom(ps, n_red, 1)
    A = sat(ps.A + vu)
    V = sat(ps.V + vu)
    return PackedSeries(ring, ps.D, ps.S, ps.val * n_red, A, V,
                        min(ps.bound * n_red, (1 << ring.bbits) - 1))


def ps_neg(ps):
    ring = ps.ring
    ps = ps_normalized(ps)
    if ps.val == 0:
        return ps
    rep = ring.rep_value((ps.D + 1) * ring.PR, ring.mask)
    # limbs become p^M - x, i.e. the negated residue (p^M when x was 0)
    return PackedSeries(ring, ps.D, ps.S, rep - ps.val, ps.A.copy(),
                        ps.V.copy(), 2 * ring.mask)


def _raise_shift(ps, delta):
    """Multiply the stored limbs by pi^delta and add delta to S (value kept)."""
    if delta <= 0:
        return ps
    ring = ps.ring
    if ring.ctx.e == 1:
        scale = ring.ctx.p ** delta
        out = PackedSeries(ring, ps.D, ps.S + delta, ps.val * scale,
                           ps.A, ps.V, ps.bound * scale)
        if out.bound >= (1 << ring.bbits):
            out = ps_normalized(out, force=True)
        return out
    # ramified: pi^delta is a genuine ring element, go through one product
    return _mul_by_limbs(ps, ring.rescale_digs(_one_limbs(ring), delta),
                         delta, INF, INF)


def _aligned(pa, pb):
    if pa.S < pb.S:
        pa = _raise_shift(pa, pb.S - pa.S)
    elif pb.S < pa.S:
        pb = _raise_shift(pb, pa.S - pb.S)
    return pa, pb


def _truncate(ps, D):
    if D >= ps.D:
        return ps
    ring = ps.ring
    return PackedSeries(ring, D, ps.S, ps.val & ring.low_x_mask(D + 1),
                        ps.A[:D + 1].copy(), ps.V[:D + 1].copy(), ps.bound)


def ps_add(pa, pb):
    ring = pa.ring
    if ring != pb.ring:
        raise ValueError("ring mismatch in packed add")
    D = min(pa.D, pb.D)
    pa, pb = _truncate(pa, D), _truncate(pb, D)
    pa, pb = _aligned(pa, pb)
    out = PackedSeries(ring, D, pa.S, pa.val + pb.val,
                       np.minimum(pa.A, pb.A), np.minimum(pa.V, pb.V),
                       pa.bound + pb.bound)
    if out.bound >= (1 << ring.bbits):
        out = ps_normalized(out, force=True)
    return out


def ps_sub(pa, pb):
    return ps_add(pa, ps_neg(pb))


def ps_xshift(ps, m, D=None):
    """Multiply by X^m."""
    if m == 0:
        return ps if D is None else _truncate(ps, D)
    ring = ps.ring
    D = ps.D + m if D is None else D
    pad = np.full(min(m, D + 1), INF, dtype=np.int64)
    A = np.concatenate([pad, ps.A])[:D + 1]
    V = np.concatenate([pad, ps.V])[:D + 1]
    val = ps.val << (ring.bbits * ring.PR * m)
    if ps.D + m > D:
        val &= ring.low_x_mask(D + 1)
    return PackedSeries(ring, D, ps.S, val, A, V, ps.bound)


def ps_mul(pa, pb, D=None):
    ring = pa.ring
    if ring != pb.ring:
        raise ValueError("ring mismatch in packed mul")
    full = pa.D + pb.D
    if D is None:
        D = full
    terms = (min(pa.D, pb.D) + 1) * ring.rank
    pa = _ensure_headroom(pa, pb.bound, terms)
    pb = _ensure_headroom(pb, pa.bound, terms)
    val = pa.val * pb.val if (pa.val and pb.val) else 0
    if ring._fold_ops:
        val = ring.reduce_packed(val, min(full, D) + 1)
        bound = ring.mask - 1
    else:
        if full > D:
            val &= ring.low_x_mask(D + 1)
        bound = min(pa.bound * pb.bound * terms, (1 << ring.bbits) - 1)
    A = np.minimum(minplus(pa.A, pb.V), minplus(pa.V, pb.A))[:D + 1]
    V = minplus(pa.V, pb.V)[:D + 1]
    if len(A) < D + 1:
        padlen = D + 1 - len(A)
        A = np.concatenate([A, np.full(padlen, INF, dtype=np.int64)])
        V = np.concatenate([V, np.full(padlen, INF, dtype=np.int64)])
    # Shifts add under multiplication, so power chains would drag S up
    # linearly and starve the extraction cap; strip straight away.
    return ps_strip(PackedSeries(ring, D, pa.S + pb.S, val, A, V, bound))


def ps_strip(ps):
    """Lower S to what the valuation floor requires; value-preserving.

    Stripping pi^t off every limb is a plain integer division only when
    pi^e is a rational integer c (modulus u^e - c); then pi^t = c^(t/e).
    Other moduli simply keep their shift, which costs container headroom
    but never correctness.
    """
    ring = ps.ring
    c = ring.ctx.pi_e_int
    if c is None or abs(c) != ring.ctx.p:
        return ps
    vmin = int(ps.V.min())
    needed = max(0, -(vmin // ring.unit)) if vmin < 0 else 0
    t = ps.S - needed
    t -= t % ring.ctx.e
    if t <= 0:
        return ps
    ps = ps_normalized(ps, force=True)
    m = t // ring.ctx.e
    val, rem = divmod(ps.val, abs(c) ** m)
    if rem:
        # V promised more divisibility than the limbs actually have; play safe
        return ps
    # The division is only exact modulo p^(M-m): digits above the old-shift
    # cap are garbage afterwards, so freeze that cap into A before S drops.
    cap = (ring.ctx.prec_cap - ps.S) * ring.unit
    A = np.minimum(ps.A, cap)
    out = PackedSeries(ring, ps.D, ps.S - t, val, A, ps.V, ps.bound)
    if c < 0 and m % 2:
        out = ps_neg(out)
    return out


def ps_add_const(ps, x, slot=0):
    """Add one ring element at X^slot."""
    ring = ps.ring
    s, limbs, a, v = ring.elem_raw(x)
    if s > ps.S:
        ps = _raise_shift(ps, s - ps.S)
    if ps.S > s:
        limbs = ring.rescale_digs(limbs, ps.S - s)
    val = ps.val + (_pack_limbs(limbs, ring.bbytes) << (ring.bbits * ring.PR * slot))
    A = ps.A.copy()
    V = ps.V.copy()
    A[slot] = min(A[slot], a)
    V[slot] = min(V[slot], v)
    out = PackedSeries(ring, ps.D, ps.S, val, A, V,
                       ps.bound + (max(limbs) if limbs else 0))
    if out.bound >= (1 << ring.bbits):
        out = ps_normalized(out, force=True)
    return out


# ---------------------------------------------------------------------------
# composition, reciprocal, reversion
# ---------------------------------------------------------------------------

def horner_compose(f_elems, g, D):
    """f(g(X)) for a PackedSeries g with zero constant term."""
    ring = g.ring
    if not f_elems:
        return ps_zero(ring, D)
    H = ps_from_const(ring, f_elems[-1], D)
    for k in range(len(f_elems) - 2, -1, -1):
        H = ps_mul(H, g, D)
        H = ps_add_const(H, f_elems[k])
        H = ps_strip(H)
    return H


def ps_reciprocal(u, D):
    """1/u for a series whose constant term is a unit."""
    ring = u.ring
    one = ring.one_elem()
    r_elems = [one / ps_coeff(u, 0)]
    t = 0
    while t < D:
        t = min(2 * t + 1, D)
        r = ps_pack(ring, r_elems, t)
        ur = ps_mul(_truncate(u, t), r, t)
        corr = ps_add_const(ps_neg(ur), one + one)
        r = ps_strip(ps_mul(r, corr, t))
        r_elems = ps_unpack(r)
    return ps_pack(ring, r_elems, D)


def newton_reversion(f_elems, D, ring):
    """Compositional inverse of f = f_1 X + ..., f_1 a unit, f_0 = 0."""
    one = ring.one_elem()
    df = [f_elems[k] * k for k in range(1, len(f_elems))]
    h_elems = [ring.zero_elem(), one / f_elems[1]]
    t = 1
    while t < D:
        t = min(2 * t, D)
        h = ps_pack(ring, h_elems, t)
        fh = horner_compose(f_elems[:t + 1], h, t)
        num = ps_add_const(fh, -one, slot=1)  # f(h) - X
        dfh = horner_compose(df[:t + 1], h, t)
        delta = ps_mul(num, ps_reciprocal(dfh, t), t)
        h_elems = ps_unpack(ps_strip(ps_sub(h, delta)))
    return h_elems[:D + 1]


def _multinomial(k, idx):
    out = 1
    rem = k
    for a in idx:
        out *= math.comb(rem, a)
        rem -= a
    return out


def _limb_mul_reduce(ring, la, lb):
    """Product of two reduced limb lists, reduced again, limbs mod p^M."""
    ia = _pack_limbs(la, ring.bbytes)
    ib = _pack_limbs(lb, ring.bbytes)
    v = ia * ib
    if ring._fold_ops:
        v = ring.reduce_packed(v, 1)
        return _unpack_limbs(v, ring.PR, ring.bbytes)
    return [x % ring.mask for x in _unpack_limbs(v, ring.PR, ring.bbytes)]


def taylor_compose(f_elems, head, tail, D, ring):
    """f(g) for sparse g = head*X + sum_t gamma_t X^(m_t) with all m_t >= 2.

    Taylor split around the linear part: with T = g - head*X,

        f(g) = sum_k  T_k(X) * T^k,   T_k[j] = C(j+k, k) f_{j+k} head^j,

    and T^k expanded by the multinomial theorem over the sparse tail terms.
    Each level-k contribution is a single packed product of the dense T_k
    against the sparse packed T^k, accumulated without intermediate
    unpacking.  Coefficients of f must already live in `ring`.
    """
    from .padic import _pval

    p = ring.ctx.p
    e = ring.ctx.e
    one = ring.one_elem()
    Df = len(f_elems) - 1
    e1 = min((m for m, _ in tail), default=D + 1)
    kmax = min(D // e1, Df) if tail else 0

    head_pows = [(0, _one_limbs(ring), INF, INF)]
    cur = one
    for _ in range(D):
        cur = cur * head
        head_pows.append(ring.elem_raw(cur))

    raw_tail = [ring.elem_raw(g) for (_, g) in tail]
    smax_t = max((r[0] for r in raw_tail), default=0)
    raw_f = [ring.elem_raw(x) for x in f_elems]
    S_f = max((r[0] for r in raw_f), default=0)
    S_glob = kmax * smax_t

    acc = 0
    accA = np.full(D + 1, INF, dtype=np.int64)
    accV = np.full(D + 1, INF, dtype=np.int64)
    blockbits = ring.bbits * ring.PR
    t_terms = len(tail)

    # level-k entries: multi-index -> (limbs at shift k*smax_t, A, V)
    G = {(0,) * t_terms: (_one_limbs(ring), INF, INF)}

    for k in range(kmax + 1):
        jmax = min(Df - k, D - k * e1)
        if jmax < 0:
            break
        tlimbs = []
        TA = np.empty(jmax + 1, dtype=np.int64)
        TV = np.empty(jmax + 1, dtype=np.int64)
        for j in range(jmax + 1):
            sf, lf, af, vf = raw_f[j + k]
            _, lh, ah, vh = head_pows[j]
            if S_f > sf:
                lf = ring.rescale_digs(lf, S_f - sf)
            prod = lf if j == 0 else _limb_mul_reduce(ring, lf, lh)
            binom = math.comb(j + k, k)
            vb = 0
            if binom > 1:
                vb = (_pval(binom, p) or 0) * e * ring.unit
                bred = binom % ring.mask
                prod = [(x * bred) % ring.mask for x in prod]
            tlimbs.extend(prod)
            TA[j] = min(min(af + vh, vf + ah) + vb, INF)
            TV[j] = min(vf + vh + vb, INF)
            if TA[j] >= _SAT:
                TA[j] = INF
            if TV[j] >= _SAT:
                TV[j] = INF
        I_k = _pack_limbs(tlimbs, ring.bbytes)

        lift = (kmax - k) * smax_t  # bring level-k shift up to S_glob
        for idx, (glimbs, ga, gv) in G.items():
            off = 0
            for t in range(t_terms):
                off += idx[t] * tail[t][0]
            if off > D:
                continue
            mcoef = _multinomial(k, idx)
            vb = 0
            gl = glimbs
            if mcoef > 1:
                vb = (_pval(mcoef, p) or 0) * e * ring.unit
                mred = mcoef % ring.mask
                gl = [(x * mred) % ring.mask for x in gl]
            if lift:
                gl = ring.rescale_digs(gl, lift)
            gint = _pack_limbs(gl, ring.bbytes)
            if gint and I_k:
                acc += (I_k * gint) << (blockbits * off)
            n = min(jmax, D - off)
            if n >= 0:
                candA = sat(np.minimum(TA[:n + 1] + (gv + vb), TV[:n + 1] + (ga + vb)))
                candV = sat(TV[:n + 1] + (gv + vb))
                sl = slice(off, off + n + 1)
                accA[sl] = np.minimum(accA[sl], np.minimum(candA, INF))
                accV[sl] = np.minimum(accV[sl], np.minimum(candV, INF))

        if k == kmax:
            break
        G2 = {}
        for idx, (glimbs, ga, gv) in G.items():
            for t in range(t_terms):
                nidx = list(idx)
                nidx[t] += 1
                nidx = tuple(nidx)
                lead = next(i for i, a in enumerate(nidx) if a)
                if lead != t or nidx in G2:
                    continue
                off = 0
                for tt in range(t_terms):
                    off += nidx[tt] * tail[tt][0]
                if off > D:
                    continue
                st, lt, at_, vt = raw_tail[t]
                prod = _limb_mul_reduce(ring, glimbs, lt)
                if smax_t > st:
                    prod = ring.rescale_digs(prod, smax_t - st)
                G2[nidx] = (prod, min(min(ga + vt, gv + at_), INF),
                            min(gv + vt, INF))
        G = G2

    out = PackedSeries(ring, D, S_f + S_glob, acc, accA, accV,
                       (1 << ring.bbits) - 1)
    out = ps_normalized(out, force=True)
    if ring._fold_ops:
        out.val = ring.reduce_packed(out.val, D + 1)
    return ps_strip(out)
