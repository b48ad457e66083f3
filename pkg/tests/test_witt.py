"""Ramified Witt vectors: ghost closed forms, ring axioms, classical oracles."""

import json
import math
import random
from fractions import Fraction
from math import comb

import pytest

from ltlab.errors import (
    IndeterminateValuation,
    NotInGhostImage,
    NotLubinTate,
)
from ltlab.formal import lift_coeff
from ltlab.padic import make_context
from ltlab.series import Series, ring_for, ser_compose, ser_eval
from ltlab.witt import (
    ElemAlgebra,
    SeriesAlgebra,
    WittVector,
    classical_oracle,
    frobenius,
    ghost_poly,
    key_valuation_criterion,
    sP,
    sPa,
    structural_polys,
    teichmuller,
    validate_frobenius_series,
    verschiebung,
    witt_from_json,
    witt_one,
    witt_to_json,
    witt_unghost,
    witt_zero,
)

CONTEXTS = [
    ("p2", lambda: make_context(2, N=18)),
    ("p3f2", lambda: make_context(3, f=2, N=14)),
    ("p3e2", lambda: make_context(3, eisenstein_modulus=[3, 0, 1], N=12)),
]


def rand_vec(ctx, rng, m):
    """Length m+1 integral components, lifted exactly from small recipes."""
    return [lift_coeff(ctx, tuple(rng.randrange(0, ctx.p ** 3) for _ in range(3)))
            for _ in range(m + 1)]


def assert_same(a, b, tag=""):
    d = a - b
    assert d.is_zero_at_prec(), (tag, repr(a), repr(b))


def assert_witt_same(w1, w2, tag=""):
    assert w1.length == w2.length, tag
    for n, (a, b) in enumerate(zip(w1.comps, w2.comps)):
        assert_same(a, b, (tag, n))


# -- ghost map -----------------------------------------------------------

def test_ghost_closed_forms():
    ctx = make_context(3, N=16)
    alg = ElemAlgebra(ctx)
    a = [ctx.from_int(7), ctx.from_int(4), ctx.from_int(11)]
    pi = ctx.pi()
    assert_same(ghost_poly(alg, a, 0), a[0], "level 0")
    assert_same(ghost_poly(alg, a, 1), a[0] ** 3 + pi * a[1], "level 1")
    assert_same(ghost_poly(alg, a, 2),
                a[0] ** 9 + pi * a[1] ** 3 + pi * pi * a[2], "level 2")


@pytest.mark.parametrize("tag,mk", CONTEXTS)
def test_unghost_inverts_ghost(tag, mk):
    ctx = mk()
    alg = ElemAlgebra(ctx)
    rng = random.Random(f"roundtrip:{tag}")
    for t in range(5):
        comps = rand_vec(ctx, rng, 3)
        w = WittVector(alg, comps)
        back = witt_unghost(alg, w.ghost)
        for n in range(4):
            assert_same(back.comps[n], comps[n], (tag, t, n))


def test_unghost_rejects_unit_discrepancy():
    ctx = make_context(3, N=30)
    alg = ElemAlgebra(ctx)
    with pytest.raises(NotInGhostImage, match="valuation 0"):
        witt_unghost(alg, [ctx.one(), ctx.from_int(2)])


def test_unghost_rejects_shallow_divisibility():
    ctx = make_context(3, N=30)
    alg = ElemAlgebra(ctx)
    # u_2 - W_1(a_0^q, a_1^q) = pi, one level short of the pi^2 needed
    with pytest.raises(NotInGhostImage, match="valuation 1"):
        witt_unghost(alg, [ctx.one(), ctx.one(), ctx.one() + ctx.pi()])


def test_unghost_refuses_to_guess_at_low_precision():
    ctx = make_context(3, N=8)
    alg = ElemAlgebra(ctx)
    fuzzy = ctx.pi().with_prec(1)
    with pytest.raises(NotInGhostImage, match="cannot certify"):
        alg.div_pi(fuzzy, 2)


# -- ring structure through the ghost route ------------------------------

@pytest.mark.parametrize("tag,mk", CONTEXTS)
def test_zero_and_one_are_neutral(tag, mk):
    ctx = mk()
    alg = ElemAlgebra(ctx)
    rng = random.Random(f"neutral:{tag}")
    w = WittVector(alg, rand_vec(ctx, rng, 3))
    assert_witt_same(w + witt_zero(alg, 3), w, "w + 0")
    assert_witt_same(w * witt_one(alg, 3), w, "w * 1")
    assert_witt_same(w + (-w), witt_zero(alg, 3), "w - w")


@pytest.mark.parametrize("tag,mk", CONTEXTS)
def test_ring_axioms_on_random_triples(tag, mk):
    ctx = mk()
    alg = ElemAlgebra(ctx)
    rng = random.Random(f"axioms:{tag}")
    for t in range(3):
        a = WittVector(alg, rand_vec(ctx, rng, 2))
        b = WittVector(alg, rand_vec(ctx, rng, 2))
        c = WittVector(alg, rand_vec(ctx, rng, 2))
        assert_witt_same(a + b, b + a, (t, "add comm"))
        assert_witt_same((a + b) + c, a + (b + c), (t, "add assoc"))
        assert_witt_same(a * b, b * a, (t, "mul comm"))
        assert_witt_same((a * b) * c, a * (b * c), (t, "mul assoc"))
        assert_witt_same(a * (b + c), a * b + a * c, (t, "distrib"))


def test_scalar_action():
    ctx = make_context(3, N=16)
    alg = ElemAlgebra(ctx)
    rng = random.Random("scalar")
    w = WittVector(alg, rand_vec(ctx, rng, 3))
    assert_witt_same(w.scale(3), w + w + w, "3.w")
    assert_witt_same(w.scale(1), w, "1.w")
    assert_witt_same(w.scale(0), witt_zero(alg, 3), "0.w")


# -- Teichmuller, Frobenius, Verschiebung --------------------------------

def test_teichmuller_ghost_and_product():
    ctx = make_context(3, N=16)
    alg = ElemAlgebra(ctx)
    a = ctx.from_int(5)
    b = ctx.from_int(7)
    ta = teichmuller(alg, a, 2)
    # the stated ghost must agree with the one recomputed from components
    recomputed = WittVector(alg, ta.comps)
    for n in range(3):
        assert_same(ta.ghost[n], recomputed.ghost[n], n)
    assert_witt_same(ta * teichmuller(alg, b, 2),
                     teichmuller(alg, a * b, 2), "[a][b] = [ab]")


def test_frobenius_on_teichmuller():
    ctx = make_context(3, f=2, N=14)
    alg = ElemAlgebra(ctx)
    a = lift_coeff(ctx, (2, 5, 1))
    assert_witt_same(frobenius(teichmuller(alg, a, 3)),
                     teichmuller(alg, a ** ctx.q, 2), "F[a] = [a^q]")


@pytest.mark.parametrize("tag,mk", CONTEXTS)
def test_frobenius_congruence(tag, mk):
    """F(a) agrees with componentwise q-th powers modulo pi."""
    ctx = mk()
    alg = ElemAlgebra(ctx)
    rng = random.Random(f"frobcong:{tag}")
    for t in range(4):
        comps = rand_vec(ctx, rng, 3)
        f = frobenius(WittVector(alg, comps))
        for n, c in enumerate(f.comps):
            d = c - comps[n] ** ctx.q
            v = d.valuation()
            assert (not v.determinate) or v.v_pi >= 1, (tag, t, n, repr(d))


def test_verschiebung_ghost_and_additivity():
    ctx = make_context(3, N=16)
    alg = ElemAlgebra(ctx)
    rng = random.Random("versch")
    a = WittVector(alg, rand_vec(ctx, rng, 2))
    b = WittVector(alg, rand_vec(ctx, rng, 2))
    va = verschiebung(a)
    assert va.comps[0].is_zero_at_prec()
    for n in range(1, 4):
        assert_same(va.comps[n], a.comps[n - 1], n)
    recomputed = WittVector(alg, va.comps)
    for n in range(4):
        assert_same(va.ghost[n], recomputed.ghost[n], n)
    assert_witt_same(verschiebung(a + b), va + verschiebung(b), "V additive")


def test_frobenius_verschiebung_is_pi():
    for tag, mk in CONTEXTS:
        ctx = mk()
        alg = ElemAlgebra(ctx)
        rng = random.Random(f"fv:{tag}")
        w = WittVector(alg, rand_vec(ctx, rng, 3))
        assert_witt_same(frobenius(verschiebung(w)), w.scale((0, 1)), tag)


# -- universal structural polynomials ------------------------------------

def test_structural_level0_closed_forms():
    ctx = make_context(3, N=16)
    polys = structural_polys(ctx, 0, x=5)
    # layout: X0, X1, Y0
    assert polys["S"][0].int_coeffs() == {(1, 0, 0): 1, (0, 0, 1): 1}
    assert polys["P"][0].int_coeffs() == {(1, 0, 1): 1}
    assert polys["I"][0].int_coeffs() == {(1, 0, 0): ctx.mask - 1}
    assert polys["F"][0].int_coeffs() == {(3, 0, 0): 1, (0, 1, 0): 3}
    assert polys["C"][0].int_coeffs() == {(1, 0, 0): 5}


def mod8(d, p):
    """Coefficients reduced at p^8, safely below every certified precision."""
    return {e: v % p ** 8 for e, v in d.items()}


@pytest.mark.parametrize("p", [2, 3, 5])
def test_classical_addition_level1(p):
    """S_1 = X_1 + Y_1 - sum over 0 < j < p of (C(p,j)/p) X_0^j Y_0^(p-j)."""
    ctx = make_context(p, N=16)
    got = structural_polys(ctx, 1)["S"][1].int_coeffs()
    want = {(0, 1, 0, 0, 0): 1, (0, 0, 0, 0, 1): 1}
    for j in range(1, p):
        want[(j, 0, 0, p - j, 0)] = -(comb(p, j) // p)
    assert mod8(got, p) == mod8(want, p)


@pytest.mark.parametrize("p", [2, 3])
def test_classical_product_level1(p):
    """P_1 = X_0^p Y_1 + X_1 Y_0^p + p X_1 Y_1."""
    ctx = make_context(p, N=16)
    got = structural_polys(ctx, 1)["P"][1].int_coeffs()
    want = {
        (p, 0, 0, 0, 1): 1,
        (0, 1, 0, p, 0): 1,
        (0, 1, 0, 0, 1): p,
    }
    assert mod8(got, p) == mod8(want, p)


def test_classical_inverse_level1_p2():
    got = structural_polys(make_context(2, N=16), 1)["I"][1].int_coeffs()
    want = {(2, 0, 0, 0, 0): -1, (0, 1, 0, 0, 0): -1}
    assert mod8(got, 2) == mod8(want, 2)


@pytest.mark.parametrize("tag,mk", [CONTEXTS[0], CONTEXTS[2]])
@pytest.mark.parametrize("n", [1, 2])
def test_structural_polys_match_ghost_route(tag, mk, n):
    """Specializing the universal polynomials reproduces the arithmetic."""
    ctx = mk()
    alg = ElemAlgebra(ctx)
    rng = random.Random(f"structural:{tag}:{n}")
    polys = structural_polys(ctx, n, x=(0, 1))
    a = WittVector(alg, rand_vec(ctx, rng, n + 1))
    b = WittVector(alg, rand_vec(ctx, rng, n))
    short = WittVector(alg, a.comps[:n + 1])
    assign = a.comps + b.comps
    pairs = [
        ("S", short + b), ("P", short * b), ("I", -short),
        ("C", short.scale((0, 1))),
    ]
    for key, want in pairs:
        for lvl in range(n + 1):
            got = polys[key][lvl].eval_in(alg, assign)
            assert_same(got, want.comps[lvl], (tag, key, lvl))
    fw = frobenius(a)
    for lvl in range(n + 1):
        got = polys["F"][lvl].eval_in(alg, assign)
        assert_same(got, fw.comps[lvl], (tag, "F", lvl))


def test_structural_polys_refuse_deep_levels():
    ctx = make_context(2, N=8)
    with pytest.raises(ValueError):
        structural_polys(ctx, 3)


@pytest.mark.parametrize("p", [2, 3])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_classical_oracle_grid(p, m):
    assert classical_oracle(p, m)


# -- the S_P construction ------------------------------------------------

def series_from(ctx, ring, D, coeffs):
    c = [lift_coeff(ctx, v) for v in coeffs]
    c += [ctx.zero()] * (D + 1 - len(c))
    return Series(ring, c)


def sp_setup(D=40):
    ctx = make_context(3, N=24)
    ring = ring_for(ctx)
    P = series_from(ctx, ring, D, [0, 3, 0, 1])
    h = series_from(ctx, ring, D, [0, 1])
    return ctx, ring, D, P, h


def test_validate_frobenius_series():
    ctx, ring, D, P, h = sp_setup()
    validate_frobenius_series(ctx, P.coeffs())
    validate_frobenius_series(ctx, [0, 6, 0, 1])      # any multiple of pi
    validate_frobenius_series(ctx, [0, 0, 0, 1])      # plain X^q
    with pytest.raises(NotLubinTate, match="stops at degree"):
        validate_frobenius_series(ctx, [0, 1])
    with pytest.raises(NotLubinTate, match="constant term"):
        validate_frobenius_series(ctx, [1, 3, 0, 1])
    with pytest.raises(NotLubinTate, match="not integral"):
        validate_frobenius_series(ctx, [0, Fraction(1, 3), 0, 1])
    with pytest.raises(NotLubinTate, match="not 0 mod pi"):
        validate_frobenius_series(ctx, [0, 2, 0, 1])
    with pytest.raises(NotLubinTate, match="not 1 mod pi"):
        validate_frobenius_series(ctx, [0, 3, 0, 2])


def test_sp_first_component_is_h():
    ctx, ring, D, P, h = sp_setup()
    w = sP(h, P, 2, D)
    for k in range(D + 1):
        assert_same(w.comps[0][k], h[k], k)


def test_sp_of_one_is_witt_one():
    ctx, ring, D, P, h = sp_setup()
    one = series_from(ctx, ring, D, [1])
    w = sP(one, P, 2, D)
    alg = SeriesAlgebra(ring, D)
    for n in range(3):
        want = alg.one() if n == 0 else alg.zero()
        for k in range(D + 1):
            assert_same(w.comps[n][k], want[k], (n, k))


def test_sp_intertwines_frobenius():
    """Shifting the ghost by one substitutes P into every argument."""
    ctx, ring, D, P, h = sp_setup()
    for m in (2, 3):
        fw = frobenius(sP(h, P, m, D))
        w2 = sP(ser_compose(h, P, D), P, m - 1, D)
        for n in range(m):
            for k in range(D + 1):
                assert_same(fw.comps[n][k], w2.comps[n][k], (m, n, k))


def test_spa_specializes_sp():
    ctx, ring, D, P, h = sp_setup()
    a = ctx.from_int(2) * ctx.pi()
    wa = sPa(h, P, a, 3)
    ws = sP(h, P, 3, D)
    for n in range(4):
        assert_same(wa.comps[n], ser_eval(ws.comps[n], a), n)


def test_spa_requires_small_point():
    ctx, ring, D, P, h = sp_setup()
    with pytest.raises(ValueError, match="positive valuation"):
        sPa(h, P, ctx.one(), 2)


# -- the valuation criterion ---------------------------------------------

def test_key_valuation_criterion_values():
    ctx, ring, D, P, h = sp_setup()
    a = ctx.from_int(2) * ctx.pi()
    assert key_valuation_criterion(series_from(ctx, ring, D, [1, 1]), P, a) == 0
    assert key_valuation_criterion(
        series_from(ctx, ring, D, [(0, 1), 1]), P, a) == 1
    assert key_valuation_criterion(
        series_from(ctx, ring, D, [(0, 0, 2), 1]), P, a) == 2
    assert key_valuation_criterion(h, P, a) == math.inf


def test_key_valuation_criterion_random_pairs():
    ctx, ring, D, P, h = sp_setup()
    rng = random.Random("keyprop")
    a = ctx.from_int(2) * ctx.pi()
    for t in range(10):
        r = rng.randrange(0, 3)
        u = rng.randrange(1, ctx.p ** 3)
        if u % ctx.p == 0:
            u += 1
        c0 = tuple([0] * r + [u])
        hh = series_from(ctx, ring, D,
                         [c0] + [rng.randrange(0, ctx.p ** 2) for _ in range(3)])
        assert key_valuation_criterion(hh, P, a) == r, (t, r, u)


def test_key_valuation_criterion_rejects_fuzzy_constant():
    ctx, ring, D, P, h = sp_setup()
    a = ctx.from_int(2) * ctx.pi()
    fuzzy = ctx.pi().with_prec(1)
    hh = Series(ring, [fuzzy] + h.coeffs()[1:])
    with pytest.raises(IndeterminateValuation, match="constant term"):
        key_valuation_criterion(hh, P, a)


# -- serialization -------------------------------------------------------

def test_json_round_trip_elem():
    ctx = make_context(3, f=2, N=14)
    alg = ElemAlgebra(ctx)
    rng = random.Random("json-elem")
    w = WittVector(alg, rand_vec(ctx, rng, 3))
    obj = json.loads(json.dumps(witt_to_json(w)))
    back = witt_from_json(alg, obj)
    assert_witt_same(back, w, "elem round trip")


def test_json_round_trip_series():
    ctx, ring, D, P, h = sp_setup(D=12)
    w = sP(h, P, 2, D)
    alg = SeriesAlgebra(ring, D)
    obj = json.loads(json.dumps(witt_to_json(w)))
    back = witt_from_json(alg, obj)
    for n in range(3):
        for k in range(D + 1):
            assert_same(back.comps[n][k], w.comps[n][k], (n, k))
