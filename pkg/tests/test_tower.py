"""Extension-chain layer: construction, arithmetic, valuations, Galois."""

import json
import random
from fractions import Fraction

import pytest

from ltlab.errors import (
    IndeterminateValuation,
    InvarianceViolation,
    NotEisenstein,
    NotLubinTate,
    PrecisionExhausted,
    RingMismatch,
)
from ltlab.formal import FormalGroupData, lift_coeff
from ltlab.padic import make_context, mu_roots
from ltlab.series import Series, ser_mul, ser_mul_naive
from ltlab.tower import (
    Tower,
    TowerAlgebra,
    build_tower,
    division_point_check,
    fg_add_points,
    galois_conjugate,
    telem_from_json,
    telem_to_json,
    tower_embed,
    tower_inverse,
    tower_to_json,
    tower_valuation,
    trace_to_K,
    trace_to_M,
    _poly_compose,
)
from ltlab.witt import frobenius, teichmuller, witt_arith


@pytest.fixture(scope="module")
def c3():
    return make_context(3, N=30)


@pytest.fixture(scope="module")
def c2():
    return make_context(2, N=48)


@pytest.fixture(scope="module")
def t3_2(c3):
    return build_tower(c3, [0, 3, 0, 1], 2)


@pytest.fixture(scope="module")
def flag3():
    """Flagship seed X^3 + 3X^2 + 3X with its group data and level-2 tower."""
    ctx = make_context(3, N=30)
    data = FormalGroupData(ctx, [0, 3, 3, 1], 80)
    tower = build_tower(data.wctx, [0, 3, 3, 1], 2)
    return data, tower


def rand_elem(tower, rng, span=6):
    coeffs = []
    for _ in range(tower.d):
        k = rng.randrange(-span // 2, span)
        coeffs.append(tower.ctx.from_int(rng.randrange(1, 50)).shift_pi(k)
                      if rng.random() < 0.8 else tower.ctx.zero())
    return tower.from_coeffs(coeffs)


# -- construction ------------------------------------------------------------

def test_level1_modulus_is_the_seed_slice(c3):
    t1 = build_tower(c3, [0, 3, 0, 1], 1)
    assert t1.d == 2
    # X^3 + 3X sliced at level 1 is X^2 + 3
    assert (t1.modulus[0] - c3.from_int(3)).is_zero_at_prec()
    assert t1.modulus[1].is_zero_at_prec()
    assert (t1.modulus[2] - c3.one()).is_zero_at_prec()


def test_level2_modulus_two_routes(c3):
    seed = [0, 3, 3, 1]
    lifted = [lift_coeff(c3, c) for c in seed]
    t2 = build_tower(c3, seed, 2)
    # the slice factors exactly as g(Q(X)) with g(Y) = Q(Y)/Y
    g = lifted[1:]
    other = _poly_compose(g, lifted)
    assert len(other) == t2.d + 1
    for a, b in zip(other, t2.modulus):
        assert (a - b).is_zero_at_prec()


def test_modulus_is_eisenstein(t3_2):
    mod = t3_2.modulus
    assert (mod[-1] - t3_2.ctx.one()).is_zero_at_prec()
    v0 = mod[0].valuation()
    assert v0.determinate and v0.v_pi == 1
    for c in mod[:-1]:
        assert c.v_lower() >= 1


def test_seed_degree_must_be_q(c2):
    with pytest.raises(NotLubinTate):
        build_tower(c2, [0, 2, 2, 1], 1)   # degree 3 over q = 2


def test_seed_must_be_normalized(c2):
    with pytest.raises(NotLubinTate):
        build_tower(c2, [0, 3, 1], 1)


def test_constant_term_valuation_guarded(c3):
    # X^3 + 9X has v(a_1) = 2: not a uniformizer series
    with pytest.raises(NotLubinTate):
        build_tower(c3, [0, 9, 0, 1], 1)


# -- chain roots and valuations ----------------------------------------------

def test_omega_chain_valuations(t3_2):
    w2, w1 = t3_2.omega(2), t3_2.omega(1)
    assert w2.valuation().v_p == Fraction(1, 6)
    assert w1.valuation().v_p == Fraction(1, 2)
    assert tower_valuation(w2) == (Fraction(1, 6), 1)
    assert tower_valuation(w1) == (Fraction(1, 2), 3)


def test_omega_chain_valuations_ramified_base():
    ce = make_context(3, eisenstein_modulus=[-3, 0, 1], N=24)
    te = build_tower(ce, [0, (0, 1), 0, 1], 2)
    assert te.gen().valuation().v_p == Fraction(1, 12)
    assert tower_valuation(te.gen()).v_p == Fraction(1, 12)


def test_omega_chain_valuations_unramified_base():
    cf = make_context(3, f=2, N=14)
    tf = build_tower(cf, [0, 3] + [0] * 7 + [1], 1)
    assert tf.d == 8
    assert tf.gen().valuation().v_p == Fraction(1, 8)
    assert tower_valuation(tf.gen()).v_p == Fraction(1, 8)


def test_generator_satisfies_modulus(t3_2):
    w = t3_2.gen()
    acc = t3_2.zero()
    for k, c in enumerate(t3_2.modulus):
        acc = acc + (w ** k) * c
    assert acc.is_zero_at_prec()


def test_level1_tower_is_base_field_for_q2(c2):
    t1 = build_tower(c2, [0, 2, 1], 1)
    assert t1.d == 1
    v = t1.gen().valuation()
    assert v.v_p == 1           # the lone root of X + 2


def test_valuation_cross_check_random(t3_2):
    rng = random.Random(7)
    for _ in range(25):
        x = rand_elem(t3_2, rng)
        fast = x.valuation()
        if not fast.determinate:
            continue
        slow = tower_valuation(x)
        assert slow.v_p == fast.v_p
        assert slow.v_units == fast.v_pi


def test_valuation_min_formula_additivity(t3_2):
    rng = random.Random(11)
    for _ in range(15):
        x, y = rand_elem(t3_2, rng), rand_elem(t3_2, rng)
        vx, vy = x.valuation(), y.valuation()
        if not (vx.determinate and vy.determinate):
            continue
        vxy = (x * y).valuation()
        assert vxy.determinate and vxy.v_pi == vx.v_pi + vy.v_pi


# -- ring arithmetic ----------------------------------------------------------

def test_inverse_round_trips(t3_2):
    rng = random.Random(3)
    one = t3_2.one()
    for _ in range(12):
        x = rand_elem(t3_2, rng)
        if x.is_zero_at_prec():
            continue
        assert (x * tower_inverse(x) - one).is_zero_at_prec()
        assert ((one / x) * x - one).is_zero_at_prec()


def test_negative_powers(t3_2):
    w = t3_2.gen()
    assert ((w ** -2) * w * w - t3_2.one()).is_zero_at_prec()


def test_scalar_mixing(t3_2):
    ctx = t3_2.ctx
    w = t3_2.gen()
    assert (3 * w - w * 3).is_zero_at_prec()
    assert (ctx.pi() * w - w * ctx.pi()).is_zero_at_prec()
    assert ((w / ctx.pi()).shift_pi(1) - w).is_zero_at_prec()


def test_cross_tower_mixing_rejected(c3, t3_2):
    other = build_tower(c3, [0, 3, 0, 1], 1)
    with pytest.raises(RingMismatch):
        t3_2.gen() + other.gen()


def test_precision_cap_below_one_digit_raises(t3_2):
    with pytest.raises(PrecisionExhausted):
        t3_2.gen().with_prec(t3_2.d - 1)


def test_packed_series_mul_matches_naive(t3_2):
    rng = random.Random(19)
    ring = t3_2.ring
    f = Series(ring, [rand_elem(t3_2, rng, span=3) for _ in range(6)])
    g = Series(ring, [rand_elem(t3_2, rng, span=3) for _ in range(6)])
    a = ser_mul(f, g, 10).coeffs()
    b = ser_mul_naive(f, g, 10).coeffs()
    for x, y in zip(a, b):
        assert (x - y).is_zero_at_prec()


def test_trace_values_against_newton(t3_2):
    # power sums of the modulus roots via Newton's identities
    d = t3_2.d
    e = [c for c in t3_2.modulus]          # e[k] = coeff of X^k
    one = t3_2.one()
    assert (trace_to_K(one) - t3_2.ctx.from_int(d)).is_zero_at_prec()
    # p1 = -a_{d-1}
    p1 = -e[d - 1]
    assert (trace_to_K(t3_2.gen()) - p1).is_zero_at_prec()
    # p2 = -a_{d-1} p1 - 2 a_{d-2}
    p2 = -(e[d - 1] * p1) - e[d - 2] * 2
    assert (trace_to_K(t3_2.gen() * t3_2.gen()) - p2).is_zero_at_prec()


def test_trace_is_k_linear(t3_2):
    rng = random.Random(23)
    x, y = rand_elem(t3_2, rng), rand_elem(t3_2, rng)
    c = t3_2.ctx.from_int(7)
    lhs = trace_to_K(x * c + y)
    rhs = trace_to_K(x) * c + trace_to_K(y)
    assert (lhs - rhs).is_zero_at_prec()


# -- moving between levels ----------------------------------------------------

def test_embed_sends_generator_to_chain_root(c3, t3_2):
    t1 = build_tower(c3, [0, 3, 0, 1], 1)
    im = tower_embed(t1.gen(), t3_2)
    assert (im - t3_2.omega(1)).is_zero_at_prec()


def test_embed_is_a_ring_homomorphism(c3, t3_2):
    t1 = build_tower(c3, [0, 3, 0, 1], 1)
    rng = random.Random(31)
    x, y = rand_elem(t1, rng, span=3), rand_elem(t1, rng, span=3)
    assert (tower_embed(x * y, t3_2)
            - tower_embed(x, t3_2) * tower_embed(y, t3_2)).is_zero_at_prec()
    assert (tower_embed(x + y, t3_2)
            - tower_embed(x, t3_2) - tower_embed(y, t3_2)).is_zero_at_prec()


def test_embed_rejects_downward_and_foreign(c3, t3_2):
    t1 = build_tower(c3, [0, 3, 0, 1], 1)
    with pytest.raises(RingMismatch):
        tower_embed(t3_2.gen(), t1)
    t1_other = build_tower(c3, [0, 3, 3, 1], 1)
    with pytest.raises(RingMismatch):
        tower_embed(t1_other.gen(), t3_2)


# -- torsion-point certificates ----------------------------------------------

def test_division_point_verdicts(flag3):
    data, t2 = flag3
    w2, w1 = t2.gen(), t2.omega(1)
    assert division_point_check(data, w2, 2) == "primitive"
    assert division_point_check(data, w1, 2) == "nonprimitive"
    assert division_point_check(data, w2, 1) == "fail"
    t1 = build_tower(data.wctx, [0, 3, 3, 1], 1)
    assert division_point_check(data, t1.gen(), 1) == "primitive"


def test_division_point_rejects_units(flag3):
    data, t2 = flag3
    with pytest.raises(ValueError):
        division_point_check(data, t2.one(), 1)


# -- Galois action -------------------------------------------------------------

def test_conjugation_is_multiplicative(flag3):
    data, t2 = flag3
    w = t2.gen()
    roots = mu_roots(data.wctx)
    z1, z2 = roots[0], roots[-1]
    lhs = galois_conjugate(data, z1, galois_conjugate(data, z2, w))
    rhs = galois_conjugate(data, (z1 * z2).normalize(), w)
    assert (lhs - rhs).is_zero_at_prec()


def test_conjugate_sum_is_trace_at_level_one(flag3):
    data, _ = flag3
    t1 = build_tower(data.wctx, [0, 3, 3, 1], 1)
    total = None
    for z in mu_roots(data.wctx):
        c = galois_conjugate(data, z, t1.gen())
        total = c if total is None else total + c
    diff = total - t1.from_k(trace_to_K(t1.gen()))
    assert diff.is_zero_at_prec()


def test_group_law_point_identities(flag3):
    data, t2 = flag3
    w2, w1 = t2.gen(), t2.omega(1)
    s = fg_add_points(data, t2, w2, w1)
    assert s.valuation().v_p == Fraction(1, 6)
    assert (s - fg_add_points(data, t2, w1, w2)).is_zero_at_prec()
    z = fg_add_points(data, t2, w2, galois_conjugate(data, -1, w2))
    assert z.is_zero_at_prec()


def test_middle_trace_of_odd_seed_vanishes(c3, t3_2):
    # [-1](X) = -X for the odd seed, so the two conjugates cancel exactly
    data = FormalGroupData(c3, [0, 3, 0, 1], 60)
    t2 = build_tower(data.wctx, [0, 3, 0, 1], 2)
    total = trace_to_M(data, t2.gen())
    assert total.is_zero_at_prec()


def test_middle_trace_flagship_uniformizer(flag3):
    data, t2 = flag3
    beta = trace_to_M(data, t2.gen())
    vb = beta.valuation()
    assert vb.determinate and vb.v_pi == 2          # q - 1
    assert tower_valuation(beta).v_p == Fraction(1, 3)
    # transitivity: the full trace of beta is (q-1) times the trace of w2
    lhs = trace_to_K(beta)
    rhs = (trace_to_K(t2.gen()) * 2).normalize()
    assert (lhs - rhs).is_zero_at_prec()


def test_middle_trace_requires_level_two(flag3):
    data, _ = flag3
    t1 = build_tower(data.wctx, [0, 3, 3, 1], 1)
    with pytest.raises(ValueError):
        trace_to_M(data, t1.gen())


# -- Witt coefficient algebra --------------------------------------------------

def test_witt_arith_over_tower(c2):
    t2 = build_tower(c2, [0, 2, 1], 2)
    alg = TowerAlgebra(t2)
    a = teichmuller(alg, t2.one() + t2.gen(), 4)
    b = teichmuller(alg, t2.one() - t2.gen(), 4)
    s = witt_arith("add", a, b)
    m = witt_arith("mul", a, b)
    for k in range(4):
        assert (s.ghost[k] - (a.ghost[k] + b.ghost[k])).is_zero_at_prec()
        assert (m.ghost[k] - a.ghost[k] * b.ghost[k]).is_zero_at_prec()
    f = frobenius(s)
    assert (f.ghost[0] - s.ghost[1]).is_zero_at_prec()
    sc = witt_arith("scalar", a, c2.pi())
    assert (sc.ghost[2] - a.ghost[2].shift_pi(1)).is_zero_at_prec()


def test_teichmuller_multiplicativity_over_tower(c2):
    t2 = build_tower(c2, [0, 2, 1], 2)
    alg = TowerAlgebra(t2)
    x, y = t2.one() + t2.gen(), t2.one() + t2.gen() * t2.gen()
    m = witt_arith("mul", teichmuller(alg, x, 3), teichmuller(alg, y, 3))
    t = teichmuller(alg, (x * y).normalize(), 3)
    for k in range(4):
        assert (m.ghost[k] - t.ghost[k]).is_zero_at_prec()


# -- serialization --------------------------------------------------------------

def test_element_json_round_trip(t3_2):
    rng = random.Random(41)
    x = rand_elem(t3_2, rng)
    back = telem_from_json(t3_2, telem_to_json(x))
    assert (back - x).is_zero_at_prec()


def test_tower_json_is_deterministic(t3_2):
    a = json.dumps(tower_to_json(t3_2), sort_keys=True)
    b = json.dumps(tower_to_json(t3_2), sort_keys=True)
    assert a == b and '"omega_vp"' in a
