import itertools
import random
from fractions import Fraction

import pytest

from grouprep.words import Braid, Word
from grouprep.zigzag import (
    Arrow,
    BraidOracle,
    Complex,
    ComplexError,
    Idem,
    Loop,
    MorEntry,
    ProjSummand,
    act,
    apply_braid_word,
    compose_morphisms,
    compose_paths,
    d_squared_zero,
    graded_multiplicities,
    hom_basis,
    is_minimal,
    jh_multiplicities,
    minimize,
    projective_object,
    summand_multiset,
    twist,
)

B3 = Braid(3)


def W(*ints, n=3):
    return Word.from_ints(Braid(n), ints)


def words_upto(g, L):
    syms = [s for i in range(1, g + 1) for s in (i, -i)]
    for k in range(L + 1):
        yield from itertools.product(syms, repeat=k)


# -- Grothendieck group oracle ------------------------------------------------
# [P_i<k> at position t] = (-1)^t q^k e_i.  The evaluation cone adds
# P_i<k - deg p> one position down for each hom basis element p, so
# sigma_i e_j = e_j - sum_p q^{-deg p} e_i; the inverse uses q^{+deg}.


def k0_twist(i, sign, vec, q):
    out = list(vec)
    for j, c in enumerate(vec, start=1):
        for _, deg in hom_basis(i, j):
            out[i - 1] -= c * q ** (-sign * deg)
    return out


def k0_class(n, start, ints, q):
    vec = [Fraction(0)] * n
    vec[start - 1] = Fraction(1)
    for s in reversed(ints):
        vec = k0_twist(abs(s), 1 if s > 0 else -1, vec, q)
    return vec


def euler_char(X, q):
    vec = [Fraction(0)] * X.n
    for t, i, k in summand_multiset(X):
        vec[i - 1] += (-q**k if t % 2 else q**k)
    return vec


class TestPaths:
    def test_hom_basis(self):
        assert hom_basis(1, 1) == [(Idem(1), 0), (Loop(1), 2)]
        assert hom_basis(1, 2) == [(Arrow(2, 1), 1)]
        assert hom_basis(1, 3) == []

    def test_idempotent_is_unit(self):
        a = Arrow(1, 2)
        assert compose_paths(Idem(2), a) == {a: 1}
        assert compose_paths(a, Idem(1)) == {a: 1}

    def test_back_and_forth_is_loop(self):
        assert compose_paths(Arrow(2, 1), Arrow(1, 2)) == {Loop(1): 1}
        assert compose_paths(Arrow(1, 2), Arrow(2, 1)) == {Loop(2): 1}

    def test_loops_agree_from_both_sides(self):
        assert compose_paths(Arrow(1, 2), Arrow(2, 1)) == compose_paths(Arrow(3, 2), Arrow(2, 3))

    def test_straight_through_vanishes(self):
        assert compose_paths(Arrow(2, 3), Arrow(1, 2)) == {}

    def test_degree_above_two_vanishes(self):
        assert compose_paths(Loop(1), Arrow(2, 1)) == {}
        assert compose_paths(Loop(2), Loop(2)) == {}

    def test_mismatched_endpoints(self):
        assert compose_paths(Idem(1), Idem(2)) == {}

    def test_compose_morphisms_reverses(self):
        f, g = Arrow(2, 1), Arrow(1, 2)
        assert compose_morphisms(g, f) == compose_paths(f, g)


class TestComplex:
    def test_projective(self):
        X = projective_object(1, 3)
        assert X.size() == 1
        assert d_squared_zero(X)
        assert jh_multiplicities(projective_object(2, 3)) == (0, 1, 0)

    def test_rejects_d_squared_nonzero(self):
        terms = {0: [ProjSummand(1, 0)], 1: [ProjSummand(2, 1)], 2: [ProjSummand(1, 2)]}
        diffs = {0: {(0, 0): MorEntry(Fraction(1), Arrow(1, 2))},
                 1: {(0, 0): MorEntry(Fraction(1), Arrow(2, 1))}}
        with pytest.raises(ComplexError):
            Complex(3, terms, diffs)

    def test_rejects_bad_degree(self):
        terms = {0: [ProjSummand(1, 0)], 1: [ProjSummand(1, 1)]}
        with pytest.raises(ComplexError):
            Complex(3, terms, {0: {(0, 0): MorEntry(Fraction(1), Idem(1))}})

    def test_cone_of_identity_vanishes(self):
        terms = {0: [ProjSummand(1, 0)], 1: [ProjSummand(1, 0)]}
        X = Complex(3, terms, {0: {(0, 0): MorEntry(Fraction(1), Idem(1))}})
        assert minimize(X).size() == 0

    def test_minimal_is_fixpoint(self):
        X = minimize(twist(1, 1, projective_object(2, 3)))
        assert summand_multiset(minimize(X)) == summand_multiset(X)


class TestTwist:
    def test_sigma1_on_p1_is_a_shift(self):
        X = minimize(twist(1, 1, projective_object(1, 3)))
        assert X.size() == 1
        assert graded_multiplicities(X) == [{-1: 1}, {}, {}]

    def test_inverse_shift_is_opposite(self):
        X = minimize(twist(1, -1, projective_object(1, 3)))
        assert graded_multiplicities(X) == [{1: 1}, {}, {}]

    def test_sigma1_on_p2(self):
        raw = twist(1, 1, projective_object(2, 3))
        assert d_squared_zero(raw)
        X = minimize(raw)
        assert X.size() == 2
        assert jh_multiplicities(X) == (1, 1, 0)

    def test_sigma1_on_p3_does_nothing(self):
        X = minimize(twist(1, 1, projective_object(3, 3)))
        assert summand_multiset(X) == summand_multiset(projective_object(3, 3))

    @pytest.mark.parametrize("j", [1, 2, 3])
    @pytest.mark.parametrize("i", [1, 2, 3])
    def test_twist_then_inverse(self, i, j):
        P = projective_object(j, 3)
        for a, b in ((1, -1), (-1, 1)):
            X = minimize(twist(i, a, minimize(twist(i, b, P))))
            assert summand_multiset(X) == summand_multiset(P)


class TestBraidWords:
    def test_empty(self):
        assert apply_braid_word(W(), 1) == (1, 0, 0)

    def test_sigma1(self):
        assert apply_braid_word(W(1), 1) == (1, 0, 0)

    def test_cancel(self):
        assert apply_braid_word(W(1, -1), 2) == (0, 1, 0)

    def test_braid_relation_on_p1(self):
        assert apply_braid_word(W(1, 2, 1), 1) == apply_braid_word(W(2, 1, 2), 1)

    def test_graded_sums_to_jh(self):
        rng = random.Random(0)
        oracle = BraidOracle(3)
        for _ in range(1000):
            w = [rng.choice([1, 2, -1, -2]) for _ in range(rng.randint(0, 8))]
            graded = oracle.graded(w)
            assert tuple(sum(g.values()) for g in graded) == oracle.label(w)

    def test_rightmost_first(self):
        # sigma_1 shifts P_1, then sigma_2 adds a copy of P_2
        assert apply_braid_word(W(2, 1), 1) == (1, 1, 0)
        # sigma_2 first gives P_1 -> P_2, and sigma_1 then cancels the P_1
        assert apply_braid_word(W(1, 2), 1) == (0, 1, 0)
        assert apply_braid_word(W(2, 1), 1, rightmost_first=False) == (0, 1, 0)


def test_braid_relation_invariance_all_short_words():
    """Words of length <= 5 differing by one braid move give identical minimal complexes."""
    oracle = {j: BraidOracle(3, j) for j in (1, 2, 3)}
    lhs, rhs = (1, 2, 1), (2, 1, 2)
    lhs_inv, rhs_inv = (-1, -2, -1), (-2, -1, -2)
    for a in words_upto(2, 2):
        for b in words_upto(2, 2 - len(a)):
            for u, v in ((lhs, rhs), (lhs_inv, rhs_inv)):
                w1, w2 = a + u + b, a + v + b
                for j in (1, 2, 3):
                    x1 = summand_multiset(oracle[j].complex(w1))
                    x2 = summand_multiset(oracle[j].complex(w2))
                    assert x1 == x2, (w1, w2, j)


@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_far_commutation_b4(j):
    P = projective_object(j, 4)
    assert summand_multiset(act([1, 3], P)) == summand_multiset(act([3, 1], P))
    assert summand_multiset(act([-1, 3], P)) == summand_multiset(act([3, -1], P))


def test_inverse_cancellation_random_words():
    rng = random.Random(1)
    for _ in range(150):
        w = W(*[rng.choice([1, 2, -1, -2]) for _ in range(rng.randint(0, 6))])
        j = rng.randint(1, 3)
        assert apply_braid_word(w * w.inverse(), j) == apply_braid_word(W(), j)


def test_minimize_removes_every_pivot_and_keeps_d_squared_zero():
    rng = random.Random(2)
    X = projective_object(2, 3)
    for _ in range(8):
        raw = twist(rng.randint(1, 3), rng.choice([1, -1]), X)
        assert d_squared_zero(raw)
        X = minimize(raw)
        assert d_squared_zero(X)
        assert is_minimal(X)
        for t, block in X.diffs.items():
            for (r, c), e in block.items():
                src, dst = X.terms[t][c], X.terms[t + 1][r]
                assert not (e.path.kind == "idem" and src == dst)


@pytest.mark.parametrize("q", [Fraction(2), Fraction(-3, 5)])
def test_euler_characteristic_matches_grothendieck_action(q):
    """Independent linear-algebra oracle: minimal complexes carry the K_0 class of the word."""
    rng = random.Random(3)
    for n in (3, 4):
        for _ in range(60):
            ints = [rng.choice([s for i in range(1, n) for s in (i, -i)]) for _ in range(rng.randint(0, 7))]
            j = rng.randint(1, n)
            X = act(ints, projective_object(j, n))
            assert euler_char(X, q) == k0_class(n, j, ints, q)


def test_multiplicity_bounded_below_by_euler_characteristic():
    oracle = BraidOracle(3, 1)
    for w in words_upto(2, 5):
        X = oracle.complex(w)
        chi = euler_char(X, Fraction(1))
        assert all(c >= abs(x) for c, x in zip(jh_multiplicities(X), chi))


def test_worst_case_growth_is_fibonacci():
    oracle = BraidOracle(3, 1)
    fib = [1, 1, 2, 3, 5, 8, 13]
    for L in range(1, 6):
        labels = [oracle.label(w) for w in itertools.product((1, 2, -1, -2), repeat=L)]
        assert max(max(v) for v in labels) == fib[L]
        assert max(sum(v) for v in labels) == fib[L + 1]
