from fractions import Fraction
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpcalc.coeffring import MatTrigPoly
from kpcalc.errors import NonzeroConstantTerm, NotAUnit, TruncationBudget
from kpcalc.hseries import (HSeries, birkhoff_factor, growth_audit, hexp, hinv, hmul)
from kpcalc.symbols import Symbol


def h_series(N, K, terms, d=1):
    """{n: {order: coeff}} -> HSeries."""
    return HSeries(tuple(Symbol.from_terms(terms.get(n, {}), d=d, K=K) for n in range(N + 1)))


def test_hmul_unit(rng):
    A = HSeries.random_unit(rng, 4, d=2, K=4)
    assert hmul(A, HSeries.one(4, 2, 4)).diff_norm(A) < 1e-14


def test_telescoping_product():
    N, K = 3, 3
    p = h_series(N, K, {0: {0: 1}, 1: {1: 1}})
    m = h_series(N, K, {0: {0: 1}, 1: {1: -1}})
    assert hmul(p, m).diff_norm(h_series(N, K, {0: {0: 1}, 2: {2: -1}})) == 0


def test_growth_preserved_by_products(rng):
    for _ in range(5):
        A = HSeries.random_unit(rng, 4, d=2, K=4)
        B = HSeries.random_unit(rng, 4, d=2, K=4)
        for out in (hmul(A, B), hinv(A), hexp(A - HSeries.one(4, 2, 4))):
            assert growth_audit(out).ok


def test_growth_violation_reported():
    bad = h_series(2, 2, {0: {0: 1}, 1: {2: 1}})
    rep = growth_audit(bad)
    assert not rep.ok and rep.violation == 1 and rep.order == 2


def test_hinv_examples(rng):
    one = HSeries.one(3, 1, 3)
    assert hinv(one).diff_norm(one) == 0
    a = MatTrigPoly.from_modes({1: 0.5, -1: 0.5, 2: 0.3j, -2: -0.3j})
    A = h_series(3, 3, {0: {0: 1}, 1: {0: a}})
    inv = hinv(A)
    assert inv[1].diff_norm(Symbol.mult(a.scale(-1), 3)) < 1e-15
    assert inv[2].diff_norm(Symbol.mult(a * a, 3)) < 1e-14
    assert hmul(A, inv).diff_norm(one) < 1e-13


def test_hinv_involution_and_multiply_back(rng):
    A = HSeries.random_unit(rng, 5, d=2, K=5)
    one = HSeries.one(5, 2, 5)
    Ainv = hinv(A)
    tol = 1e-13 * Ainv.max_abs()  # the inverse's coefficients reach a few hundred
    assert hmul(A, Ainv).diff_norm(one) < tol
    assert hmul(Ainv, A).diff_norm(one) < tol
    assert hinv(Ainv).diff_norm(A) < tol


def test_hinv_not_a_unit():
    with pytest.raises(NotAUnit):
        hinv(HSeries.zero(2, 1, 2))


def test_hexp_examples():
    N, K = 5, 5
    assert hexp(HSeries.zero(N, 1, K)).diff_norm(HSeries.one(N, 1, K)) == 0
    shift = hexp(h_series(N, K, {1: {1: 1}}))
    expected = h_series(N, K, {j: {j: Fraction(1, factorial(j))} for j in range(N + 1)})
    assert shift.diff_norm(expected) < 1e-15
    with pytest.raises(NonzeroConstantTerm):
        hexp(HSeries.one(N, 1, K))


def test_hexp_inverse(rng):
    A = HSeries.random_unit(rng, 4, d=2, K=4) - HSeries.one(4, 2, 4)
    assert hmul(hexp(A), hexp(-A)).diff_norm(HSeries.one(4, 2, 4)) < 1e-11


def test_factor_trivial():
    f = birkhoff_factor(HSeries.one(3, 2, 3))
    assert f.s_factor.diff_norm(HSeries.one(3, 2, 3)) == 0
    assert f.y_factor.diff_norm(HSeries.one(3, 2, 3)) == 0


def test_factor_first_order_hand_recursion():
    a = MatTrigPoly.from_modes({1: 0.5, -1: 0.5})
    b = MatTrigPoly.from_modes({0: 0.3, 2: 1j, -2: -1j})
    N, K = 1, 2
    U = h_series(N, K, {0: {0: 1}, 1: {0: a, -1: b}})
    f = birkhoff_factor(U)
    assert f.y_factor.diff_norm(h_series(N, K, {0: {0: 1}, 1: {0: a}})) == 0
    assert f.s_factor.diff_norm(h_series(N, K, {0: {0: 1}, 1: {-1: b.scale(-1)}})) == 0
    assert f.recompose().diff_norm(U) < 1e-15


def test_factor_differential_exponent():
    N, K = 4, 4
    E = h_series(N, K, {1: {1: 0.7}, 2: {2: -0.4}, 3: {3: 0.2}})
    U = hexp(E)
    f = birkhoff_factor(U)
    assert f.s_factor.diff_norm(HSeries.one(N, 1, K)) == 0
    assert f.y_factor.diff_norm(U) == 0


def test_factor_general_leading_term(rng):
    g0 = MatTrigPoly.identity(2).scale(1.5) + MatTrigPoly.random(rng, 2, 2, scale=0.2)
    U = HSeries.random_unit(rng, 3, d=2, K=4)
    lead = Symbol.mult(g0, 4) + Symbol.random(rng, -1, d=2, K=4, M=2, scale=0.3)
    U = hmul(HSeries.monomial(3, 0, lead), U)
    f = birkhoff_factor(U)
    assert f.recompose().diff_norm(U) < 1e-9
    for n, s in enumerate(f.s_factor.terms):
        target = s - Symbol.identity(2, 4) if n == 0 else s
        assert target.order(1e-12) is None or target.order(1e-12) <= -1
    for n, y in enumerate(f.y_factor.terms):
        assert y.exact and y.floor >= 0 and y.top <= n


def test_factor_truncation_budget(rng):
    U = HSeries.random_unit(rng, 4, d=1, K=1)
    with pytest.raises(TruncationBudget):
        birkhoff_factor(U)


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N=st.integers(1, 6), d=st.integers(1, 2))
def test_factor_structure(seed, N, d):
    rng = np.random.default_rng(seed)
    K = N
    U = HSeries.random_unit(rng, N, d=d, K=K, M=3)
    f = birkhoff_factor(U)
    assert f.recompose().diff_norm(U) < 1e-9
    for s in f.s_factor.terms[1:]:
        assert s.top <= -1
    for n, y in enumerate(f.y_factor.terms):
        assert y.floor >= 0 and y.top <= n and y.exact
    again = birkhoff_factor(U)
    assert again.s_factor == f.s_factor and again.y_factor == f.y_factor


def test_refactorization_exact_coefficients():
    """In exact arithmetic, factoring the rebuilt product returns the same factors."""
    K = 3
    a = MatTrigPoly.from_modes({1: 1, -1: 2}, exact=True)
    b = MatTrigPoly.from_modes({0: 1, 1: 1}, exact=True)
    terms = [Symbol.identity(1, K, True),
             Symbol.from_terms({1: b, 0: a, -1: b}, K=K, exact_coeffs=True),
             Symbol.from_terms({2: a, -2: a}, K=K, exact_coeffs=True),
             Symbol.from_terms({1: b, -1: a}, K=K, exact_coeffs=True)]
    U = HSeries(tuple(terms))
    f = birkhoff_factor(U)
    rebuilt = f.recompose()
    assert all(t.exact_coeffs for t in rebuilt.terms)
    assert rebuilt.diff_norm(U) == 0
    g = birkhoff_factor(rebuilt)
    assert g.s_factor.diff_norm(f.s_factor) == 0
    assert g.y_factor.diff_norm(f.y_factor) == 0


def test_refactorization_float(rng):
    U = HSeries.random_unit(rng, 5, d=2, K=5)
    f = birkhoff_factor(U)
    g = birkhoff_factor(f.recompose())
    assert g.s_factor.diff_norm(f.s_factor) < 1e-10
    assert g.y_factor.diff_norm(f.y_factor) < 1e-10


def test_subgroup_closure(rng):
    N, K = 4, 4
    one = HSeries.one(N, 2, K)
    s_like = [one + HSeries(tuple([Symbol.zero(2, K)] + [Symbol.random(rng, -1, d=2, K=K, M=2)
                                                          for _ in range(N)])) for _ in range(2)]
    for out in (hmul(*s_like), hinv(s_like[0])):
        for t in out.terms[1:]:
            assert t.top <= -1
        assert out[0].diff_norm(Symbol.identity(2, K)) < 1e-14
    d_like = [one + HSeries(tuple([Symbol.zero(2, K)] + [Symbol.random(rng, n, d=2, K=K, M=2, bottom=0)
                                                          for n in range(1, N + 1)])) for _ in range(2)]
    prod = hmul(*d_like)
    assert all(t.floor >= 0 and t.exact for t in prod.terms)


def test_sy_convention(rng):
    U = HSeries.random_unit(rng, 3, d=1, K=3)
    f = birkhoff_factor(U)
    s_prime, y = f.sy_convention()
    assert hmul(s_prime, y).diff_norm(U) < 1e-12


def test_json_round_trip(rng):
    U = HSeries.random_unit(rng, 2, d=2, K=2)
    assert HSeries.from_json(U.to_json()) == U
