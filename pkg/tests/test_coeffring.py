from fractions import Fraction

import numpy as np
import pytest
from sympy import QQ_I
from hypothesis import given, settings, strategies as st

from kpcalc.coeffring import MatTrigPoly, add, derivative, eval_at, grid, mul
from kpcalc.errors import ModeOverflow, NotInvertible


def test_exponentials_add_to_cosine():
    e_plus = MatTrigPoly.from_modes({1: 1})
    e_minus = MatTrigPoly.from_modes({-1: 1})
    c = e_plus + e_minus
    assert c.coeff(1)[0, 0] == 1 and c.coeff(-1)[0, 0] == 1
    assert np.allclose(c(0.3), 2 * np.cos(0.3))


def test_add_zero_is_identity(rng):
    a = MatTrigPoly.random(rng, 4, 2)
    assert add(a, MatTrigPoly.zero(2)) == a


def test_add_matches_pointwise_sum(rng):
    a, b = MatTrigPoly.random(rng, 4, 2), MatTrigPoly.random(rng, 3, 2)
    xs = grid(16)
    assert np.allclose(eval_at(a + b, xs), eval_at(a, xs) + eval_at(b, xs), atol=1e-13)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        MatTrigPoly.zero(1) + MatTrigPoly.zero(2)


def test_mode_cancellation_and_unit(rng):
    prod = MatTrigPoly.from_modes({1: 1}) * MatTrigPoly.from_modes({-1: 1})
    assert prod.mode_cap == 0 and np.isclose(prod.coeff(0)[0, 0], 1)
    a = MatTrigPoly.random(rng, 4, 2)
    assert (a * MatTrigPoly.identity(2)).allclose(a, 1e-14)


def test_product_support_adds(rng):
    a = MatTrigPoly.random(rng, 2, 1)
    b = MatTrigPoly.random(rng, 2, 1)
    assert (a * b).mode_cap == 4


def test_mode_overflow():
    a = MatTrigPoly.from_modes({40: 1})
    with pytest.raises(ModeOverflow):
        mul(a, a, mode_max=64)


def test_derivative_of_cos_and_constant():
    cos = MatTrigPoly.from_modes({1: 0.5, -1: 0.5})
    assert np.allclose(derivative(cos)(1.1), -np.sin(1.1))
    assert derivative(MatTrigPoly.constant([[3.0]])).max_abs() == 0


def test_derivative_matches_finite_differences(rng):
    a = MatTrigPoly.random(rng, 4, 2)
    xs = grid(32)
    h = 1e-3
    # five-point centered stencil, truncation error O(h^4)
    fd = (-eval_at(a, xs + 2 * h) + 8 * eval_at(a, xs + h) - 8 * eval_at(a, xs - h) + eval_at(a, xs - 2 * h)) / (12 * h)
    exact = eval_at(derivative(a), xs)
    assert np.max(np.abs(fd - exact)) / np.max(np.abs(exact)) < 1e-8


def test_eval_unit_and_phase():
    assert np.allclose(MatTrigPoly.identity(2)(0.7), np.eye(2))
    assert np.isclose(MatTrigPoly.from_modes({1: 1})(np.pi)[0, 0], -1)


def test_dft_round_trip(rng):
    M = 4
    a = MatTrigPoly.random(rng, M, 2)
    vals = eval_at(a, grid(2 * M + 1))
    hat = np.fft.fft(vals, axis=0) / (2 * M + 1)
    recovered = hat[np.arange(-M, M + 1) % (2 * M + 1)]
    assert np.max(np.abs(recovered - a.coeffs)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(1, 8), d=st.integers(1, 2))
def test_ring_axioms(seed, M, d):
    rng = np.random.default_rng(seed)
    a, b, c = (MatTrigPoly.random(rng, M, d) for _ in range(3))
    assert ((a * b) * c).allclose(a * (b * c), 1e-12)
    assert (a * (b + c)).allclose(a * b + a * c, 1e-12)
    assert ((a + b) * c).allclose(a * c + b * c, 1e-12)
    assert (MatTrigPoly.identity(d) * a).allclose(a, 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(1, 8), d=st.integers(1, 2))
def test_leibniz(seed, M, d):
    rng = np.random.default_rng(seed)
    a, b = MatTrigPoly.random(rng, M, d), MatTrigPoly.random(rng, M, d)
    assert derivative(a * b).allclose(derivative(a) * b + a * derivative(b), 1e-10)


def test_real_flag_preserved(rng):
    a = MatTrigPoly.random(rng, 3, 2, real=True)
    b = MatTrigPoly.random(rng, 2, 2, real=True)
    for out in (a + b, a * b, derivative(a)):
        assert out.real
        assert np.allclose(out.coeffs, np.conj(out.coeffs[::-1]), atol=1e-14)
        assert np.allclose(np.imag(out(np.linspace(0, 6, 7))), 0, atol=1e-12)


def test_pointwise_inverse(rng):
    g = MatTrigPoly.from_modes({0: 2.0, 1: 0.3, -1: 0.3})
    assert (g * g.inverse()).allclose(MatTrigPoly.identity(1), 1e-13)
    with pytest.raises(NotInvertible):
        MatTrigPoly.from_modes({1: 1, -1: 1}).inverse()


def test_exact_mode():
    a = MatTrigPoly.from_modes({1: 1, -1: 2}, exact=True)
    sq = a * a
    assert sq.exact
    assert [sq.coeff(k)[0, 0] for k in (-2, 0, 2)] == [QQ_I(4, 0), QQ_I(4, 0), QQ_I(1, 0)]
    assert sq.coeff(1)[0, 0] == QQ_I.zero
    da = derivative(a)
    assert complex(da.to_float().coeff(1)[0, 0]) == 1j
    assert complex(da.to_float().coeff(-1)[0, 0]) == -2j
    # exact and float routes agree
    assert sq.to_float().allclose(a.to_float() * a.to_float(), 1e-14)


def test_json_round_trip(rng):
    a = MatTrigPoly.random(rng, 3, 2)
    assert MatTrigPoly.from_json(a.to_json(), 2) == a


def test_product_keeps_small_modes_accurate():
    # geometric decay 2^-|k|: an exact product checks every surviving mode to relative precision
    halves = {k: Fraction(1, 2 ** abs(k)) for k in range(-30, 31)}
    a = MatTrigPoly.from_modes({k: float(v) for k, v in halves.items()})
    exact = mul(MatTrigPoly.from_modes(halves, exact=True), MatTrigPoly.from_modes(halves, exact=True))
    prod = mul(a, a)
    top = abs(complex(QQ_I.to_sympy(exact.coeff(0)[0, 0])))
    for k in range(-60, 61):
        ref = complex(QQ_I.to_sympy(exact.coeff(k)[0, 0]))
        if abs(ref) > 1e-13 * top:
            assert abs(prod.coeff(k)[0, 0] - ref) <= 1e-14 * abs(ref)
        elif abs(ref) < 1e-15 * top:
            assert prod.coeff(k)[0, 0] == 0  # trimmed tail
