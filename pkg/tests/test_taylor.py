import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from kpcalc.coeffring import MatTrigPoly
from kpcalc.errors import NonUnitConstantTerm, NonzeroConstantTerm
from kpcalc.fio import Diffeo
from kpcalc.presets import taylor_regimes, trig_diffeo
from kpcalc.taylor import (
    HJetSeries, a_coeffs, bell, bell_table, jet_values, time_change, time_change_inverse,
    times_smoothness_probe, verify_taylor_theorem,
)


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def bell_by_enumeration(n, k, u):
    total = 0
    for part in set_partitions(list(range(n))):
        if len(part) == k:
            total += math.prod(u[len(b) - 1] for b in part)
    return total


# -- Bell polynomials ----------------------------------------------------------

def test_bell_matches_enumeration():
    rng = np.random.default_rng(5)
    u = list(rng.normal(size=8))
    table = bell_table(8, u)
    for n in range(1, 9):
        for k in range(1, n + 1):
            assert table[n][k] == pytest.approx(bell_by_enumeration(n, k, u), rel=1e-12, abs=1e-12)


def test_bell_matches_sympy_symbolically():
    u = sp.symbols("u1:8")
    for n in range(1, 8):
        for k in range(1, n + 1):
            ours = sp.expand(bell(n, k, list(u)))
            assert sp.expand(ours - sp.bell(n, k, u[: n - k + 1])) == 0


def test_bell_small_cases():
    u1, u2 = sp.symbols("u1 u2")
    assert bell(1, 1, [u1]) == u1
    assert sp.expand(bell(3, 2, [u1, u2])) == 3 * u1 * u2


def test_bell_degenerate_families():
    u = sp.symbols("u1:9")
    for n in range(1, 9):
        assert sp.expand(bell(n, n, list(u)) - u[0] ** n) == 0
        assert sp.expand(bell(n, 1, list(u)) - u[n - 1]) == 0
        for k in range(1, n + 1):
            assert bell(n, k, [1] + [0] * 7) == (1 if n == k else 0)


def test_bell_row_sums_are_bell_numbers():
    for n in range(1, 9):
        assert sum(bell_table(n, [1] * 8)[n][1:]) == sp.bell(n)


def test_bell_index_errors():
    with pytest.raises(IndexError):
        bell(2, 3, [1, 1, 1])
    with pytest.raises(IndexError):
        bell(4, 1, [1, 1])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=6, max_size=6), st.integers(-3, 3))
def test_bell_homogeneity(u, lam):
    # B_{n,k}(lam u) = lam^k B_{n,k}(u) and B_{n,k}(lam^j u_j) = lam^n B_{n,k}(u)
    for n in range(1, 7):
        for k in range(1, n + 1):
            b = bell(n, k, u)
            assert bell(n, k, [lam * x for x in u]) == lam ** k * b
            assert bell(n, k, [lam ** (j + 1) * x for j, x in enumerate(u)]) == lam ** n * b


# -- h-series ----------------------------------------------------------------------

def test_hjet_log_exp_round_trip():
    rng = np.random.default_rng(9)
    a = HJetSeries(np.concatenate([[1.0], rng.normal(size=6) + 1j * rng.normal(size=6)]))
    assert a.log().exp().allclose(a, 1e-12)
    with pytest.raises(NonUnitConstantTerm):
        HJetSeries([2.0, 1.0]).log()
    with pytest.raises(NonzeroConstantTerm):
        HJetSeries([0.5, 1.0]).exp()


def test_hjet_truncated_product():
    a = HJetSeries([1.0, 2.0, 3.0])
    b = HJetSeries([0.0, 1.0, 1.0])
    assert np.array_equal((a * b).coeffs, [0.0, 1.0, 3.0])
    assert np.array_equal((a + 1).coeffs, [2.0, 2.0, 3.0])


# -- a_k ---------------------------------------------------------------------------

@pytest.mark.parametrize("g", [Diffeo.identity(), Diffeo.rotation(1.3)])
def test_a_coeffs_identity_and_rotation(g):
    a = a_coeffs(g, 0.4, 6)
    for k, ak in enumerate(a):
        expected = np.zeros(7)
        expected[0] = 1 / math.factorial(k)
        assert np.array_equal(ak.coeffs, expected)


def _sympy_diffeo(g: Diffeo):
    x = sp.Symbol("x", real=True)
    expr = x
    for k in range(-g.p.mode_cap, g.p.mode_cap + 1):
        c = complex(g.p.coeff(k)[0, 0])
        if c != 0:
            expr += (sp.Float(c.real, 30) + sp.I * sp.Float(c.imag, 30)) * sp.exp(sp.I * k * x)
    return x, expr


def test_jet_values_against_sympy():
    g = trig_diffeo(0.2)
    x, expr = _sympy_diffeo(g)
    u = jet_values(g, 0.9, 5)
    for i, ui in enumerate(u, start=1):
        assert ui == pytest.approx(complex(sp.diff(expr, x, i).subs(x, 0.9).evalf(25)).real, abs=1e-12)


def test_a_coeffs_reproduce_composition_taylor():
    g, x0, N = trig_diffeo(0.2), 0.9, 5
    a = a_coeffs(g, x0, N)
    x, expr = _sympy_diffeo(g)
    test = sp.sin(2 * x) + sp.cos(x) / 3
    composed = test.subs(x, expr)
    y = complex(expr.subs(x, x0).evalf(25))
    test_derivs = [complex(sp.diff(test, x, k).subs(x, y).evalf(25)) for k in range(N + 1)]
    for m in range(N + 1):
        ours = sum(a[k][m - k] * test_derivs[k] for k in range(m + 1))
        oracle = complex(sp.diff(composed, x, m).subs(x, x0).evalf(25)) / math.factorial(m)
        assert abs(ours - oracle) < 1e-11


def test_a_coeffs_leading_terms():
    g = trig_diffeo(0.3)
    u = jet_values(g, 1.1, 6)
    a = a_coeffs(g, 1.1, 6)
    assert a[0].coeffs[0] == 1 and not a[0].coeffs[1:].any()
    for k in range(1, 7):
        assert a[k][0] == pytest.approx(u[0] ** k / math.factorial(k), rel=1e-14)
        assert not a[k].coeffs[6 - k + 1:].any()


# -- the time change -------------------------------------------------------------------

def test_time_change_identity():
    t = time_change(a_coeffs(Diffeo.identity(), 0.0, 6))
    assert abs(t[1][0] - 1) < 1e-15
    assert max(np.abs(s.coeffs).max() for n, s in t.items() if n >= 2) < 1e-15
    assert np.abs(t[1].coeffs[1:]).max() < 1e-15


def test_time_change_h_zero_limit():
    g = trig_diffeo(0.3)
    u1 = jet_values(g, 0.5, 1)[0]
    t = time_change(a_coeffs(g, 0.5, 6))
    assert t[1][0] == pytest.approx(u1, rel=1e-14)
    for n in range(2, 7):
        assert abs(t[n][0]) < 1e-14


def test_time_change_truncation():
    t = time_change(a_coeffs(trig_diffeo(0.3), 0.5, 5))
    for n, s in t.items():
        assert not s.coeffs[5 - n + 1:].any()


def test_time_change_rejects_nonunit():
    a = a_coeffs(Diffeo.identity(), 0.0, 3)
    a[0] = HJetSeries.constant(2.0, 3)
    with pytest.raises(NonUnitConstantTerm):
        time_change(a)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_time_change_round_trip(seed, N):
    rng = np.random.default_rng(seed)
    a = [HJetSeries.constant(1.0, N)]
    for k in range(1, N + 1):
        c = np.zeros(N + 1, dtype=complex)
        c[: N - k + 1] = rng.normal(size=N - k + 1)
        a.append(HJetSeries(c))
    back = time_change_inverse(time_change(a), N)
    for x, y in zip(a, back):
        assert x.allclose(y, 1e-12)


# -- the Taylor theorem -----------------------------------------------------------------

def test_theorem_identity_diffeo():
    r = taylor_regimes()["identity"]
    rep = verify_taylor_theorem(r.S0(r.Ks[0]), r.g, r.f, r.x0, r.N)
    assert len(rep.orders) == r.N + 1
    assert rep.max_diff <= 1e-10


def test_theorem_undressed_is_faa_di_bruno():
    r = taylor_regimes()["undressed"]
    rep = verify_taylor_theorem(r.S0(r.Ks[0]), r.g, r.f, r.x0, r.N)
    assert rep.max_diff <= 1e-9
    assert rep.refit_residual < 1e-12


def test_theorem_general_monotone_in_K():
    r = taylor_regimes()["general"]
    eps = [verify_taylor_theorem(r.S0(K), r.g, r.f, r.x0, r.N).max_diff for K in r.Ks]
    assert all(b < a for a, b in zip(eps, eps[1:]))
    assert eps[-1] < 1e-6


def test_theorem_point_is_reduced_mod_two_pi():
    r = taylor_regimes()["undressed"]
    a = verify_taylor_theorem(r.S0(6), r.g, r.f, r.x0, 4)
    b = verify_taylor_theorem(r.S0(6), r.g, r.f, r.x0 + 2 * np.pi, 4)
    assert max(np.abs(x.rhs - y.rhs).max() for x, y in zip(a.orders, b.orders)) < 1e-12


def test_theorem_report_serializes():
    r = taylor_regimes()["identity"]
    data = verify_taylor_theorem(r.S0(6), r.g, r.f, r.x0, 3).to_json()
    assert len(data["orders"]) == 4 and data["K"] == 6


# -- smooth dependence on g ---------------------------------------------------------------

def test_probe_constant_family():
    rep = times_smoothness_probe(lambda e: trig_diffeo(0.2), 0.3, 4)
    assert np.abs(rep["derivative"]).max() == 0


def test_probe_linear_family_slope():
    # times are polynomial in the jet of g, so central differences of a
    # linear family are exact up to rounding and there is no order to fit
    x0 = 0.8
    family = lambda e: Diffeo(MatTrigPoly.from_modes({1: -0.5j * e, -1: 0.5j * e}))  # e sin x
    rep = times_smoothness_probe(family, x0, 4, eps0=0.1, step=0.05, levels=4)
    assert rep["derivative"][0, 0] == pytest.approx(math.cos(x0), abs=1e-12)
    assert max(rep["gaps"]) < 1e-13


def wobbling_family(rng):
    base = MatTrigPoly.random(rng, 2, real=True, scale=0.15)
    ks = np.arange(-2, 3)

    def family(e):
        phase = np.exp(1j * ks * e)[:, None, None]
        return Diffeo(MatTrigPoly(base.padded(2) * phase * (1 + 0.5 * np.sin(e)), real=True))
    return family


@pytest.mark.parametrize("seed", range(3))
def test_probe_random_family_order(seed):
    rep = times_smoothness_probe(wobbling_family(np.random.default_rng(seed)), 0.4, 4,
                                 step=0.2, levels=4)
    assert all(o is not None and o >= 1.9 for o in rep["orders"])
