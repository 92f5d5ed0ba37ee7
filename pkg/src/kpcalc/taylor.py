"""Taylor expansions of twisted functions ``c = S0^{-1}(f) o g`` and the KP times they induce.

Faa di Bruno writes the Taylor coefficients of ``c`` at ``x0`` through
partial Bell polynomials in the derivatives ``u_i = g^(i)(x0)``; collecting
by the order of differentiation gives h-series ``a_k`` with ``a_0 = 1``, and
``log(sum_k a_k X^k) = sum_n t_n X^n`` turns them into times.  The unit
``exp(sum_n t_n L0^n)`` then reproduces the Taylor series of ``c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .coeffring import MatTrigPoly, eval_at
from .errors import NonUnitConstantTerm, NonzeroConstantTerm
from .fio import Diffeo, _check_residual, pullback
from .hseries import HSeries
from .kpflows import TimeContext, make_L0, u_field
from .symbols import Symbol, apply_to_function, invert

TWO_PI = 2 * np.pi


# -- Bell polynomials --------------------------------------------------------

def bell(n: int, k: int, u) -> object:
    """Partial Bell polynomial ``B_{n,k}(u_1, ..., u_{n-k+1})``; ``u[0]`` is ``u_1``.

    Works over any commutative ring whose elements support ``+`` and ``*``.
    """
    if not 1 <= k <= n:
        raise IndexError(f"need 1 <= k <= n, got n={n}, k={k}")
    if len(u) < n - k + 1:
        raise IndexError(f"B_{{{n},{k}}} needs {n - k + 1} jet values, got {len(u)}")
    return bell_table(n, u)[n][k]


def bell_table(N: int, u) -> list[list]:
    """``table[n][k] = B_{n,k}`` for ``0 <= k <= n <= N`` (with ``B_{0,0} = 1``)."""
    zero = u[0] * 0 if len(u) else 0
    one = zero + 1
    table = [[one]]
    for n in range(1, N + 1):
        row = [zero]
        for k in range(1, n + 1):
            acc = zero
            for j in range(1, n - k + 2):
                if j > len(u):
                    break
                prev = table[n - j][k - 1] if k - 1 <= n - j else zero
                acc = acc + math.comb(n - 1, j - 1) * u[j - 1] * prev
            row.append(acc)
        table.append(row)
    return table


# -- scalar h-series -----------------------------------------------------------

class HJetSeries:
    """Scalar (or matrix) power series in h truncated at ``h^N``."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        arr = np.array(coeffs, dtype=complex)
        if arr.ndim == 0 or arr.shape[0] == 0:
            raise ValueError("an h-series needs at least one coefficient")
        self.coeffs = arr

    @classmethod
    def constant(cls, c, N: int) -> "HJetSeries":
        out = np.zeros(N + 1, dtype=complex)
        out[0] = c
        return cls(out)

    @classmethod
    def zero(cls, N: int) -> "HJetSeries":
        return cls(np.zeros(N + 1, dtype=complex))

    @property
    def N(self) -> int:
        return self.coeffs.shape[0] - 1

    def __getitem__(self, j: int):
        return self.coeffs[j]

    def __add__(self, other):
        if not isinstance(other, HJetSeries):
            return HJetSeries(self.coeffs + np.eye(1, self.N + 1, 0)[0] * other)
        return HJetSeries(self.coeffs + other.coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return HJetSeries(-self.coeffs)

    def __mul__(self, other):
        if not isinstance(other, HJetSeries):
            return HJetSeries(self.coeffs * other)
        N = self.N
        out = np.convolve(self.coeffs, other.coeffs)[: N + 1]
        return HJetSeries(out)

    __rmul__ = __mul__

    def truncate(self, m: int) -> "HJetSeries":
        """Zero out the coefficients above ``h^m``."""
        out = self.coeffs.copy()
        out[max(m + 1, 0):] = 0
        return HJetSeries(out)

    def log(self) -> "HJetSeries":
        if abs(self.coeffs[0] - 1) > 1e-14:
            raise NonUnitConstantTerm(f"log needs constant term 1, got {self.coeffs[0]}")
        return HJetSeries(_log_coeffs(list(self.coeffs), 0.0))

    def exp(self) -> "HJetSeries":
        if abs(self.coeffs[0]) > 0:
            raise NonzeroConstantTerm("exp needs a zero constant term")
        return HJetSeries(_exp_coeffs(list(self.coeffs), 1.0 + 0j))

    def allclose(self, other: "HJetSeries", atol: float = 1e-12) -> bool:
        return bool(np.abs(self.coeffs - other.coeffs).max() <= atol)

    def to_json(self) -> list:
        return [[float(c.real), float(c.imag)] for c in self.coeffs]

    def __repr__(self) -> str:
        return f"HJetSeries({np.array2string(self.coeffs, precision=4)})"


def _log_coeffs(a: list, zero) -> list:
    """``t = log(a)`` for ``a[0] = 1`` via ``n t_n = n a_n - sum_{k<n} k t_k a_{n-k}``."""
    t = [zero * a[0]]
    for n in range(1, len(a)):
        acc = a[n] * n
        for k in range(1, n):
            acc = acc - t[k] * a[n - k] * k
        t.append(acc * Fraction(1, n) if isinstance(acc, (int, Fraction)) else acc * (1 / n))
    return t


def _exp_coeffs(t: list, one) -> list:
    """``a = exp(t)`` for ``t[0] = 0`` via ``n a_n = sum_{k<=n} k t_k a_{n-k}``."""
    a = [one]
    for n in range(1, len(t)):
        acc = t[1] * a[n - 1]
        for k in range(2, n + 1):
            acc = acc + t[k] * a[n - k] * k
        a.append(acc * (1 / n))
    return a


# -- a_k and the times ------------------------------------------------------------

def jet_values(g: Diffeo, x0: float, n: int) -> list[float]:
    """``[g'(x0), g''(x0), ..., g^(n)(x0)]`` from the exact mode data."""
    x0 = float(x0) % TWO_PI
    out = []
    for i in range(1, n + 1):
        v = float(eval_at(g.p.derivative(i), x0)[0, 0].real)
        out.append(v + 1.0 if i == 1 else v)
    return out


def a_coeffs(g: Diffeo, x0: float, N: int) -> list[HJetSeries]:
    """``a_k = sum_{n>=k} h^(n-k)/n! B_{n,k}(u)``, each truncated at ``h^(N-k)``."""
    u = jet_values(g, x0, max(N, 1))
    table = bell_table(N, u)
    out = [HJetSeries.constant(1.0, N)]
    for k in range(1, N + 1):
        c = np.zeros(N + 1, dtype=complex)
        for n in range(k, N + 1):
            c[n - k] = table[n][k] / math.factorial(n)
        out.append(HJetSeries(c))
    return out


def time_change(a: list[HJetSeries]) -> dict[int, HJetSeries]:
    """Coefficients ``t_n`` of ``log(sum_k a_k X^k)``, each truncated at ``h^(N-n)``."""
    N = len(a) - 1
    if not a[0].allclose(HJetSeries.constant(1.0, a[0].N), 1e-14):
        raise NonUnitConstantTerm("a_0 must be the unit series")
    t = _log_coeffs(list(a), HJetSeries.zero(a[0].N))
    return {n: t[n].truncate(N - n) for n in range(1, N + 1)}


def time_change_inverse(t: dict[int, HJetSeries], N: int) -> list[HJetSeries]:
    """``a_k`` from ``exp(sum_n t_n X^n)``, each truncated at ``h^(N-k)``."""
    L = next(iter(t.values())).N
    seq = [HJetSeries.zero(L)] + [t.get(n, HJetSeries.zero(L)) for n in range(1, N + 1)]
    a = _exp_coeffs(seq, HJetSeries.constant(1.0, L))
    return [a[k].truncate(N - k) for k in range(N + 1)]


def times_context(t: dict[int, HJetSeries]) -> TimeContext:
    """Times ``t_n / h^n`` for ``U_h``: with ``L0`` carrying one h per factor the
    exponent becomes ``sum_n t_n L0^n``."""
    return TimeContext({n: tuple(s.coeffs) for n, s in t.items()})


# -- the Taylor theorem --------------------------------------------------------------

@dataclass(frozen=True)
class TaylorOrder:
    n: int
    lhs: np.ndarray
    rhs: np.ndarray
    abs_diff: float

    def to_json(self) -> dict:
        def enc(m):
            return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(m)]
        return {"n": self.n, "lhs": enc(self.lhs), "rhs": enc(self.rhs), "abs_diff": self.abs_diff}


@dataclass(frozen=True)
class TaylorReport:
    orders: tuple
    refit_residual: float
    K: int

    @property
    def max_diff(self) -> float:
        return max(o.abs_diff for o in self.orders)

    def to_json(self) -> dict:
        return {"orders": [o.to_json() for o in self.orders], "refit_residual": self.refit_residual,
                "K": self.K, "max_abs_diff": self.max_diff}


def taylor_lhs(S0: Symbol, g: Diffeo, f: MatTrigPoly, x0: float, N: int) -> tuple[list[np.ndarray], float]:
    """Taylor coefficients ``c^(j)(x0)/j!`` of ``c = S0^{-1}(f) o g``."""
    x0 = float(x0) % TWO_PI
    q = apply_to_function(invert(S0), f)
    c, residual = pullback(q, g)
    _check_residual(residual, "Taylor left side")
    return [eval_at(c.derivative(j), x0) / math.factorial(j) for j in range(N + 1)], residual


def taylor_rhs(S0: Symbol, g: Diffeo, f: MatTrigPoly, x0: float, N: int) -> list[np.ndarray]:
    """h-coefficients of ``S0^{-1}(U_h(t_1/h, t_2/h^2, ...) f)`` at ``g(x0)``."""
    x0 = float(x0) % TWO_PI
    t = time_change(a_coeffs(g, x0, N))
    U: HSeries = u_field(make_L0(S0, N), times_context(t))
    S0inv = invert(S0)
    y = float(g(x0)) % TWO_PI
    return [eval_at(apply_to_function(S0inv, apply_to_function(U[j], f)), y) for j in range(N + 1)]


def verify_taylor_theorem(S0: Symbol, g: Diffeo, f: MatTrigPoly, x0: float, N: int) -> TaylorReport:
    lhs, residual = taylor_lhs(S0, g, f, x0, N)
    rhs = taylor_rhs(S0, g, f, x0, N)
    orders = tuple(TaylorOrder(j, l, r, float(np.abs(l - r).max())) for j, (l, r) in enumerate(zip(lhs, rhs)))
    return TaylorReport(orders, residual, S0.K)


# -- smooth dependence of the times on g ----------------------------------------------

def times_smoothness_probe(family, x0: float, N: int, eps0: float = 0.0, step: float = 0.05,
                           levels: int = 3) -> dict:
    """Central differences of ``t_n(eps)`` in ``eps`` at ``eps0`` with halving steps.

    ``family(eps)`` returns a :class:`Diffeo`.  Reports the derivative
    estimates and the observed convergence order from successive differences.
    """
    def times(eps):
        t = time_change(a_coeffs(family(eps), x0, N))
        return np.stack([t[n].coeffs for n in range(1, N + 1)])

    estimates = []
    h = step
    for _ in range(levels):
        estimates.append((times(eps0 + h) - times(eps0 - h)) / (2 * h))
        h /= 2
    gaps = [float(np.abs(a - b).max()) for a, b in zip(estimates, estimates[1:])]
    orders = [math.log2(a / b) if a > 0 and b > 0 else None for a, b in zip(gaps, gaps[1:])]
    return {"derivative": estimates[-1], "gaps": gaps, "orders": orders}
