"""Truncated h-series of symbols with the growth condition ``ord(a_n) <= n``.

An :class:`HSeries` is ``a_0 + a_1 h + ... + a_N h^N``; multiplication is the
Cauchy product of symbol compositions.  :func:`birkhoff_factor` splits a unit
``U = S^{-1} Y`` into an integral-type factor ``S`` (``S - 1`` of order <= -1
in every h-degree) and a differential factor ``Y``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NonzeroConstantTerm, NotAUnit, NotInvertible, TruncationBudget
from .symbols import Symbol, compose, invert, split_DS


@dataclass(frozen=True, eq=False)
class HSeries:
    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("an h-series needs at least the h^0 term")
        d, K = terms[0].d, terms[0].K
        if any(t.d != d or t.K != K for t in terms):
            raise ValueError("all terms must share dimension and truncation depth")
        object.__setattr__(self, "terms", terms)

    # -- construction -------------------------------------------------
    @classmethod
    def one(cls, N: int, d: int = 1, K: int = 6) -> "HSeries":
        return cls((Symbol.identity(d, K),) + tuple(Symbol.zero(d, K) for _ in range(N)))

    @classmethod
    def zero(cls, N: int, d: int = 1, K: int = 6) -> "HSeries":
        return cls(tuple(Symbol.zero(d, K) for _ in range(N + 1)))

    @classmethod
    def monomial(cls, N: int, n: int, sym: Symbol) -> "HSeries":
        """``sym * h^n`` (zero if ``n > N``)."""
        terms = [Symbol.zero(sym.d, sym.K) for _ in range(N + 1)]
        if n <= N:
            terms[n] = sym
        return cls(tuple(terms))

    @classmethod
    def random_unit(cls, rng: np.random.Generator, N: int, d: int = 1, K: int = 6, M: int = 3,
                    scale: float = 0.5) -> "HSeries":
        """``1 + sum_n u_n h^n`` with random ``u_n`` of orders ``-K..n``."""
        terms = [Symbol.identity(d, K)]
        for n in range(1, N + 1):
            terms.append(Symbol.random(rng, n, d=d, K=K, M=M, scale=scale))
        return cls(tuple(terms))

    # -- attributes ---------------------------------------------------
    @property
    def N(self) -> int:
        return len(self.terms) - 1

    @property
    def d(self) -> int:
        return self.terms[0].d

    @property
    def K(self) -> int:
        return self.terms[0].K

    def __getitem__(self, n: int) -> Symbol:
        return self.terms[n]

    # -- algebra ------------------------------------------------------
    def _check(self, other: "HSeries") -> None:
        if (self.N, self.d, self.K) != (other.N, other.d, other.K):
            raise ValueError("h-series truncation, dimension or depth mismatch")

    def __add__(self, other: "HSeries") -> "HSeries":
        self._check(other)
        return HSeries(tuple(a + b for a, b in zip(self.terms, other.terms)))

    def __sub__(self, other: "HSeries") -> "HSeries":
        self._check(other)
        return HSeries(tuple(a - b for a, b in zip(self.terms, other.terms)))

    def __neg__(self) -> "HSeries":
        return self.scale(-1)

    def scale(self, s) -> "HSeries":
        return HSeries(tuple(t.scale(s) for t in self.terms))

    def __matmul__(self, other: "HSeries") -> "HSeries":
        return hmul(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HSeries):
            return NotImplemented
        return self.N == other.N and all(a == b for a, b in zip(self.terms, other.terms))

    __hash__ = None

    def diff_norm(self, other: "HSeries") -> float:
        self._check(other)
        return max(a.diff_norm(b) for a, b in zip(self.terms, other.terms))

    def max_abs(self) -> float:
        return max(t.max_abs() for t in self.terms)

    def map(self, func) -> "HSeries":
        return HSeries(tuple(func(t) for t in self.terms))

    def d_part(self) -> "HSeries":
        return self.map(lambda t: split_DS(t).d_part)

    def s_part(self) -> "HSeries":
        return self.map(lambda t: split_DS(t).s_part)

    def to_json(self) -> dict:
        return {"h_order": self.N, "terms": [t.to_json() for t in self.terms]}

    @classmethod
    def from_json(cls, data: dict) -> "HSeries":
        terms = tuple(Symbol.from_json(t) for t in data["terms"])
        if len(terms) != data["h_order"] + 1:
            raise ValueError("h_order does not match the number of terms")
        return cls(terms)

    def __repr__(self) -> str:
        return f"HSeries(N={self.N}, d={self.d}, K={self.K}, tops={[t.top for t in self.terms]})"


def hmul(a: HSeries, b: HSeries) -> HSeries:
    a._check(b)
    out = []
    for n in range(a.N + 1):
        acc = None
        for i in range(n + 1):
            if a[i].is_zero() and a[i].exact or b[n - i].is_zero() and b[n - i].exact:
                continue
            p = compose(a[i], b[n - i])
            acc = p if acc is None else acc + p
        out.append(acc if acc is not None else _zero(a[0]))
    return HSeries(tuple(out))


def hpow(a: HSeries, k: int) -> HSeries:
    out = HSeries.one(a.N, a.d, a.K)
    for _ in range(k):
        out = hmul(out, a)
    return out


def _one(ref: Symbol) -> Symbol:
    return Symbol.identity(ref.d, ref.K, ref.exact_coeffs)


def _zero(ref: Symbol) -> Symbol:
    return Symbol.zero(ref.d, ref.K, ref.exact_coeffs)


def _is_identity(s: Symbol) -> bool:
    return s.exact and s.diff_norm(Symbol.identity(s.d, s.K)) == 0


def hinv(a: HSeries) -> HSeries:
    """Inverse of a unit: ``b_0 = a_0^{-1}``, ``b_n = -a_0^{-1} sum_{i>=1} a_i b_{n-i}``."""
    try:
        b0 = _one(a[0]) if _is_identity(a[0]) else invert(a[0])
    except NotInvertible as exc:
        raise NotAUnit(f"h^0 term is not invertible: {exc}") from exc
    out = [b0]
    for n in range(1, a.N + 1):
        acc = None
        for i in range(1, n + 1):
            if a[i].is_zero() and a[i].exact:
                continue
            p = compose(a[i], out[n - i])
            acc = p if acc is None else acc + p
        out.append(_zero(a[0]) if acc is None else (compose(b0, acc)).scale(-1))
    return HSeries(tuple(out))


def hexp(a: HSeries) -> HSeries:
    """``sum_{j<=N} a^j / j!``; the h^0 term of ``a`` must vanish (``a`` is nilpotent mod h^(N+1))."""
    if not a[0].is_zero():
        raise NonzeroConstantTerm("hexp needs a zero h^0 term")
    total = HSeries.one(a.N, a.d, a.K)
    term = total
    for j in range(1, a.N + 1):
        term = hmul(term, a).scale(Fraction(1, j))
        total = total + term
    return total


@dataclass(frozen=True, eq=False)
class HFactorization:
    """``U = S^{-1} Y`` with ``S - 1`` integral-type and ``Y`` differential."""

    s_factor: HSeries
    y_factor: HSeries

    def recompose(self) -> HSeries:
        return hmul(hinv(self.s_factor), self.y_factor)

    def sy_convention(self) -> tuple[HSeries, HSeries]:
        """The same splitting written ``U = S' Y`` with ``S' = S^{-1}``."""
        return hinv(self.s_factor), self.y_factor


def _check_floor_for_d_part(c: Symbol, n: int) -> None:
    if not c.exact and c.floor > 0:
        raise TruncationBudget(
            f"h^{n} coefficient is known only down to order {c.floor}; raise the symbol depth K")


def _factor_normalized(v: HSeries) -> HFactorization:
    """Factor a unit whose h^0 term is exactly 1."""
    one = _one(v[0])
    s_terms = [one]
    y_terms = [one]
    for n in range(1, v.N + 1):
        # S V = Y at h^n: s_n + C_n = y_n with C_n = sum_{i<n} s_i v_{n-i}
        c = v[n]
        for i in range(1, n):
            if not (v[n - i].is_zero() and v[n - i].exact):
                c = c + compose(s_terms[i], v[n - i])
        _check_floor_for_d_part(c, n)
        parts = split_DS(c)
        y_terms.append(parts.d_part)
        s_terms.append(parts.s_part.scale(-1))
    return HFactorization(HSeries(tuple(s_terms)), HSeries(tuple(y_terms)))


def birkhoff_factor(u: HSeries) -> HFactorization:
    """Unique ``(S, Y)`` with ``U = S^{-1} Y``.

    For ``u_0 = 1`` this is the plain order-by-order recursion.  A general
    unit ``u_0`` is first split at h^0 as ``u_0 = s_0^{-1} y_0`` with
    ``y_0`` the multiplication by the leading coefficient of ``u_0``; the
    remaining factor ``y_0 u_0^{-1} U y_0^{-1}`` then has h^0 term 1.
    """
    u0 = u[0]
    if _is_identity(u0):
        return _factor_normalized(u)
    if u0.order() != 0:
        raise NotAUnit(f"h^0 term must have order 0, got {u0.order()}")
    try:
        g0 = u0[0]
        y0 = Symbol.mult(g0, u.K)
        y0_inv = Symbol.mult(g0.inverse(), u.K)
        u0_inv = invert(u0)
    except NotInvertible as exc:
        raise NotAUnit(str(exc)) from exc
    s0 = compose(y0, u0_inv)
    N = u.N
    u0inv_h = HSeries.monomial(N, 0, u0_inv)
    y0_h = HSeries.monomial(N, 0, y0)
    y0inv_h = HSeries.monomial(N, 0, y0_inv)
    w = hmul(hmul(y0_h, hmul(u0inv_h, u)), y0inv_h)
    w = HSeries((_one(u0),) + w.terms[1:])
    inner = _factor_normalized(w)
    s = hmul(inner.s_factor, HSeries.monomial(N, 0, s0))
    y = hmul(inner.y_factor, y0_h)
    return HFactorization(s, y)


@dataclass(frozen=True)
class GrowthReport:
    ok: bool
    violation: int | None = None
    order: int | None = None

    def to_json(self) -> dict:
        return {"ok": self.ok, "violation": self.violation, "order": self.order}


def growth_audit(a: HSeries, atol: float = 1e-12) -> GrowthReport:
    """Check ``ord(a_n) <= n``; report the first violating h-degree."""
    for n, t in enumerate(a.terms):
        scale = max(t.max_abs(), 1.0)
        o = t.order(atol * scale)
        if o is not None and o > n:
            return GrowthReport(False, n, o)
    return GrowthReport(True)


def is_unit(a: HSeries) -> bool:
    try:
        invert(a[0])
    except NotInvertible:
        return False
    return growth_audit(a).ok

