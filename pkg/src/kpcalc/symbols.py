"""Truncated odd-class symbols ``sum_n g_n(x) d^n`` on the circle.

A symbol is stored in left quantization (coefficient to the left of ``d^n``)
as a stack of :class:`~kpcalc.coeffring.MatTrigPoly` coefficients for the
orders ``floor..top``.  Every symbol carries the global truncation depth
``K``; its ``floor`` is never below ``-K``.

Precision is tracked the way truncated power series track their big-O term.
A symbol is either *exact* (a finite sum, every order below ``floor`` is
zero) or *truncated* (orders below ``floor`` are unknown).  Products of
truncated symbols raise the floor where positive orders would pull unknown
low-order terms upward, so every stored coefficient is always correct.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np
from sympy import QQ_I

from . import coeffring as cr
from .coeffring import MatTrigPoly
from .errors import NotInvertible, OrderTooHigh, ZeroSymbol

NEG_INF = -(10 ** 9)
# leading orders below this fraction of the symbol's scale are dropped as round-off
TOP_RTOL = 1e-13


def gbinom(n: int, k: int) -> Fraction:
    """Generalized binomial ``n (n-1) ... (n-k+1) / k!`` for any integer ``n``."""
    num = 1
    for i in range(k):
        num *= n - i
    return Fraction(num, factorial(k))


class Symbol:
    """Immutable truncated symbol.

    ``coeffs`` has shape ``(top - floor + 1, 2M + 1, d, d)``: index ``i`` holds
    the coefficient of ``d^(floor + i)``.
    """

    __slots__ = ("coeffs", "top", "floor", "K", "exact")

    def __init__(self, coeffs: np.ndarray, top: int, floor: int, K: int, exact: bool):
        if coeffs.shape[0] != max(top - floor + 1, 0):
            raise ValueError("coefficient stack does not match [floor, top]")
        if floor < -K and not exact:
            raise ValueError("floor below the truncation depth")
        coeffs.setflags(write=False)
        self.coeffs = coeffs
        self.top = top
        self.floor = floor
        self.K = K
        self.exact = exact

    # -- construction -------------------------------------------------
    @classmethod
    def from_terms(cls, terms: dict, d: int = 1, K: int = 6, exact_coeffs: bool = False) -> "Symbol":
        """``{order: MatTrigPoly | scalar | matrix}`` -> exact finite symbol."""
        if not terms:
            return cls.zero(d, K, exact_coeffs)
        polys = {n: _as_poly(v, d, exact_coeffs) for n, v in terms.items()}
        if any(n < -K for n in polys):
            raise ValueError(f"order below the truncation depth -{K}")
        top = max(polys)
        floor = min(min(polys), 0, top)
        M = max(p.mode_cap for p in polys.values())
        stack = _zeros(top - floor + 1, M, d, exact_coeffs)
        for n, p in polys.items():
            stack[n - floor] = p.padded(M)
        return cls._normalized(stack, top, floor, K, True)

    @classmethod
    def zero(cls, d: int = 1, K: int = 6, exact_coeffs: bool = False) -> "Symbol":
        return cls(_zeros(1, 0, d, exact_coeffs), 0, 0, K, True)

    @classmethod
    def identity(cls, d: int = 1, K: int = 6, exact_coeffs: bool = False) -> "Symbol":
        return cls.from_terms({0: MatTrigPoly.identity(d, exact_coeffs)}, d, K, exact_coeffs)

    @classmethod
    def d_power(cls, n: int, d: int = 1, K: int = 6, exact_coeffs: bool = False) -> "Symbol":
        return cls.from_terms({n: MatTrigPoly.identity(d, exact_coeffs)}, d, K, exact_coeffs)

    @classmethod
    def mult(cls, a: MatTrigPoly, K: int = 6) -> "Symbol":
        """Multiplication operator by ``a(x)``."""
        return cls.from_terms({0: a}, a.d, K, a.exact)

    @classmethod
    def random(cls, rng: np.random.Generator, top: int, d: int = 1, K: int = 6, M: int = 4,
               bottom: int | None = None, scale: float = 1.0) -> "Symbol":
        bottom = -K if bottom is None else bottom
        terms = {n: MatTrigPoly.random(rng, M, d, scale=scale) for n in range(bottom, top + 1)}
        return cls.from_terms(terms, d, K)

    @classmethod
    def _normalized(cls, stack: np.ndarray, top: int, floor: int, K: int, exact: bool) -> "Symbol":
        """Trim round-off leading orders and negligible trailing Fourier modes."""
        if stack.shape[0] == 0:
            return cls(stack, top, floor, K, exact)
        stack = cr.trim_modes(stack)
        if cr.is_exact_array(stack):
            nz = [any(bool(v) for v in stack[i].ravel()) for i in range(stack.shape[0])]
        else:
            mag = np.abs(stack).reshape(stack.shape[0], -1).max(axis=1)
            scale = mag.max()
            nz = list(mag > TOP_RTOL * scale) if scale > 0 else [False] * stack.shape[0]
        new_top = floor + max((i for i, v in enumerate(nz) if v), default=-1)
        if new_top < top:
            stack = stack[: new_top - floor + 1]
            top = new_top
        return cls(np.ascontiguousarray(stack), top, floor, K, exact)

    # -- attributes ---------------------------------------------------
    @property
    def d(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def mode_cap(self) -> int:
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def exact_coeffs(self) -> bool:
        return cr.is_exact_array(self.coeffs)

    @property
    def eff_floor(self) -> int:
        """Lowest order whose coefficient is known (``NEG_INF`` for exact symbols)."""
        return NEG_INF if self.exact else self.floor

    def __getitem__(self, n: int) -> MatTrigPoly:
        if self.floor <= n <= self.top:
            return MatTrigPoly(self.coeffs[n - self.floor])
        if n < self.floor and not self.exact:
            raise IndexError(f"order {n} lies below the known floor {self.floor}")
        return MatTrigPoly.zero(self.d, self.exact_coeffs)

    def orders(self) -> range:
        return range(self.floor, self.top + 1)

    def is_zero(self, atol: float = 0.0) -> bool:
        if self.coeffs.size == 0:
            return True
        if self.exact_coeffs:
            return all(not v for v in self.coeffs.ravel())
        return bool(np.abs(self.coeffs).max() <= atol)

    def order(self, atol: float = 0.0) -> int | None:
        """Highest order with a coefficient above ``atol`` (None if none)."""
        for n in range(self.top, self.floor - 1, -1):
            c = self.coeffs[n - self.floor]
            if cr.is_exact_array(c):
                if any(bool(v) for v in c.ravel()):
                    return n
            elif np.abs(c).max() > atol:
                return n
        return None

    def stack(self, floor: int, top: int, M: int) -> np.ndarray:
        """Coefficients re-laid over ``[floor, top]`` with mode cap ``M``."""
        out = _zeros(top - floor + 1, M, self.d, self.exact_coeffs)
        lo, hi = max(floor, self.floor), min(top, self.top)
        if lo <= hi:
            out[lo - floor: hi - floor + 1] = cr._pad_modes(self.coeffs[lo - self.floor: hi - self.floor + 1], M)
        return out

    def truncated(self, floor: int) -> "Symbol":
        """Forget every order below ``floor`` (marks the result truncated)."""
        floor = max(floor, -self.K)
        if self.exact and floor <= self.floor:
            return self
        if not self.exact and floor <= self.floor:
            return self
        top = max(self.top, floor - 1)
        return Symbol(self.stack(floor, top, self.mode_cap), top, floor, self.K, False)

    # -- linear structure ---------------------------------------------
    def __add__(self, other: "Symbol") -> "Symbol":
        return add(self, other)

    def __sub__(self, other: "Symbol") -> "Symbol":
        return add(self, other.scale(-1))

    def __neg__(self) -> "Symbol":
        return self.scale(-1)

    def scale(self, s) -> "Symbol":
        return Symbol(cr.scale_array(self.coeffs, s), self.top, self.floor, self.K, self.exact)

    def __matmul__(self, other: "Symbol") -> "Symbol":
        return compose(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Symbol):
            return NotImplemented
        return (self.top, self.floor, self.K, self.exact) == (other.top, other.floor, other.K, other.exact) \
            and self.coeffs.shape == other.coeffs.shape and bool(np.all(self.coeffs == other.coeffs))

    __hash__ = None

    def diff_norm(self, other: "Symbol", floor: int | None = None) -> float:
        """Max coefficient difference over the orders known in both symbols."""
        lo = max(self.eff_floor, other.eff_floor, -self.K if floor is None else floor)
        lo = max(lo, min(self.floor, other.floor))
        hi = max(self.top, other.top)
        if hi < lo:
            return 0.0
        M = max(self.mode_cap, other.mode_cap)
        a = self.to_float().stack(lo, hi, M)
        b = other.to_float().stack(lo, hi, M)
        return float(np.max(np.abs(a - b), initial=0.0))

    def max_abs(self) -> float:
        return float(np.abs(self.to_float().coeffs).max(initial=0.0))

    def to_float(self) -> "Symbol":
        if not self.exact_coeffs:
            return self
        f = np.vectorize(lambda v: complex(QQ_I.to_sympy(v)), otypes=[complex])
        return Symbol(f(self.coeffs) if self.coeffs.size else self.coeffs.astype(complex),
                      self.top, self.floor, self.K, self.exact)

    def map_coeffs(self, func) -> "Symbol":
        """Apply ``func: MatTrigPoly -> MatTrigPoly`` to every stored coefficient."""
        polys = [func(self[n]) for n in self.orders()]
        M = max((p.mode_cap for p in polys), default=0)
        d = polys[0].d if polys else self.d
        stack = _zeros(len(polys), M, d, self.exact_coeffs)
        for i, p in enumerate(polys):
            stack[i] = p.padded(M)
        return Symbol(stack, self.top, self.floor, self.K, self.exact)

    # -- output -------------------------------------------------------
    def pretty(self, digits: int = 4) -> str:
        """Human-readable ``[g_n(x)]·∂^n + ...`` (modes below ``10**-digits`` omitted)."""
        tol = 10.0 ** -digits
        parts = []
        for n in range(self.top, self.floor - 1, -1):
            c = self[n]
            cf = c.to_float()
            live = [k for k in range(-c.mode_cap, c.mode_cap + 1) if np.abs(cf.coeff(k)).max() > tol]
            if not live:
                continue
            modes = " + ".join(f"({_fmt(c.coeff(k), digits)})e^{{{k}ix}}" if k else f"({_fmt(c.coeff(k), digits)})"
                               for k in live)
            parts.append(f"[{modes}]·∂^{n}" if n else f"[{modes}]")
        body = " + ".join(parts) if parts else "0"
        return body if self.exact else f"{body} + O(∂^{self.floor - 1})"

    def __repr__(self) -> str:
        return (f"Symbol(top={self.top}, floor={self.floor}, K={self.K}, d={self.d}, "
                f"M={self.mode_cap}, {'exact' if self.exact else 'truncated'})")

    def to_json(self) -> dict:
        return {"top": self.top, "floor": self.floor, "K": self.K, "exact": self.exact, "d": self.d,
                "comps": {str(n): self[n].to_json() for n in self.orders()}}

    @classmethod
    def from_json(cls, data: dict) -> "Symbol":
        d, K = data["d"], data["K"]
        floor, top = data["floor"], data["top"]
        polys = {int(n): MatTrigPoly.from_json(c, d) for n, c in data["comps"].items()}
        M = max((p.mode_cap for p in polys.values()), default=0)
        stack = _zeros(top - floor + 1, M, d, False)
        for n, p in polys.items():
            stack[n - floor] = p.padded(M)
        return cls(stack, top, floor, K, data["exact"])


def _fmt(mat: np.ndarray, digits: int) -> str:
    if mat.dtype == object:
        return str(mat[0, 0]) if mat.shape == (1, 1) else str(mat.tolist())
    if mat.shape == (1, 1):
        v = complex(mat[0, 0])
        if abs(v.imag) < 10.0 ** -digits:
            return f"{v.real:.{digits}g}"
        return f"{v.real:.{digits}g}{v.imag:+.{digits}g}i"
    return np.array2string(np.round(mat, digits), separator=",").replace("\n", "")


def _zeros(n: int, M: int, d: int, exact: bool) -> np.ndarray:
    if exact:
        z = np.empty((n, 2 * M + 1, d, d), dtype=object)
        z[...] = QQ_I.zero
        return z
    return np.zeros((n, 2 * M + 1, d, d), dtype=complex)


def _as_poly(v, d: int, exact: bool) -> MatTrigPoly:
    if isinstance(v, MatTrigPoly):
        if v.d != d:
            raise ValueError(f"dimension mismatch: {v.d} vs {d}")
        return v
    v = np.asarray(v)
    if v.ndim == 0:
        v = v * np.eye(d, dtype=int)
    return MatTrigPoly.constant(v, exact=exact)


def _check_compatible(a: Symbol, b: Symbol) -> None:
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    if a.K != b.K:
        raise ValueError(f"truncation depth mismatch: {a.K} vs {b.K}")


def add(a: Symbol, b: Symbol) -> Symbol:
    _check_compatible(a, b)
    exact = a.exact and b.exact
    floor = min(a.floor, b.floor) if exact else max(a.eff_floor, b.eff_floor)
    top = max(a.top, b.top, floor - 1)
    M = max(a.mode_cap, b.mode_cap)
    sa, sb = a.stack(floor, top, M), b.stack(floor, top, M)
    if sa.dtype != sb.dtype:
        sa, sb = cr.exact_array(sa) if sa.dtype != object else sa, cr.exact_array(sb) if sb.dtype != object else sb
    return Symbol._normalized(sa + sb, top, floor, a.K, exact)


def compose(a: Symbol, b: Symbol) -> Symbol:
    """Left-quantized product via ``d^n g = sum_k C(n,k) g^(k) d^(n-k)``.

    The result keeps every order that is fully determined by the inputs,
    down to the truncation depth.
    """
    _check_compatible(a, b)
    K = a.K
    if a.exact and a.floor >= 0:
        # a is a finite differential operator: no order can fall below b's floor
        floor = b.floor if b.exact else b.floor + max(a.top, 0)
        exact = b.exact
    elif a.exact and b.exact and b.mode_cap == 0:
        # constant coefficients on the right have no derivatives: the product is a finite sum
        floor = max(a.floor + b.floor, -K)
        exact = a.floor + b.floor >= -K
    else:
        floor = max(a.eff_floor + b.top, b.eff_floor + a.top, -K)
        exact = False
    top = a.top + b.top
    if floor > top:
        if exact:
            return Symbol.zero(a.d, K, a.exact_coeffs or b.exact_coeffs)
        # nothing is known: an empty truncated symbol
        return Symbol(_zeros(0, 0, a.d, a.exact_coeffs or b.exact_coeffs), floor - 1, floor, K, False)
    exact_coeffs = a.exact_coeffs or b.exact_coeffs
    Ma, Mb = a.mode_cap, b.mode_cap
    Mc = Ma + Mb
    n_out = top - floor + 1
    ac, bc = a.coeffs, b.coeffs
    if exact_coeffs:
        ac = ac if cr.is_exact_array(ac) else cr.exact_array(ac)
        bc = bc if cr.is_exact_array(bc) else cr.exact_array(bc)
        acc = _zeros(n_out, Mc, a.d, True)
    else:
        acc = np.zeros((n_out, 2 * Mc + 1, a.d, a.d), dtype=complex)
    kmax = max(a.top, a.top + b.top - floor, 0)
    for k in range(kmax + 1):
        bk = bc * cr.mode_factors(Mb, k, exact_coeffs) if k else bc
        for n in range(a.floor, a.top + 1):
            if n >= 0 and k > n:
                continue
            w = gbinom(n, k)
            if w == 0:
                continue
            # output order n + m - k must lie in [floor, top]
            m_lo = max(b.floor, floor - n + k)
            m_hi = min(b.top, top - n + k)
            if m_lo > m_hi:
                continue
            o_lo = n + m_lo - k - floor
            o_hi = n + m_hi - k - floor + 1
            bs = slice(m_lo - b.floor, m_hi - b.floor + 1)
            if exact_coeffs:
                prod = cr.conv_modes(ac[n - a.floor][None], bk[bs], mode_max=10 ** 6)
                acc[o_lo:o_hi] = acc[o_lo:o_hi] + cr.scale_array(cr._pad_modes(prod, Mc), w)
            else:
                acc[o_lo:o_hi] += float(w) * cr.conv_direct(ac[n - a.floor], bk[bs])
    return Symbol._normalized(acc, top, floor, K, exact)


@dataclass(frozen=True)
class SymbolSplit:
    d_part: Symbol
    s_part: Symbol


def split_DS(a: Symbol) -> SymbolSplit:
    """Differential part (orders >= 0) and integral part (orders <= -1)."""
    M = a.mode_cap
    if a.top >= 0:
        d_floor = max(a.floor, 0)
        d_stack = a.stack(d_floor, a.top, M)
        # orders >= 0 are all known when floor <= 0: the differential part is then a finite sum
        d_part = Symbol._normalized(d_stack, a.top, d_floor, a.K, a.exact or a.floor <= 0)
    else:
        d_part = Symbol.zero(a.d, a.K, a.exact_coeffs)
    s_top = min(a.top, -1)
    if a.floor <= -1:
        s_part = Symbol._normalized(a.stack(a.floor, s_top, M), s_top, a.floor, a.K, a.exact)
    elif a.exact:
        s_part = Symbol.zero(a.d, a.K, a.exact_coeffs)
    else:
        s_part = Symbol(_zeros(0, 0, a.d, a.exact_coeffs), a.floor - 1, a.floor, a.K, False)
    return SymbolSplit(d_part, s_part)


def principal_symbol(a: Symbol, atol: float = 0.0) -> tuple[int, MatTrigPoly]:
    n = a.order(atol)
    if n is None:
        raise ZeroSymbol("symbol has no nonzero coefficient")
    return n, a[n]


def _mult_symbol(p: MatTrigPoly, K: int) -> Symbol:
    return Symbol.mult(p, K)


def invert(a: Symbol, det_tol: float = 1e-8) -> Symbol:
    """Inverse of an order-0 symbol with pointwise invertible leading coefficient.

    Writes ``a = g0 (1 + R)`` with ``R`` of order <= -1 and sums the
    terminating Neumann series ``sum_j (-R)^j`` down to the floor.
    """
    n = a.order()
    if n is None or n != 0:
        raise NotInvertible(f"expected top order 0, got {n}")
    g0inv = _mult_symbol(a[0].inverse(det_tol=det_tol), a.K)
    r = compose(g0inv, a) - Symbol.identity(a.d, a.K, a.exact_coeffs)
    r = split_DS(r).s_part
    if r.is_zero() and r.exact:
        return g0inv
    total = Symbol.identity(a.d, a.K, a.exact_coeffs)
    term = total
    neg_r = -r
    for _ in range(a.K):
        term = compose(term, neg_r)
        if term.top < term.floor:
            break
        total = total + term
    return compose(total, g0inv)


def exp_neg(a: Symbol) -> Symbol:
    """``sum_j a^j / j!`` for ``a`` of order <= -1 (terminates at the floor)."""
    if not a.is_zero() and a.order() is not None and a.order() > -1:
        raise OrderTooHigh(f"exp_neg needs order <= -1, got {a.order()}")
    one = Symbol.identity(a.d, a.K, a.exact_coeffs)
    if a.is_zero():
        return one
    total, term = one, one
    for j in range(1, a.K + 1):
        term = compose(term, a).scale(Fraction(1, j))
        if term.top < term.floor:
            break
        total = total + term
    return total


def log_neg(s: Symbol) -> Symbol:
    """Inverse of :func:`exp_neg`: ``sum_j (-1)^(j+1) (s-1)^j / j``."""
    x = s - Symbol.identity(s.d, s.K, s.exact_coeffs)
    if x.is_zero():
        return x
    if x.order() > -1:
        raise OrderTooHigh(f"log_neg needs s - 1 of order <= -1, got {x.order()}")
    total, power = x, x
    for j in range(2, s.K + 1):
        power = compose(power, x)
        if power.top < power.floor:
            break
        total = total + power.scale(Fraction((-1) ** (j + 1), j))
    return total


def multiplier(n: int, k: np.ndarray) -> np.ndarray:
    """Fourier multiplier ``(ik)^n`` with ``(ik)^n = 0`` at ``k = 0`` for ``n < 0``."""
    k = np.asarray(k)
    out = np.zeros(k.shape, dtype=complex)
    nz = k != 0
    out[nz] = (1j * k[nz].astype(float)) ** n
    if n >= 0:
        out[~nz] = 1.0 if n == 0 else 0.0
    return out


def apply_to_function(a: Symbol, f: MatTrigPoly) -> MatTrigPoly:
    """Act on the columns of ``f`` by ``sum_n g_n(x) (ik)^n`` on each Fourier mode."""
    if f.d != a.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {f.d}")
    Mf = f.mode_cap
    ks = np.arange(-Mf, Mf + 1)
    fc = f.to_float().coeffs
    total = MatTrigPoly.zero(a.d)
    af = a.to_float()
    for n in a.orders():
        g = af[n]
        if g.max_abs() == 0:
            continue
        shifted = MatTrigPoly(fc * multiplier(n, ks)[:, None, None])
        total = total + cr.mul(g, shifted)
    return total
