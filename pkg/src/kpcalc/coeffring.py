"""Matrix-valued trigonometric polynomials on the circle.

A :class:`MatTrigPoly` stores the Fourier modes ``k = -M..M`` of a ``d x d``
matrix function ``x -> sum_k c_k exp(ikx)`` in a dense array of shape
``(2M+1, d, d)``.  Float values use complex128; the exact mode stores
Gaussian rationals (``sympy.QQ_I``) in object arrays and never rounds.
"""
from __future__ import annotations

from fractions import Fraction
from numbers import Rational

import numpy as np
from sympy import QQ_I, Rational as SymRational

from .errors import ModeOverflow, NotInvertible

MODE_MAX = 64
# trailing modes below this fraction of the largest coefficient are treated as zero
TRIM_RTOL = 1e-14


def to_exact(x):
    """Convert an int / Fraction / Gaussian rational into a ``QQ_I`` element."""
    if isinstance(x, type(QQ_I.one)):
        return x
    if isinstance(x, (int, np.integer)):
        return QQ_I(int(x), 0)
    if isinstance(x, Rational):
        x = Fraction(x)
        return QQ_I(SymRational(x.numerator, x.denominator), 0)
    if isinstance(x, complex) and x.real == int(x.real) and x.imag == int(x.imag):
        return QQ_I(int(x.real), int(x.imag))
    raise TypeError(f"cannot represent {x!r} exactly")


def exact_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = to_exact(v)
    return out


def is_exact_array(arr: np.ndarray) -> bool:
    return arr.dtype == object


def scale_array(arr: np.ndarray, s) -> np.ndarray:
    """Multiply by a scalar, keeping exact arrays exact when ``s`` is rational."""
    if is_exact_array(arr):
        return arr * to_exact(s)
    return arr * complex(s)


def mode_factors(M: int, power: int, exact: bool) -> np.ndarray:
    """``(ik)**power`` for ``k = -M..M``, shaped to broadcast over ``(..., 2M+1, d, d)``."""
    ks = np.arange(-M, M + 1)
    if exact:
        f = np.array([to_exact(1j * k) ** power if power else QQ_I.one for k in ks], dtype=object)
    else:
        f = (1j * ks.astype(float)) ** power
    return f[:, None, None]


def _pad_modes(arr: np.ndarray, M: int) -> np.ndarray:
    """Zero-pad the mode axis (axis -3) of ``arr`` up to cap ``M``."""
    cur = (arr.shape[-3] - 1) // 2
    if cur == M:
        return arr
    if cur > M:
        return arr[..., cur - M: cur + M + 1, :, :]
    pad = [(0, 0)] * arr.ndim
    pad[-3] = (M - cur, M - cur)
    if is_exact_array(arr):
        out = np.empty(arr.shape[:-3] + (2 * M + 1,) + arr.shape[-2:], dtype=object)
        out[...] = QQ_I.zero
        out[..., M - cur: M + cur + 1, :, :] = arr
        return out
    return np.pad(arr, pad)


def trim_modes(arr: np.ndarray, mode_max: int = MODE_MAX, rtol: float = TRIM_RTOL) -> np.ndarray:
    """Drop negligible trailing modes; raise ModeOverflow if a live mode exceeds ``mode_max``."""
    M = (arr.shape[-3] - 1) // 2
    if is_exact_array(arr):
        live = np.array([any(bool(v) for v in arr[..., M + k, :, :].ravel()) or
                         any(bool(v) for v in arr[..., M - k, :, :].ravel()) for k in range(M + 1)])
    else:
        mag = np.abs(arr)
        scale = mag.max() if mag.size else 0.0
        axes = tuple(i for i in range(arr.ndim) if i != arr.ndim - 3)
        per_mode = mag.max(axis=axes) if mag.size else np.zeros(2 * M + 1)
        tail = np.maximum(per_mode[M:], per_mode[M::-1])
        live = tail > rtol * scale if scale > 0 else np.zeros(M + 1, dtype=bool)
    top = int(np.nonzero(live)[0].max()) if live.any() else 0
    if top > mode_max:
        raise ModeOverflow(f"mode {top} exceeds the cap {mode_max}")
    return _pad_modes(arr, top)


def conv_modes(a: np.ndarray, b: np.ndarray, mode_max: int = MODE_MAX) -> np.ndarray:
    """Convolve along the mode axis with matrix products on the last two axes.

    Exact inputs may carry broadcasting leading axes; float inputs are single
    polynomials.  Both are summed directly (see :func:`conv_direct`).
    """
    Ma = (a.shape[-3] - 1) // 2
    Mb = (b.shape[-3] - 1) // 2
    Mc = Ma + Mb
    if is_exact_array(a) or is_exact_array(b):
        if not is_exact_array(a):
            a = exact_array(a)
        if not is_exact_array(b):
            b = exact_array(b)
        lead = np.broadcast_shapes(a.shape[:-3], b.shape[:-3])
        out = np.empty(lead + (2 * Mc + 1, a.shape[-2], b.shape[-1]), dtype=object)
        out[...] = QQ_I.zero
        for i in range(2 * Ma + 1):
            for j in range(2 * Mb + 1):
                out[..., i + j, :, :] = out[..., i + j, :, :] + np.matmul(a[..., i, :, :], b[..., j, :, :])
        return trim_modes(out, mode_max)
    return trim_modes(conv_direct(a, b[None])[0], mode_max)


def conv_direct(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Float mode convolution of one ``a`` (modes, d, d) with a stack ``b`` (s, modes, d, d).

    Summing directly keeps the error of each output mode proportional to its
    own contributions; an FFT spreads the error of the largest mode over all
    of them, which derivative factors ``(ik)^n`` then amplify.
    """
    na, nb = a.shape[0], b.shape[1]
    n_out = na + nb - 1
    pad = np.zeros((b.shape[0], n_out + na - 1) + b.shape[2:], dtype=complex)
    pad[:, na - 1:na - 1 + nb] = b
    idx = np.arange(n_out)[:, None] - np.arange(na)[None, :] + na - 1
    return np.matmul(a[None, None], pad[:, idx]).sum(axis=2)


def to_grid(arr: np.ndarray, G: int) -> np.ndarray:
    """Values at ``x_j = 2*pi*j/G`` (mode axis becomes the grid axis)."""
    M = (arr.shape[-3] - 1) // 2
    if 2 * M + 1 > G:
        raise ValueError(f"grid of {G} points cannot resolve mode cap {M}")
    buf = np.zeros(arr.shape[:-3] + (G,) + arr.shape[-2:], dtype=complex)
    idx = np.arange(-M, M + 1) % G
    buf[..., idx, :, :] = arr
    return np.fft.ifft(buf, axis=-3) * G


def from_grid(values: np.ndarray, M: int) -> np.ndarray:
    """Fourier modes ``-M..M`` from samples on a uniform grid (inverse of :func:`to_grid`)."""
    G = values.shape[-3]
    hat = np.fft.fft(values, axis=-3) / G
    idx = np.arange(-M, M + 1) % G
    return hat[..., idx, :, :]


class MatTrigPoly:
    """Matrix-valued trigonometric polynomial; immutable once built."""

    __slots__ = ("coeffs", "real")

    def __init__(self, coeffs, real: bool = False):
        arr = np.asarray(coeffs) if not isinstance(coeffs, np.ndarray) else coeffs
        if arr.dtype != object:
            arr = arr.astype(complex)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2] or arr.shape[0] % 2 != 1:
            raise ValueError("coeffs must have shape (2M+1, d, d)")
        arr.setflags(write=False)
        self.coeffs = arr
        self.real = real

    # -- construction -------------------------------------------------
    @classmethod
    def zero(cls, d: int = 1, exact: bool = False) -> "MatTrigPoly":
        c = exact_array(np.zeros((1, d, d), dtype=int)) if exact else np.zeros((1, d, d), complex)
        return cls(c, real=True)

    @classmethod
    def constant(cls, mat, exact: bool = False) -> "MatTrigPoly":
        mat = np.atleast_2d(np.asarray(mat, dtype=object if exact else complex))
        c = exact_array(mat)[None] if exact else mat[None].astype(complex)
        out = cls(c)
        out.real = out._check_real()
        return out

    @classmethod
    def identity(cls, d: int = 1, exact: bool = False) -> "MatTrigPoly":
        return cls.constant(np.eye(d, dtype=int), exact=exact)

    @classmethod
    def from_modes(cls, modes: dict, d: int = 1, exact: bool = False) -> "MatTrigPoly":
        """Build from ``{k: matrix or scalar}``; scalars mean multiples of the identity."""
        M = max((abs(k) for k in modes), default=0)
        if exact:
            c = np.empty((2 * M + 1, d, d), dtype=object)
            c[...] = QQ_I.zero
        else:
            c = np.zeros((2 * M + 1, d, d), complex)
        for k, v in modes.items():
            v = np.asarray(v, dtype=object if exact else complex)
            if v.ndim == 0:
                v = v * np.eye(d, dtype=int)
            c[k + M] = exact_array(v) if exact else v
        out = cls(c)
        out.real = out._check_real()
        return out

    @classmethod
    def from_function(cls, func, M: int, d: int = 1) -> "MatTrigPoly":
        """Sample ``func(x) -> d x d`` on 2M+1 points and take the interpolating modes."""
        G = 2 * M + 1
        xs = 2 * np.pi * np.arange(G) / G
        vals = np.array([np.broadcast_to(np.asarray(func(x), complex), (d, d)) for x in xs])
        return cls(from_grid(vals, M))

    @classmethod
    def random(cls, rng: np.random.Generator, M: int, d: int = 1, real: bool = False,
               scale: float = 1.0) -> "MatTrigPoly":
        c = rng.normal(size=(2 * M + 1, d, d)) + 1j * rng.normal(size=(2 * M + 1, d, d))
        c *= scale / np.sqrt(2.0 * (2 * M + 1))
        if real:
            c = 0.5 * (c + np.conj(c[::-1]))
        return cls(c, real=real)

    # -- basic attributes ---------------------------------------------
    @property
    def d(self) -> int:
        return self.coeffs.shape[1]

    @property
    def mode_cap(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def exact(self) -> bool:
        return is_exact_array(self.coeffs)

    def coeff(self, k: int) -> np.ndarray:
        M = self.mode_cap
        if abs(k) > M:
            return np.zeros((self.d, self.d), dtype=self.coeffs.dtype)
        return self.coeffs[k + M]

    def padded(self, M: int) -> np.ndarray:
        return _pad_modes(self.coeffs, M)

    def _check_real(self) -> bool:
        c = self.coeffs
        if self.exact:
            return all(c[i, a, b] == _conj(c[-1 - i, a, b]) for i in range(c.shape[0])
                       for a in range(self.d) for b in range(self.d))
        return bool(np.array_equal(c, np.conj(c[::-1])))

    def to_float(self) -> "MatTrigPoly":
        if not self.exact:
            return self
        f = np.vectorize(lambda v: complex(QQ_I.to_sympy(v)), otypes=[complex])
        return MatTrigPoly(f(self.coeffs), real=self.real)

    # -- ring operations ----------------------------------------------
    def _check_dim(self, other: "MatTrigPoly") -> None:
        if self.d != other.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")

    def __add__(self, other: "MatTrigPoly") -> "MatTrigPoly":
        return add(self, other)

    def __sub__(self, other: "MatTrigPoly") -> "MatTrigPoly":
        return add(self, other.scale(-1))

    def __neg__(self) -> "MatTrigPoly":
        return self.scale(-1)

    def __mul__(self, other: "MatTrigPoly") -> "MatTrigPoly":
        return mul(self, other)

    def scale(self, s) -> "MatTrigPoly":
        real = self.real and (isinstance(s, (int, Rational)) or np.imag(complex(s)) == 0)
        return MatTrigPoly(scale_array(self.coeffs, s), real=real)

    def derivative(self, order: int = 1) -> "MatTrigPoly":
        return derivative(self, order)

    def __call__(self, x) -> np.ndarray:
        return eval_at(self, x)

    def inverse(self, mode_max: int = MODE_MAX, det_tol: float = 1e-8) -> "MatTrigPoly":
        return pointwise_inverse(self, mode_max=mode_max, det_tol=det_tol)

    def max_abs(self) -> float:
        return float(np.abs(self.to_float().coeffs).max()) if self.coeffs.size else 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatTrigPoly) or other.d != self.d:
            return NotImplemented
        M = max(self.mode_cap, other.mode_cap)
        a, b = self.padded(M), other.padded(M)
        if self.exact and other.exact:
            return bool(np.all(a == b))
        return bool(np.array_equal(np.asarray(a, complex), np.asarray(b, complex)))

    __hash__ = None

    def allclose(self, other: "MatTrigPoly", atol: float = 1e-12) -> bool:
        M = max(self.mode_cap, other.mode_cap)
        a = self.to_float().padded(M)
        b = other.to_float().padded(M)
        return bool(np.max(np.abs(a - b), initial=0.0) <= atol)

    def to_json(self) -> dict:
        """``{mode: [[[re, im], ...], ...]}`` with nonzero modes only."""
        out = {}
        f = self.to_float()
        for k in range(-self.mode_cap, self.mode_cap + 1):
            c = f.coeff(k)
            if np.any(c != 0):
                out[str(k)] = [[[float(v.real), float(v.imag)] for v in row] for row in c]
        return out

    @classmethod
    def from_json(cls, data: dict, d: int) -> "MatTrigPoly":
        modes = {int(k): np.array([[complex(*v) for v in row] for row in mat]) for k, mat in data.items()}
        return cls.from_modes(modes or {0: np.zeros((d, d))}, d=d)

    def __repr__(self) -> str:
        return f"MatTrigPoly(d={self.d}, M={self.mode_cap}{', exact' if self.exact else ''})"


def add(a: MatTrigPoly, b: MatTrigPoly) -> MatTrigPoly:
    a._check_dim(b)
    M = max(a.mode_cap, b.mode_cap)
    ca, cb = a.padded(M), b.padded(M)
    if a.exact != b.exact:
        ca, cb = exact_array(ca) if not a.exact else ca, exact_array(cb) if not b.exact else cb
    return MatTrigPoly(ca + cb, real=a.real and b.real)


def mul(a: MatTrigPoly, b: MatTrigPoly, mode_max: int = MODE_MAX) -> MatTrigPoly:
    a._check_dim(b)
    if a.mode_cap + b.mode_cap > mode_max:
        raise ModeOverflow(f"product support {a.mode_cap + b.mode_cap} exceeds the cap {mode_max}")
    return MatTrigPoly(conv_modes(a.coeffs, b.coeffs, mode_max), real=a.real and b.real)


def derivative(a: MatTrigPoly, order: int = 1) -> MatTrigPoly:
    return MatTrigPoly(a.coeffs * mode_factors(a.mode_cap, order, a.exact), real=a.real)


def eval_at(a: MatTrigPoly, x) -> np.ndarray:
    """Exact summation ``sum_k c_k exp(ikx)``; ``x`` may be a scalar or an array."""
    f = a.to_float()
    ks = np.arange(-f.mode_cap, f.mode_cap + 1)
    x = np.asarray(x, dtype=float)
    phase = np.exp(1j * np.multiply.outer(x, ks))
    return np.tensordot(phase, f.coeffs, axes=([-1], [0]))


def grid(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def pointwise_inverse(a: MatTrigPoly, mode_max: int = MODE_MAX, det_tol: float = 1e-8) -> MatTrigPoly:
    """Pointwise matrix inverse ``x -> a(x)^{-1}``.

    Invertibility is checked on ``4M+1`` grid points.  The inverse is exact
    for constants; otherwise it is resolved on ``2*mode_max+1`` points and
    must decay below the trim tolerance inside the cap.
    """
    M = a.mode_cap
    check = eval_at(a, grid(4 * M + 1))
    dets = np.abs(np.linalg.det(check))
    if dets.min() < det_tol:
        raise NotInvertible(f"determinant {dets.min():.3e} below {det_tol:g} on the grid")
    if M == 0 or not np.any(a.to_float().coeffs[np.arange(2 * M + 1) != M]):
        c0 = a.coeff(0)
        if a.exact:
            return MatTrigPoly(_exact_inv(c0)[None], real=a.real)
        return MatTrigPoly(np.linalg.inv(c0)[None], real=a.real)
    if a.exact:
        raise NotInvertible("inverse of a non-constant exact coefficient is not a trigonometric polynomial")
    G = 2 * mode_max + 1
    vals = np.linalg.inv(to_grid(a.coeffs, G))
    coeffs = from_grid(vals, mode_max)
    mag = np.abs(coeffs)
    edge = max(mag[0].max(), mag[-1].max())
    if edge > TRIM_RTOL * mag.max():
        raise NotInvertible(f"pointwise inverse does not resolve within {mode_max} modes (edge {edge:.2e}); "
                            "the coefficient is singular or nearly singular between grid points")
    out = MatTrigPoly(trim_modes(coeffs, mode_max))
    if a.real:
        out = MatTrigPoly(0.5 * (out.coeffs + np.conj(out.coeffs[::-1])), real=True)
    return out


def _conj(v):
    return QQ_I(v.x, -v.y)


def _exact_inv(m: np.ndarray) -> np.ndarray:
    """Gauss-Jordan over Gaussian rationals."""
    n = m.shape[0]
    aug = np.empty((n, 2 * n), dtype=object)
    aug[:, :n] = m
    aug[:, n:] = exact_array(np.eye(n, dtype=int))
    for col in range(n):
        piv = next((r for r in range(col, n) if bool(aug[r, col])), None)
        if piv is None:
            raise NotInvertible("singular exact matrix")
        aug[[col, piv]] = aug[[piv, col]]
        aug[col] = aug[col] / aug[col, col]
        for r in range(n):
            if r != col and bool(aug[r, col]):
                aug[r] = aug[r] - aug[r, col] * aug[col]
    return aug[:, n:]
