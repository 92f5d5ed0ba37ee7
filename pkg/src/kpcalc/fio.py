"""Circle diffeomorphisms, the semidirect product with the loop group, and
operators twisted by a phase ``f -> B(f o g)``.

Everything nonlinear (composition with a diffeomorphism) is evaluated on a
``4M+1`` point grid and refit to Fourier modes ``|k| <= M``; the discarded
tail is reported as the refit residual and anything above ``REFIT_TOL``
is an error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import coeffring as cr
from .coeffring import MatTrigPoly, eval_at, grid
from .errors import (IntegratorFailure, NewtonDivergence, NotAUnit, NotInvertible,
                     OrientationViolation, TruncationBudget)
from .hseries import HSeries, birkhoff_factor, hexp
from .symbols import Symbol, apply_to_function, compose, multiplier, split_DS

REFIT_TOL = 1e-6


def refit(values: np.ndarray, M: int) -> tuple[MatTrigPoly, float]:
    """Modes ``|k| <= M`` of grid samples ``(G, d, d)``, plus the discarded tail."""
    G = values.shape[0]
    hat = np.fft.fft(values, axis=0) / G
    keep = np.arange(-M, M + 1) % G
    mask = np.ones(G, dtype=bool)
    mask[keep] = False
    residual = float(np.abs(hat[mask]).sum(axis=0).max()) if mask.any() else 0.0
    return MatTrigPoly(hat[keep]), residual


def _check_residual(residual: float, what: str) -> None:
    if residual > REFIT_TOL:
        raise TruncationBudget(f"{what}: refit residual {residual:.2e} exceeds {REFIT_TOL:g}; raise the mode cap")


def _real_part(p: MatTrigPoly) -> MatTrigPoly:
    c = p.to_float().coeffs
    return MatTrigPoly(0.5 * (c + np.conj(c[::-1])), real=True)


class Diffeo:
    """``g(x) = x + p(x)`` on the circle with ``1 + p' > 0``."""

    __slots__ = ("p", "refit_residual")

    def __init__(self, p: MatTrigPoly | float | None = None, refit_residual: float = 0.0):
        if p is None:
            p = 0.0
        if not isinstance(p, MatTrigPoly):
            p = MatTrigPoly.constant(np.array([[float(p)]]))
        if p.d != 1:
            raise ValueError("a diffeomorphism perturbation is scalar")
        xs = grid(max(4 * p.mode_cap + 1, 64))
        vals = eval_at(p, xs)[:, 0, 0]
        if np.abs(vals.imag).max() > 1e-12 * max(1.0, np.abs(vals).max()):
            raise ValueError("perturbation must be real valued")
        slope = 1 + eval_at(p.derivative(), xs)[:, 0, 0].real
        if slope.min() <= 0:
            raise OrientationViolation(f"g' reaches {slope.min():.3e} <= 0")
        self.p = _real_part(p)
        self.refit_residual = float(refit_residual)

    @classmethod
    def identity(cls) -> "Diffeo":
        return cls(0.0)

    @classmethod
    def rotation(cls, theta: float) -> "Diffeo":
        return cls(theta)

    @property
    def mode_cap(self) -> int:
        return self.p.mode_cap

    def perturbation(self, x) -> np.ndarray:
        return eval_at(self.p, x)[..., 0, 0].real

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) + self.perturbation(x)

    def slope(self, x) -> np.ndarray:
        return 1 + eval_at(self.p.derivative(), x)[..., 0, 0].real

    def allclose(self, other: "Diffeo", atol: float = 1e-12) -> bool:
        xs = grid(4 * max(self.mode_cap, other.mode_cap, 4) + 1)
        diff = np.angle(np.exp(1j * (self.perturbation(xs) - other.perturbation(xs))))
        return bool(np.abs(diff).max() <= atol)

    def to_json(self) -> dict:
        return {"perturbation": self.p.to_json(), "refit_residual": self.refit_residual}

    def __repr__(self) -> str:
        return f"Diffeo(M={self.mode_cap}, residual={self.refit_residual:.1e})"


def _default_cap(*caps: int) -> int:
    """Refit cap for a composition; smooth small perturbations decay well inside it."""
    return min(cr.MODE_MAX, max(16, 2 * sum(caps), 12 * min(caps)))


def diffeo_compose(g1: Diffeo, g2: Diffeo, M: int | None = None) -> Diffeo:
    """``g1 o g2``."""
    M = _default_cap(g1.mode_cap, g2.mode_cap) if M is None else M
    xs = grid(4 * M + 1)
    vals = g2.perturbation(xs) + g1.perturbation(g2(xs))
    p, res = refit(vals[:, None, None].astype(complex), M)
    _check_residual(res, "diffeo_compose")
    return Diffeo(p, res + g1.refit_residual + g2.refit_residual)


def diffeo_invert(g: Diffeo, M: int | None = None, tol: float = 1e-14, maxiter: int = 100) -> Diffeo:
    """Solve ``x + p(x) = y`` on the grid by safeguarded Newton, then refit ``x - y``."""
    M = _default_cap(g.mode_cap) if M is None else M
    ys = grid(4 * M + 1)
    bound = float(np.abs(g.p.coeffs).sum())
    lo, hi = ys - bound - 1e-12, ys + bound + 1e-12
    x = ys - g.perturbation(ys)
    for _ in range(maxiter):
        f = g(x) - ys
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        step = f / g.slope(x)
        x_new = x - step
        outside = (x_new <= lo) | (x_new >= hi)
        x_new = np.where(outside, 0.5 * (lo + hi), x_new)
        if np.abs(x_new - x).max() < tol:
            x = x_new
            break
        x = x_new
    else:
        raise NewtonDivergence(f"inverse did not converge in {maxiter} iterations")
    p, res = refit((x - ys)[:, None, None].astype(complex), M)
    _check_residual(res, "diffeo_invert")
    return Diffeo(p, res + g.refit_residual)


def pullback(f: MatTrigPoly, g: Diffeo, M: int | None = None,
             M_max: int = cr.MODE_MAX) -> tuple[MatTrigPoly, float]:
    """``f o g`` refit to ``|k| <= M``.

    Without an explicit ``M`` the cap grows from ``f``'s own cap until the
    refit residual is at round-off level or ``M_max`` is reached.
    """
    if M is not None:
        xs = grid(4 * M + 1)
        return refit(eval_at(f, g(xs)), M)
    M = min(f.mode_cap + 4, M_max)
    while True:
        out, res = pullback(f, g, M)
        if res <= 1e-14 * max(f.max_abs(), 1.0) or M >= M_max:
            return MatTrigPoly(cr.trim_modes(out.coeffs, M_max)), res
        M = min(2 * M, M_max)


@dataclass(frozen=True, eq=False)
class SemidirectElem:
    """``(mult, phase)`` acting by ``f -> mult * (f o phase)``."""

    mult: MatTrigPoly
    phase: Diffeo = field(default_factory=Diffeo.identity)
    refit_residual: float = 0.0

    def __post_init__(self):
        M = max(self.mult.mode_cap, 4)
        dets = np.abs(np.linalg.det(eval_at(self.mult, grid(4 * M + 1))))
        if dets.min() < 1e-8:
            raise NotInvertible(f"multiplier determinant {dets.min():.3e} on the grid")

    @property
    def d(self) -> int:
        return self.mult.d

    def apply(self, f: MatTrigPoly, M: int | None = None) -> MatTrigPoly:
        pulled, res = pullback(f, self.phase, M, cr.MODE_MAX - self.mult.mode_cap)
        _check_residual(res, "SemidirectElem.apply")
        return cr.mul(self.mult, pulled)

    def __mul__(self, other: "SemidirectElem") -> "SemidirectElem":
        """``(M1, g1)(M2, g2) = (M1 * (M2 o g1), g2 o g1)``."""
        m2, res = pullback(other.mult, self.phase, None, cr.MODE_MAX - self.mult.mode_cap)
        _check_residual(res, "semidirect product")
        return SemidirectElem(cr.mul(self.mult, m2), diffeo_compose(other.phase, self.phase),
                              self.refit_residual + other.refit_residual + res)

    def to_fio(self, K: int = 6) -> "FioOp":
        return FioOp(Symbol.mult(self.mult, K), self.phase)


@dataclass(frozen=True, eq=False)
class FioOp:
    """``f -> B(f o g)``."""

    op: Symbol
    phase: Diffeo = field(default_factory=Diffeo.identity)


def fio_apply(A: FioOp, f: MatTrigPoly, M: int | None = None) -> MatTrigPoly:
    pulled, res = pullback(f, A.phase, M)
    _check_residual(res, "fio_apply")
    return apply_to_function(A.op, pulled)


@dataclass(frozen=True, eq=False)
class SYFactorization:
    """``A = S o Y`` with ``S - 1`` of order <= -1 and ``Y`` in the semidirect product."""

    S: Symbol
    Y: SemidirectElem

    def recompose(self) -> FioOp:
        return sy_recompose(self.S, self.Y)


def sy_factor(A: FioOp) -> SYFactorization:
    B = A.op
    if B.order() != 0:
        raise NotAUnit(f"operator part must have order 0, got {B.order()}")
    g0 = B[0]
    try:
        g0_inv = g0.inverse()
    except NotInvertible as exc:
        raise NotAUnit(str(exc)) from exc
    one = Symbol.identity(B.d, B.K, B.exact_coeffs)
    rest = B - Symbol.mult(g0, B.K)
    if g0 == MatTrigPoly.identity(B.d, g0.exact):
        S = one + rest
    else:
        S = one + compose(rest, Symbol.mult(g0_inv, B.K))
    return SYFactorization(S, SemidirectElem(g0, A.phase))


def sy_recompose(S: Symbol, Y: SemidirectElem) -> FioOp:
    """``S o (mult, g)`` with the order-0 coefficient kept bitwise equal to ``mult``."""
    m = Symbol.mult(Y.mult, S.K)
    rest = S - Symbol.identity(S.d, S.K, S.exact_coeffs)
    return FioOp(m + compose(rest, m), Y.phase)


# -- exponential of a constant path ---------------------------------------

def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _scalar_field(v) -> MatTrigPoly:
    if not isinstance(v, MatTrigPoly):
        v = MatTrigPoly.constant(np.array([[float(v)]]))
    if v.d != 1:
        raise ValueError("the vector field is scalar")
    return _real_part(v)


def sd_exp(w: MatTrigPoly, v, t: float, steps: int = 200, M: int = 8) -> SemidirectElem:
    """Exponential of the constant element ``w + v d`` at time ``t``.

    The phase is the flow of ``v``.  The multiplier solves
    ``dM/dt = v M_x + w M`` along characteristics: starting from ``Phi_t(x)``
    and following ``-v`` back to ``x`` while integrating ``dM/ds = w M``.
    """
    v = _scalar_field(v)
    d = w.d
    xs = grid(4 * M + 1)
    h = t / steps if steps else 0.0

    def vel(x):
        return eval_at(v, x)[..., 0, 0].real

    X = xs.copy()
    for _ in range(steps):
        X = _rk4(vel, X, h)
    if not np.all(np.isfinite(X)):
        raise IntegratorFailure("flow integration produced non-finite values")
    phase_p, res_p = refit((X - xs)[:, None, None].astype(complex), M)
    _check_residual(res_p, "sd_exp phase")

    G = xs.size
    state = np.zeros((G, 1 + d * d), dtype=complex)
    state[:, 0] = X
    state[:, 1:] = np.broadcast_to(np.eye(d).reshape(-1), (G, d * d))

    def rhs(y):
        x = y[:, 0].real
        m = y[:, 1:].reshape(G, d, d)
        out = np.empty_like(y)
        out[:, 0] = -vel(x)
        out[:, 1:] = (eval_at(w, x) @ m).reshape(G, d * d)
        return out

    for _ in range(steps):
        state = _rk4(rhs, state, h)
    if not np.all(np.isfinite(state)):
        raise IntegratorFailure("transport integration produced non-finite values")
    mult, res_m = refit(state[:, 1:].reshape(G, d, d), M)
    _check_residual(res_m, "sd_exp multiplier")
    if w.real and mult._check_real():
        mult = MatTrigPoly(mult.coeffs, real=True)
    return SemidirectElem(mult, Diffeo(phase_p, res_p), res_p + res_m)


def log_derivative_residual(w: MatTrigPoly, v, t: float, steps: int = 200, M: int = 8,
                            delta: float = 1e-3) -> float:
    """Finite-difference ``dE/dt E^{-1}`` of ``E = sd_exp(w, v, .)`` at ``t`` versus ``w + v d``.

    With ``E f = M (f o g)`` one has ``dE/dt E^{-1} = (M_t - u M_x) M^{-1} + u d``
    where ``u = g_t / g_x``.
    """
    v = _scalar_field(v)
    xs = grid(4 * M + 1)
    plus = sd_exp(w, v, t + delta, steps, M)
    minus = sd_exp(w, v, t - delta, steps, M)
    mid = sd_exp(w, v, t, steps, M)
    g_t = (plus.phase(xs) - minus.phase(xs)) / (2 * delta)
    # the phase perturbation is continuous in t, so no 2*pi jumps appear in the difference
    u = g_t / mid.phase.slope(xs)
    M_t = (eval_at(plus.mult, xs) - eval_at(minus.mult, xs)) / (2 * delta)
    M_x = eval_at(mid.mult.derivative(), xs)
    w_hat = (M_t - u[:, None, None] * M_x) @ np.linalg.inv(eval_at(mid.mult, xs))
    v_res = np.abs(u - eval_at(v, xs)[:, 0, 0].real).max()
    w_res = np.abs(w_hat - eval_at(w, xs)).max()
    return float(max(v_res, w_res))


# -- spectral matrices -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralMatrix:
    """Dense matrix on ``{exp(ikx) e_j : |k| <= M}``, index ``(k + M) d + j``."""

    matrix: np.ndarray
    M: int
    d: int
    leakage: float = 0.0

    def apply(self, f: MatTrigPoly) -> MatTrigPoly:
        """Act on each column of ``f`` (modes beyond ``M`` are dropped)."""
        F = f.to_float().padded(self.M).reshape((2 * self.M + 1) * self.d, self.d)
        out = (self.matrix @ F).reshape(2 * self.M + 1, self.d, self.d)
        return MatTrigPoly(out)

    def __matmul__(self, other: "SpectralMatrix") -> "SpectralMatrix":
        return SpectralMatrix(self.matrix @ other.matrix, self.M, self.d, self.leakage + other.leakage)

    def interior(self, M_in: int) -> np.ndarray:
        """Sub-block on modes ``|k| <= M_in``."""
        lo = (self.M - M_in) * self.d
        hi = (self.M + M_in + 1) * self.d
        return self.matrix[lo:hi, lo:hi]


def _symbol_matrix(op: Symbol, Mr: int, Mc: int) -> tuple[np.ndarray, float]:
    d = op.d
    kr = np.arange(-Mr, Mr + 1)
    kc = np.arange(-Mc, Mc + 1)
    out = np.zeros((kr.size, d, kc.size, d), dtype=complex)
    leak = np.zeros(kc.size)
    f = op.to_float()
    for n in f.orders():
        g = f[n]
        C = g.mode_cap
        coeffs = g.coeffs
        diff = kr[:, None] - kc[None, :]
        inside = np.abs(diff) <= C
        blocks = np.zeros(diff.shape + (d, d), dtype=complex)
        blocks[inside] = coeffs[diff[inside] + C]
        mult = multiplier(n, kc)
        out += np.einsum("rcij,c->ricj", blocks, mult)
        # mass of the product that lands outside the row cap
        total = np.abs(coeffs).sum(axis=(0, 1, 2))
        kept = np.abs(blocks).sum(axis=(0, 2, 3))
        leak += np.abs(mult) * np.maximum(total - kept, 0.0)
    return out.reshape(kr.size * d, kc.size * d), float(leak.max(initial=0.0))


def _semidirect_matrix(mult: MatTrigPoly, phase: Diffeo, Mr: int, Mc: int) -> tuple[np.ndarray, float]:
    d = mult.d
    G = 4 * (Mr + Mc + phase.mode_cap + mult.mode_cap) + 1
    xs = grid(G)
    kc = np.arange(-Mc, Mc + 1)
    E = np.exp(1j * np.multiply.outer(phase(xs), kc))           # (G, nc)
    vals = np.einsum("xij,xc->xicj", eval_at(mult, xs), E)     # (G, d, nc, d)
    hat = np.fft.fft(vals, axis=0) / G
    keep = np.arange(-Mr, Mr + 1) % G
    mask = np.ones(G, dtype=bool)
    mask[keep] = False
    leak = float(np.abs(hat[mask]).sum(axis=(0, 1)).max())
    return hat[keep].reshape((2 * Mr + 1) * d, kc.size * d), leak


def spectral_matrix(op, M: int) -> SpectralMatrix:
    if isinstance(op, Symbol):
        mat, leak = _symbol_matrix(op, M, M)
        return SpectralMatrix(mat, M, op.d, leak)
    if isinstance(op, SemidirectElem):
        mat, leak = _semidirect_matrix(op.mult, op.phase, M, M)
        return SpectralMatrix(mat, M, op.d, leak)
    if isinstance(op, FioOp):
        wide = 2 * M + 4 * op.phase.mode_cap
        pull, leak_p = _semidirect_matrix(MatTrigPoly.identity(op.op.d), op.phase, wide, M)
        sym, leak_s = _symbol_matrix(op.op, M, wide)
        return SpectralMatrix(sym @ pull, M, op.op.d, leak_p + leak_s)
    raise TypeError(f"no spectral matrix for {type(op).__name__}")


# -- the exponential-path factorization at operator level --------------------

@dataclass(frozen=True)
class Prop4Report:
    """``defect`` is measured on the interior modes ``|k| <= M/2``; truncating
    products at the cap only disturbs the edge modes, which ``full_defect``
    includes."""

    defect: float
    full_defect: float
    t: float
    steps: int
    M: int
    leakage: float
    s_deviation: float

    def to_json(self) -> dict:
        return {"defect": self.defect, "full_defect": self.full_defect, "t": self.t, "steps": self.steps, "M": self.M,
                "leakage": self.leakage, "s_deviation": self.s_deviation}


@dataclass(frozen=True, eq=False)
class Prop4Path:
    times: np.ndarray
    S: list
    Y: list
    W: list
    report: Prop4Report


def _split_first_order(L: Symbol) -> tuple[MatTrigPoly, MatTrigPoly, Symbol]:
    if L.order() is not None and L.order() > 1:
        raise ValueError(f"expected order <= 1, got {L.order()}")
    parts = split_DS(L)
    D, Spart = parts.d_part, parts.s_part
    d = L.d
    v_mat = D[1] if D.top >= 1 else MatTrigPoly.zero(d)
    vc = v_mat.to_float().coeffs
    v_scalar = vc[:, 0, 0]
    if np.abs(vc - v_scalar[:, None, None] * np.eye(d)).max() > 1e-14:
        raise ValueError("the first-order coefficient must be a scalar multiple of the identity")
    v = MatTrigPoly(v_scalar[:, None, None])
    w = D[0] if D.top >= 0 else MatTrigPoly.zero(d)
    return w, v, Spart


def prop4_path(L: Symbol, t: float, M: int = 8, steps: int = 32, sd_steps: int = 200) -> Prop4Path:
    """Build ``Y(t) = exp(L_D)``, solve ``S' = S Ad_{Y}(L_S)``, and test ``W = S Y`` against ``W' = W L``.

    The defect is the integral form ``|W(t_j) - 1 - int_0^{t_j} W L|`` at even
    nodes, with Simpson quadrature, taken entrywise on the interior block.
    """
    if steps % 2:
        raise ValueError("steps must be even")
    w, v, L_S = _split_first_order(L)
    Lmat = spectral_matrix(L, M).matrix
    LSmat = spectral_matrix(L_S, M).matrix
    dt = t / steps
    half = [k * dt / 2 for k in range(2 * steps + 1)]
    Ys, leak = [], 0.0
    for tau in half:
        n = max(4, math.ceil(sd_steps * abs(tau) / max(abs(t), 1e-300))) if tau else 0
        sm = spectral_matrix(sd_exp(w, v, tau, n, M), M)
        leak = max(leak, sm.leakage)
        Ys.append(sm.matrix)
    Ad = [Y @ LSmat @ np.linalg.inv(Y) for Y in Ys]
    I = np.eye(Lmat.shape[0], dtype=complex)
    S = [I]
    for j in range(steps):
        s = S[-1]
        k1 = s @ Ad[2 * j]
        k2 = (s + 0.5 * dt * k1) @ Ad[2 * j + 1]
        k3 = (s + 0.5 * dt * k2) @ Ad[2 * j + 1]
        k4 = (s + dt * k3) @ Ad[2 * j + 2]
        S.append(s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    if not all(np.all(np.isfinite(s)) for s in S):
        raise IntegratorFailure("S-path integration produced non-finite values")
    Yn = Ys[::2]
    W = [s @ y for s, y in zip(S, Yn)]
    WL = [x @ Lmat for x in W]
    d = L.d
    inner = slice((M - M // 2) * d, (M + M // 2 + 1) * d)
    defect = full = 0.0
    integral = np.zeros_like(I)
    for j in range(0, steps, 2):
        integral = integral + dt / 3 * (WL[j] + 4 * WL[j + 1] + WL[j + 2])
        gap = np.abs(W[j + 2] - I - integral)
        defect = max(defect, float(gap[inner, inner].max()))
        full = max(full, float(gap.max()))
    s_dev = max(float(np.abs(s - I).max()) for s in S)
    report = Prop4Report(defect, full, t, steps, M, leak, s_dev)
    return Prop4Path(np.array([k * dt for k in range(steps + 1)]), S, Yn, W, report)


def prop4_check(L: Symbol, t: float, M: int = 8, steps: int = 32, sd_steps: int = 200) -> Prop4Report:
    return prop4_path(L, t, M, steps, sd_steps).report


def prop4_convergence(L: Symbol, t: float, M: int = 8, steps=(4, 8, 16), sd_steps: int = 200) -> dict:
    """Defects under step halving and the observed rates ``log2(e_n / e_2n)``."""
    defects = [prop4_check(L, t, M, n, sd_steps).defect for n in steps]
    orders = [math.log2(a / b) if b > 0 and a > 0 else float("inf") for a, b in zip(defects, defects[1:])]
    return {"steps": list(steps), "defects": defects, "orders": orders}


# -- the same identity inside the truncated h-algebra -------------------------

def naive_clh_defect(L: Symbol, t: float, N: int = 4) -> list[float]:
    """Per h-degree gap between the differential factor of ``exp(t h L)`` and ``exp(t (h L)_D)``.

    Conjugation by ``exp(t h L_D)`` keeps orders <= -1, so the gap vanishes
    on every order the truncation determines.
    """
    hL = HSeries.monomial(N, 1, L).scale(t)
    Y = birkhoff_factor(hexp(hL)).y_factor
    naive = hexp(hL.d_part())
    return [Y[n].diff_norm(naive[n]) for n in range(N + 1)]
