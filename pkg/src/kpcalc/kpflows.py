"""Dressed Lax operators and the h-deformed KP hierarchy.

``L0 = h S0 d S0^{-1}`` is evolved in closed form: the unit
``U = exp(sum_n tau_n L0^n)`` is factored as ``S^{-1} Y`` and ``L = Y L0 Y^{-1}``.
Here ``tau_n`` is the h-weighted time ``h^{w_n} t_n``; with the classical
weighting ``w_n = n`` the n-th exponent term sits at h-degree ``2n``.

Time derivatives are taken with respect to ``tau_n`` and are propagated as
first-order jets (see :mod:`kpcalc.jets`), one lifted solve per flagged time.
With this convention the Lax equations ``dL/dtau_n = [(L^n)_D, L]`` hold
identically in the truncated algebra.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import JetNotTracked
from .hseries import HFactorization, HSeries, birkhoff_factor, hexp, hinv, hmul, hpow
from .jets import lift_hseries, tangent_hseries
from .symbols import Symbol, compose, invert


@dataclass(frozen=True)
class TimeContext:
    """Active times and the jet flags.

    ``times[n]`` is either a real number or a tuple of h-coefficients
    ``(t_{n,0}, t_{n,1}, ...)``; ``weights[n]`` is the power of h attached to
    ``t_n`` (defaults to 0, i.e. ``tau_n = t_n``).
    """

    times: dict = field(default_factory=dict)
    jets: frozenset = frozenset()
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "times", {int(n): v for n, v in self.times.items()})
        object.__setattr__(self, "jets", frozenset(int(n) for n in self.jets))
        object.__setattr__(self, "weights", {int(n): int(w) for n, w in self.weights.items()})
        if any(n < 1 for n in self.times):
            raise ValueError("flow indices start at 1")

    def weight(self, n: int) -> int:
        return self.weights.get(n, 0)

    def h_coeffs(self, n: int) -> tuple:
        v = self.times.get(n, 0.0)
        return tuple(v) if isinstance(v, (tuple, list, np.ndarray)) else (v,)

    def with_jets(self, *ns: int) -> "TimeContext":
        return TimeContext(self.times, self.jets | frozenset(ns), self.weights)

    def to_json(self) -> dict:
        def enc(v):
            return [float(np.real(c)) for c in v] if isinstance(v, (tuple, list, np.ndarray)) else float(v)
        return {"times": {str(n): enc(v) for n, v in sorted(self.times.items())},
                "jets": sorted(self.jets),
                "weights": {str(n): w for n, w in sorted(self.weights.items())}}


def scale_times(classical: dict, h: float | None = None, jets=()) -> TimeContext:
    """Attach the weighting ``t_n -> h^n t_n``.

    With ``h=None`` the weights stay formal (``tau_n = h^n t_n`` inside the
    h-series); with a number they are applied numerically.
    """
    if h is None:
        return TimeContext(dict(classical), frozenset(jets), {n: n for n in classical})
    return TimeContext({n: t * h ** n for n, t in classical.items()}, frozenset(jets))


def unscale_times(tc: TimeContext, h: float | None = None) -> dict:
    """Inverse of :func:`scale_times` for the same ``h``."""
    if h is None:
        return dict(tc.times)
    return {n: t / h ** n for n, t in tc.times.items()}


def make_L0(S0: Symbol, N: int) -> HSeries:
    """``h S0 d S0^{-1}`` as an h-series truncated at ``h^N``."""
    P = compose(compose(S0, Symbol.d_power(1, S0.d, S0.K)), invert(S0))
    return HSeries.monomial(N, 1, P)


def hshift(a: HSeries, j: int) -> HSeries:
    """Multiply by ``h^j``."""
    zero = Symbol.zero(a.d, a.K)
    return HSeries(tuple(a[n - j] if n >= j else zero for n in range(a.N + 1)))


def scalar_series_mul(coeffs, a: HSeries) -> HSeries:
    """``(sum_j c_j h^j) * a`` for scalar h-coefficients ``c_j``."""
    out = None
    for j, c in enumerate(coeffs):
        if j > a.N or c == 0:
            continue
        term = hshift(a, j).scale(c)
        out = term if out is None else out + term
    return out if out is not None else HSeries.zero(a.N, a.d, a.K)


def exponent(L0: HSeries, t: TimeContext) -> HSeries:
    """``sum_n tau_n L0^n``."""
    total = HSeries.zero(L0.N, L0.d, L0.K)
    for n in sorted(t.times):
        if n + t.weight(n) > L0.N:
            continue
        total = total + scalar_series_mul(t.h_coeffs(n), hshift(hpow(L0, n), t.weight(n)))
    return total


def u_field(L0: HSeries, t: TimeContext) -> HSeries:
    return hexp(exponent(L0, t))


@dataclass(frozen=True, eq=False)
class FlowJet:
    """Derivatives with respect to one h-weighted time."""

    n: int
    dU: HSeries
    dS: HSeries
    dY: HSeries
    dL: HSeries


@dataclass(frozen=True, eq=False)
class KPSolution:
    L0: HSeries
    U: HSeries
    factorization: HFactorization
    L: HSeries
    times: TimeContext
    jets: dict = field(default_factory=dict)

    def jet(self, n: int) -> FlowJet:
        if n not in self.jets:
            raise JetNotTracked(f"time t_{n} was not flagged for jets")
        return self.jets[n]


def conjugate(g: HSeries, a: HSeries, g_inv: HSeries | None = None) -> HSeries:
    return hmul(hmul(g, a), hinv(g) if g_inv is None else g_inv)


def _jet_run(L0: HSeries, t: TimeContext, n: int) -> FlowJet:
    E = exponent(L0, t)
    E_jet = lift_hseries(E, hpow(L0, n))
    U_jet = hexp(E_jet)
    fac = birkhoff_factor(U_jet)
    L_jet = conjugate(fac.y_factor, lift_hseries(L0))
    return FlowJet(n, tangent_hseries(U_jet), tangent_hseries(fac.s_factor),
                   tangent_hseries(fac.y_factor), tangent_hseries(L_jet))


def solve_from_L0(L0: HSeries, t: TimeContext) -> KPSolution:
    U = u_field(L0, t)
    fac = birkhoff_factor(U)
    y = fac.y_factor
    trivial = all(s.exact and s.is_zero() for s in (y - HSeries.one(y.N, y.d, y.K)).terms)
    L = L0 if trivial else conjugate(y, L0)
    jets = {n: _jet_run(L0, t, n) for n in sorted(t.jets)}
    return KPSolution(L0, U, fac, L, t, jets)


def solve(S0: Symbol, t: TimeContext, N: int) -> KPSolution:
    """Dress ``L0`` by the differential Birkhoff factor of ``U``."""
    return solve_from_L0(make_L0(S0, N), t)


def bracket(a: HSeries, b: HSeries) -> HSeries:
    return hmul(a, b) - hmul(b, a)


@dataclass(frozen=True)
class LaxReport:
    flow: int
    residual: float
    residual_s_form: float
    bracket_agreement: float

    def to_json(self) -> dict:
        return {"flow": self.flow, "residual": self.residual,
                "residual_s_form": self.residual_s_form,
                "bracket_agreement": self.bracket_agreement}


def lax_residual(sol: KPSolution, n: int) -> LaxReport:
    """Compare ``dL/dtau_n`` with ``[(L^n)_D, L]`` and with ``-[(L^n)_S, L]``."""
    dL = sol.jet(n).dL
    Ln = hpow(sol.L, n)
    rhs_d = bracket(Ln.d_part(), sol.L)
    rhs_s = -bracket(Ln.s_part(), sol.L)
    return LaxReport(n, dL.diff_norm(rhs_d), dL.diff_norm(rhs_s), rhs_d.diff_norm(rhs_s))


@dataclass(frozen=True)
class IdentityReport:
    flow: int
    d_identity: float
    s_identity: float
    sum_identity: float

    def to_json(self) -> dict:
        return {"flow": self.flow, "d_identity": self.d_identity,
                "s_identity": self.s_identity, "sum_identity": self.sum_identity}


def proof_identities(sol: KPSolution, k: int) -> IdentityReport:
    """``(L^k)_D = dY Y^{-1}``, ``(L^k)_S = -dW W^{-1}`` with ``W`` the S-factor."""
    jet = sol.jet(k)
    Lk = hpow(sol.L, k)
    dY_Yinv = hmul(jet.dY, hinv(sol.factorization.y_factor))
    dW_Winv = hmul(jet.dS, hinv(sol.factorization.s_factor))
    return IdentityReport(
        k,
        Lk.d_part().diff_norm(dY_Yinv),
        Lk.s_part().diff_norm(-dW_Winv),
        Lk.diff_norm(dY_Yinv - dW_Winv),
    )


def finite_difference_dL(L0: HSeries, t: TimeContext, n: int, step: float = 1e-5) -> HSeries:
    """Central difference of ``L`` in the h-weighted time ``tau_n``."""
    base = exponent(L0, t)
    direction = hpow(L0, n)
    out = []
    for sgn in (1, -1):
        U = hexp(base + direction.scale(sgn * step))
        out.append(conjugate(birkhoff_factor(U).y_factor, L0))
    return (out[0] - out[1]).scale(1 / (2 * step))
