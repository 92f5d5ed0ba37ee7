"""First-order jets (dual numbers) over the coefficient ring.

A dual matrix ``A + eps T`` with ``eps**2 = 0`` is carried as the block
matrix ``[[A, T], [0, A]]``.  Block products reproduce the dual product
``AB + eps (A T_B + T_A B)``, and block inverses the dual inverse, so every
routine of the symbol calculus propagates derivatives unchanged when fed
lifted coefficients.
"""
from __future__ import annotations

import numpy as np

from .coeffring import MatTrigPoly, _pad_modes
from .hseries import HSeries
from .symbols import Symbol


def lift_array(value: np.ndarray, tangent: np.ndarray | None = None) -> np.ndarray:
    """``(..., d, d)`` value and tangent -> ``(..., 2d, 2d)`` block jets."""
    d = value.shape[-1]
    out = np.zeros(value.shape[:-2] + (2 * d, 2 * d), dtype=complex)
    out[..., :d, :d] = value
    out[..., d:, d:] = value
    if tangent is not None:
        out[..., :d, d:] = tangent
    return out


def lift_poly(value: MatTrigPoly, tangent: MatTrigPoly | None = None) -> MatTrigPoly:
    M = max(value.mode_cap, tangent.mode_cap if tangent is not None else 0)
    t = None if tangent is None else tangent.to_float().padded(M)
    return MatTrigPoly(lift_array(value.to_float().padded(M), t))


def lift_symbol(value: Symbol, tangent: Symbol | None = None) -> Symbol:
    if tangent is None:
        tangent = Symbol.zero(value.d, value.K)
    exact = value.exact and tangent.exact
    if exact:
        floor = min(value.floor, tangent.floor)
    else:
        floor = max(value.eff_floor, tangent.eff_floor)
    top = max(value.top, tangent.top, floor - 1)
    M = max(value.mode_cap, tangent.mode_cap)
    v = value.to_float().stack(floor, top, M)
    t = tangent.to_float().stack(floor, top, M)
    return Symbol(lift_array(v, t), top, floor, value.K, exact)


def _block(s: Symbol, part: str) -> Symbol:
    d = s.d // 2
    block = s.coeffs[..., :d, :d] if part == "value" else s.coeffs[..., :d, d:]
    return Symbol._normalized(np.ascontiguousarray(block), s.top, s.floor, s.K, s.exact)


def value_symbol(s: Symbol) -> Symbol:
    return _block(s, "value")


def tangent_symbol(s: Symbol) -> Symbol:
    return _block(s, "tangent")


def lift_hseries(value: HSeries, tangent: HSeries | None = None) -> HSeries:
    if tangent is None:
        return value.map(lift_symbol)
    return HSeries(tuple(lift_symbol(v, t) for v, t in zip(value.terms, tangent.terms)))


def value_hseries(a: HSeries) -> HSeries:
    return a.map(value_symbol)


def tangent_hseries(a: HSeries) -> HSeries:
    return a.map(tangent_symbol)


def unlift_poly(p: MatTrigPoly) -> tuple[MatTrigPoly, MatTrigPoly]:
    d = p.d // 2
    c = _pad_modes(p.coeffs, p.mode_cap)
    return MatTrigPoly(np.ascontiguousarray(c[:, :d, :d])), MatTrigPoly(np.ascontiguousarray(c[:, :d, d:]))
