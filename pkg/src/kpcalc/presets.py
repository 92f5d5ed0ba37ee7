"""Fixed inputs shared by the command line driver and the test suites."""
from __future__ import annotations

from dataclasses import dataclass

from .coeffring import MatTrigPoly
from .fio import Diffeo
from .symbols import Symbol, exp_neg


def trig_diffeo(amplitude: float, modes=((1, -0.5j), (2, 0.25))) -> Diffeo:
    """``x + amplitude * p(x)`` with ``p`` real, given by its positive modes."""
    data = {}
    for k, c in modes:
        data[k] = amplitude * c
        data[-k] = amplitude * complex(c).conjugate()
    return Diffeo(MatTrigPoly.from_modes(data))


def first_order_dressing(amplitude: float, K: int) -> Symbol:
    """``exp(alpha d^-1)`` with a small smooth ``alpha``."""
    alpha = MatTrigPoly.from_modes({0: amplitude, 1: amplitude / 2, -1: amplitude / 2})
    return exp_neg(Symbol.from_terms({-1: alpha}, K=K))


@dataclass(frozen=True)
class TaylorRegime:
    name: str
    N: int
    Ks: tuple
    amplitude_S0: float
    g: Diffeo
    f: MatTrigPoly
    x0: float

    def S0(self, K: int) -> Symbol:
        if self.amplitude_S0 == 0:
            return Symbol.identity(1, K)
        return first_order_dressing(self.amplitude_S0, K)


def taylor_regimes() -> dict[str, TaylorRegime]:
    # the dressed cases use high-frequency f: composition of d^-1 with a
    # multiplier is only asymptotic on modes inside the multiplier's band
    high = MatTrigPoly.from_modes({10: 1.0, -11: 0.5})
    low = MatTrigPoly.from_modes({1: 1.0, -1: 0.5, 2: 0.3, -3: 0.2j})
    return {
        "identity": TaylorRegime("identity", 6, (12,), 0.05, Diffeo.identity(), high, 0.7),
        "undressed": TaylorRegime("undressed", 6, (6,), 0.0, trig_diffeo(0.1), low, 0.7),
        "general": TaylorRegime("general", 4, (4, 5, 6, 7, 8), 0.1, trig_diffeo(0.05),
                                MatTrigPoly.from_modes({8: 1.0, -9: 0.5}), 0.7),
    }


def smooth_coefficient(amplitude: float = 0.3) -> MatTrigPoly:
    return MatTrigPoly.from_modes({0: amplitude, 1: amplitude / 2, -1: amplitude / 2, 2: 0.1j, -2: -0.1j})


def transport_operator(K: int = 4, amplitude: float = 0.3) -> Symbol:
    """``d + b d^-1`` with a smooth complex ``b``."""
    return Symbol.from_terms({1: 1.0, -1: smooth_coefficient(amplitude)}, K=K)


def random_dressing(rng, d: int = 1, K: int = 4, M: int = 2, scale: float = 0.3) -> Symbol:
    return exp_neg(Symbol.random(rng, -1, d=d, K=K, M=M, scale=scale))
