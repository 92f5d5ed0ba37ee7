"""Exception types shared across the package."""


class KPCalcError(Exception):
    """Base class for all errors raised by kpcalc."""


class ModeOverflow(KPCalcError):
    """A Fourier mode exceeded the configured hard cap."""


class TruncationBudget(KPCalcError):
    """The (h-order, symbol-floor) truncation is too shallow for the requested result."""


class NotInvertible(KPCalcError):
    pass


class NotAUnit(KPCalcError):
    pass


class ZeroSymbol(KPCalcError):
    pass


class OrderTooHigh(KPCalcError):
    pass


class NonzeroConstantTerm(KPCalcError):
    pass


class NonUnitConstantTerm(KPCalcError):
    pass


class JetNotTracked(KPCalcError):
    pass


class OrientationViolation(KPCalcError):
    pass


class NewtonDivergence(KPCalcError):
    pass


class IntegratorFailure(KPCalcError):
    pass


class ConfigError(KPCalcError):
    pass
