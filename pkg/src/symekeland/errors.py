"""Exception types shared across the package."""


class SymEkelandError(Exception):
    """Base class for all package errors."""


class EmptyClass(SymEkelandError):
    """No admissible half-space is compatible with the grid."""


class ClassViolation(SymEkelandError, ValueError):
    """A half-space is outside the admissible class for the domain."""


class DomainMismatch(SymEkelandError, ValueError):
    """Operation called on the wrong domain shape."""


class GridMismatch(SymEkelandError, ValueError):
    """Operation called on the wrong grid mode."""


class BudgetExhausted(SymEkelandError):
    """An iteration budget ran out before the stopping target was met."""


class NonFinite(SymEkelandError, FloatingPointError):
    """An integrand produced NaN or infinity."""


class GrowthParamError(SymEkelandError, ValueError):
    """Growth exponents or weights violate their admissibility constraints."""


class PolarAssumptionViolated(SymEkelandError):
    """A polarization strictly increased the functional beyond tolerance."""


class InfEstimateDrift(SymEkelandError):
    """An iterate undercut the infimum estimate by more than the current eps."""


class EmptyAdmissible(SymEkelandError):
    """Exhaustive Ekeland search found no admissible point."""


class ConfigError(SymEkelandError, ValueError):
    """Experiment configuration failed validation."""
