"""Exception hierarchy.

Errors split into two families that the CLI maps to exit codes:
``ValidationError`` (bad input, exit 2) and ``NumericalFailure``
(an estimate could not be produced reliably, exit 3).
"""


class CocycleError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(CocycleError, ValueError):
    pass


class NumericalFailure(CocycleError, ArithmeticError):
    pass


class DeadSymbol(ValidationError):
    pass


class InadmissibleWord(ValidationError):
    pass


class EnumerationOverflow(ValidationError):
    pass


class NotClose(ValidationError):
    pass


class InadmissibleWrap(ValidationError):
    pass


class ZeroSubspace(ValidationError):
    pass


class FullSpace(ValidationError):
    pass


class ZeroVector(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class InconsistentBlockStructure(NumericalFailure):
    pass


class SpectralGapTooSmall(NumericalFailure):
    pass


class DimensionMismatch(NumericalFailure):
    pass


class ModulusTie(NumericalFailure):
    pass


class NoAdmissibleOrbit(NumericalFailure):
    pass


class AllDirectionsCollapsed(NumericalFailure):
    pass


class StructureMismatch(NumericalFailure):
    pass
