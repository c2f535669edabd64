"""Exception types shared across the package."""


class PmnetError(Exception):
    """Base class for all package errors."""


class DimensionError(PmnetError, ValueError):
    """Shapes, index sets, or partitions do not line up."""


class DomainError(PmnetError, ValueError):
    """A value falls outside the declared variable domain."""


class SizeError(PmnetError, ValueError):
    """A guarded size cap would be exceeded."""


class ConfigError(PmnetError, ValueError):
    """Invalid solver, schedule, or pipeline configuration."""


class NumericError(PmnetError, ArithmeticError):
    """A numeric evaluation produced a non-finite result."""


class GeneratorError(PmnetError, ValueError):
    """A synthetic-data specification is infeasible."""


class ParseError(PmnetError, ValueError):
    """Malformed input file or partition specification."""
