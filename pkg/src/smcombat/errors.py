"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SmcError(Exception):
    exit_code = 1


class UsageError(SmcError):
    """Bad arguments, bad configuration, or a violated precondition."""

    exit_code = 2


class SpecificationError(UsageError):
    """A state, coefficient set, or file does not conform to its ModelSpec."""


class FormatError(SmcError):
    """Malformed input file (CSV header, ragged rows, non-uniform dt, ...)."""

    exit_code = 3


class NumericError(SmcError):
    exit_code = 4


class DegenerateMetricError(NumericError):
    """The diffusion covariance is singular at the evaluation point."""

    def __init__(self, unit, message=None):
        self.unit = unit
        super().__init__(message or f"degenerate metric: zero noise variance for unit {unit!r}")


class DegenerateDataError(NumericError):
    pass


class DomainError(NumericError, ValueError):
    pass
