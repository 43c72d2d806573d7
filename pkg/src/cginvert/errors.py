"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class CgInvertError(Exception):
    """Base class for all package errors."""


class ConfigError(CgInvertError):
    """Bad or missing configuration (unknown keys, invalid values)."""


class DataError(CgInvertError):
    """Dataset problems: missing files, fingerprint mismatch, bad shapes."""


class NumericalError(CgInvertError):
    """Numerical failure in a solver or training run."""


class DomainError(NumericalError):
    """An argument lies outside the domain of a regularizer."""


class LinesearchFailure(NumericalError):
    """Backtracking exhausted its halvings without sufficient decrease."""


class DivergenceError(NumericalError):
    """Iterates made the objective grow persistently (bad step size)."""


class NonMonotoneCostError(NumericalError):
    """Block-coordinate cost increased beyond floating-point slack."""


class NanLossError(NumericalError):
    """Training loss became non-finite."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}
