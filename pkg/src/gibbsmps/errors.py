"""Exception types shared across the package."""

from __future__ import annotations


class NumericInputError(ValueError):
    """Raised when an array argument contains NaN or inf."""


class RoutingRequiredError(ValueError):
    """Raised when a two-site gate targets non-adjacent chain positions."""


class CapacityError(ValueError):
    """Raised when a dense or enumerative oracle is asked for too many sites."""


class OptimizerAbort(RuntimeError):
    """Raised when the objective returns a non-finite value mid-optimization."""


class PreparationFailedError(RuntimeError):
    """Raised when every restart of a multi-start preparation aborted."""

    def __init__(self, message: str, diagnostics: list | None = None) -> None:
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class ExtrapolationFailedError(RuntimeError):
    """Raised when neither the exponential nor the linear fit is solvable."""


class ConfigError(ValueError):
    """Malformed experiment configuration.

    ``line`` and ``field`` point at the offending entry when known.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None) -> None:
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.message = message
        self.line = line
        self.field = field


class DependencyError(RuntimeError):
    """Raised when a pipeline stage is missing the output of an earlier stage."""


class JoinError(ValueError):
    """Raised when result and reference grids cannot be aligned."""
