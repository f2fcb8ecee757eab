"""Exception hierarchy shared by all wallforge modules."""

from __future__ import annotations


class WallforgeError(Exception):
    """Base class for every error raised by the package."""


class DomainError(WallforgeError, ValueError):
    """Non-finite or out-of-range numerical input."""


class InvalidParameterError(WallforgeError, ValueError):
    """Potential parameters violate an admissibility requirement."""


class UnsupportedError(WallforgeError):
    pass


class UsageError(WallforgeError, ValueError):
    pass


class AxiomViolation(WallforgeError):
    """Raised by ``check_W_axioms``; carries the full report and witness points."""

    def __init__(self, report):
        self.report = report
        lines = [f"{f.axiom}: {f.message} (witness {f.witness})" for f in report.failures]
        super().__init__("potential axioms violated:\n  " + "\n  ".join(lines))


class ConvergenceError(WallforgeError):
    def __init__(self, message: str, last_residual: float | None = None):
        self.last_residual = last_residual
        super().__init__(message)


class CrossingError(WallforgeError):
    pass


class LeftOrbitError(WallforgeError):
    pass


class NoPinningPointError(WallforgeError):
    pass


class DegeneratePotentialError(WallforgeError):
    pass


class MarginalSigmaError(WallforgeError):
    pass


class SpectralInconsistency(WallforgeError):
    pass


class ConfigError(WallforgeError):
    """Bad configuration; ``path`` is the dotted field path, ``line``/``column`` locate parse errors."""

    def __init__(self, message: str, path: str = "", line: int | None = None, column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if path:
            where.append(f"field {path}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
