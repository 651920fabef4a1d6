"""Exception hierarchy shared by all cdnemu modules."""

from __future__ import annotations


class CdnEmuError(Exception):
    """Base class for every error raised by cdnemu."""


class InvalidConfigError(CdnEmuError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        codes = ", ".join(v.code for v in self.violations)
        super().__init__(f"invalid config: {codes}")


class ScenarioError(CdnEmuError, ValueError):
    """Scenario file could not be read or has unknown/mistyped fields."""


class UnknownLinkError(CdnEmuError, KeyError):
    pass


class UnknownServerError(CdnEmuError, KeyError):
    pass


class NotFoundError(CdnEmuError, KeyError):
    pass


class InvalidRateError(CdnEmuError, ValueError):
    pass


class EmptyCandidatesError(CdnEmuError, ValueError):
    pass


class EmptyFilenameError(CdnEmuError, ValueError):
    pass


class NoServersError(CdnEmuError, RuntimeError):
    pass


class InvalidBaseError(CdnEmuError, ValueError):
    pass


class TransportError(CdnEmuError, ConnectionError):
    """Request could not be delivered (host down, unknown, or timed out)."""


class ManifestUnreachableError(CdnEmuError, ConnectionError):
    pass


class ParseError(CdnEmuError, ValueError):
    """Malformed input; ``row``/``column`` are set when a location is known."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class EmptySeriesError(CdnEmuError, ValueError):
    pass


class UnknownColumnError(CdnEmuError, KeyError):
    pass


class InsufficientConfigsError(CdnEmuError, ValueError):
    pass


class PhaseError(CdnEmuError, RuntimeError):
    """A run_experiment phase failed; ``phase`` names it."""

    def __init__(self, phase: str, cause: BaseException):
        self.phase = phase
        self.cause = cause
        super().__init__(f"phase {phase!r} failed: {cause!r}")
