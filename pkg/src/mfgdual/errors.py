"""Exception hierarchy shared by the solvers and the command line.

Each exception class carries the process exit code the CLI should return,
plus a machine-readable payload. The CLI writes that payload to an error
JSON file whenever a pipeline fails.
"""

from __future__ import annotations

from typing import Any

__all__ = [
    "MfgDualError",
    "ConfigError",
    "DomainError",
    "ResolutionError",
    "NonConvergenceError",
    "InfeasibleError",
    "NumericalFailure",
    "RootFindError",
    "DegeneracyError",
    "SchemeError",
    "OracleError",
]


class MfgDualError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    kind = "error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "type": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            "details": _jsonable(self.details),
        }


class ConfigError(MfgDualError, ValueError):
    """Invalid configuration or inputs (bad grid, CFL violation, unknown names)."""

    exit_code = 2
    kind = "config"


class DomainError(ConfigError):
    """Mass or support leaves the truncated spatial domain."""


class ResolutionError(ConfigError):
    """A requested scale is not resolvable on the grid."""


class NonConvergenceError(MfgDualError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    exit_code = 3
    kind = "non-convergence"

    def __init__(self, message: str, history: list[float] | None = None, **details: Any):
        super().__init__(message, **details)
        self.history = list(history or [])
        self.details["history"] = self.history


class InfeasibleError(MfgDualError):
    """A linear program was certified infeasible."""

    exit_code = 4
    kind = "infeasible"

    def __init__(self, message: str, witness: dict[str, Any] | None = None, **details: Any):
        super().__init__(message, **details)
        self.witness = dict(witness or {})
        self.details["witness"] = self.witness


class NumericalFailure(MfgDualError, ArithmeticError):
    """NaN, overflow or a broken numerical invariant."""

    exit_code = 5
    kind = "numerical-failure"


class RootFindError(NumericalFailure):
    """A scalar root bracket could not be established."""


class DegeneracyError(NumericalFailure):
    """A denominator that theory keeps away from zero became too small."""


class SchemeError(NumericalFailure):
    """A discrete scheme violated positivity or conservation."""


class OracleError(NumericalFailure):
    """The reference simplex oracle failed (cycling guard or size limit)."""


def _jsonable(obj: Any) -> Any:
    # numpy scalars and arrays show up in details; keep the payload strict JSON
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, float):
        if obj != obj:
            return None
        if obj in (float("inf"), float("-inf")):
            return "inf" if obj > 0 else "-inf"
    return obj
