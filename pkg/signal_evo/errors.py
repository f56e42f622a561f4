"""Exceptions raised by signal_evo.

Each class also derives from the builtin a caller would naturally catch,
so ``except ValueError`` around configuration loading or ``except
LookupError`` around store queries keeps working.
"""
from __future__ import annotations

from typing import Optional


class SignalEvoError(Exception):
    """Base class for all package errors."""


class ConfigError(SignalEvoError, ValueError):
    """Invalid scenario, network, bank or command configuration."""


class SkillSyntaxError(SignalEvoError, SyntaxError):
    """Skill code that does not conform to the skill grammar."""

    def __init__(self, message: str, lineno: Optional[int] = None, offset: Optional[int] = None):
        super().__init__(message)
        self.msg = message
        self.lineno = lineno
        self.offset = offset

    def __str__(self) -> str:
        if self.lineno is None:
            return self.msg
        return f"{self.msg} (line {self.lineno}, column {self.offset or 0})"


class EvalError(SignalEvoError, ArithmeticError):
    """Runtime fault while evaluating skill code."""


class EpisodeFailure(SignalEvoError, RuntimeError):
    """An episode aborted because its controller faulted."""


class MissingMetric(SignalEvoError, LookupError):
    """A fitness needs an event metric the episode did not produce."""


class GeneratorUnavailable(SignalEvoError, RuntimeError):
    """The skill generator could not be reached after bounded retries."""


class StorageError(SignalEvoError, RuntimeError):
    """Reading or writing the asset store failed."""


class UnknownId(SignalEvoError, LookupError):
    """No skill with the requested id exists in the store."""


class UnknownRun(SignalEvoError, LookupError):
    """The directory does not hold a run's store files."""


class NotAnImprovement(SignalEvoError, ValueError):
    """A capsule was requested for a fitness that does not beat the record."""


__all__ = [
    "SignalEvoError",
    "ConfigError",
    "SkillSyntaxError",
    "EvalError",
    "EpisodeFailure",
    "MissingMetric",
    "GeneratorUnavailable",
    "StorageError",
    "UnknownId",
    "UnknownRun",
    "NotAnImprovement",
]
