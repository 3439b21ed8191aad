"""Error types shared across the package.

Validation helpers report the first problem they find as a `Violation` value
instead of raising, so streaming callers can attach their own context (line
numbers, group ids) before deciding what to do with a bad record. Hard misuse
of an API raises `InvalidInput` carrying the same structured record, which
keeps error payloads identical no matter which layer caught the problem.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Violation:
    """First constraint a record failed, with the offending field named."""

    code: str
    field: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code} at {self.field}: {self.detail}"


class ShapingError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(ShapingError):
    """An operation was handed data that fails its input contract."""

    def __init__(self, violation: Violation):
        super().__init__(str(violation))
        self.violation = violation


class ConfigError(ShapingError, ValueError):
    """A configuration value is out of range or of the wrong type."""


class UnknownSchedule(ConfigError):
    """Compensation schedule name is not one of the supported kinds."""


class UnknownKey(ConfigError):
    """A config file contains a key that maps to no known option."""


class ParseError(ShapingError):
    """A trace line is not a well-formed record."""


class SchemaVersionUnsupported(ParseError):
    """The record declares a schema version this reader does not speak."""
