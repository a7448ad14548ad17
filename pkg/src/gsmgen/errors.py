"""Exception types shared across the package."""

from __future__ import annotations


class GsmgenError(Exception):
    """Base class for all package errors."""


class ConfigError(GsmgenError):
    """Invalid generation configuration (bad layer counts, vocabulary too small, ...)."""


class GenerationInfeasibleError(GsmgenError):
    """The attempt budget was exhausted without hitting the requested op count."""


class ResampleInfeasibleError(GsmgenError):
    """No alternative query parameter exists for reask."""


class UnknownParameterError(GsmgenError, KeyError):
    """A parameter id was looked up that the graph does not contain."""


class UnresolvedOperandError(GsmgenError):
    """A chain operand is missing from the evaluation environment."""


class ParseError(GsmgenError):
    """Candidate text does not match the closed grammar.

    `position` is the character offset of the first offending character.
    """

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at char {position})")
        self.position = position


class TokenizeError(GsmgenError):
    """Text contains material outside the closed vocabulary."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at char {offset})")
        self.offset = offset
