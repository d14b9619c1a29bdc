"""Exception hierarchy shared across the package.

Input-shaped problems (bad files, bad records, bad arguments) derive from
InputError; problems talking to a scoring backend derive from ScoringError.
The CLI maps InputError to exit code 2 and ScoringError to exit code 3.
"""

from __future__ import annotations


class DirDetectError(Exception):
    """Base class for all package errors."""


class InputError(DirDetectError):
    """Invalid user-supplied data or arguments."""


class ScoringError(DirDetectError):
    """Failure while obtaining token scores from a backend."""


# --- scoring -----------------------------------------------------------

class ScorerUnavailable(ScoringError):
    """Backend cannot serve the request (dead process, missing scores)."""


class ScorerError(ScoringError):
    """Backend answered with an error payload; message is propagated."""


class ProtocolViolation(ScoringError):
    """Backend sent a line that does not conform to the wire protocol."""


class InvalidScores(ScoringError):
    """Token log-probabilities violate softmax bounds (positive, NaN, inf)."""


class ConflictingDuplicate(InputError):
    """Score file contains the same key with different payloads."""


# --- parsing -----------------------------------------------------------

class ParseError(InputError):
    """Malformed record in a score file or corpus file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# --- detection ---------------------------------------------------------

class MismatchedPair(InputError):
    """The two score lists do not cover opposite directions of one pair."""


class EmptyDocument(InputError):
    """Document-level operation invoked with zero segments."""


# --- statistics --------------------------------------------------------

class NoItemsForDirection(InputError):
    """Accuracy requested for a gold direction with no evaluated items."""


class EmptyInput(InputError):
    """Statistic requested over an empty collection."""


class TooFewSegments(InputError):
    """Permutation test needs at least two segments."""


class TooManySegments(InputError):
    """Exhaustive permutation test refused; subset count would explode."""


# --- corpus ------------------------------------------------------------

class HeterogeneousDocument(InputError):
    """Segments under one doc id disagree on languages or gold direction."""


class DuplicateSegmentId(InputError):
    """Two corpus records share a pair id."""


class LineCountMismatch(InputError):
    """Aligned text files have different line counts."""

    def __init__(self, x_lines: int, y_lines: int):
        self.x_lines = x_lines
        self.y_lines = y_lines
        super().__init__(f"aligned files differ in length: {x_lines} vs {y_lines} lines")


class OneSidedEmptyLine(InputError):
    """A line is empty on exactly one side of an aligned file pair."""

    def __init__(self, line: int):
        self.line = line
        super().__init__(f"line {line}: empty on one side only")


# --- reporting ---------------------------------------------------------

class UnsupportedFormat(InputError):
    """Report serialization requested in an unknown format."""
