"""Exception hierarchy shared across the toolkit.

Every error that crosses a module boundary derives from :class:`TalkitError`
so the CLI can map error classes onto stable exit codes.
"""

from __future__ import annotations


class TalkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(TalkitError):
    """A value violates a type invariant (bad segment, label out of range, ...)."""


class ParseError(TalkitError):
    """A file could not be parsed; carries the byte offset when known."""

    def __init__(self, message: str, *, path: str | None = None, offset: int | None = None):
        self.path = path
        self.offset = offset
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if offset is not None:
            detail = f"{detail} (byte offset {offset})"
        super().__init__(detail)


class GenerationError(TalkitError):
    """Synthetic data generation failed; carries the offending video index."""

    def __init__(self, message: str, *, video_index: int | None = None):
        self.video_index = video_index
        if video_index is not None:
            message = f"video {video_index}: {message}"
        super().__init__(message)


class ShapeError(TalkitError):
    """Tensor shape disagrees with the configuration it was built under."""


class DivergenceError(TalkitError):
    """Training produced non-finite values; carries where it happened."""

    def __init__(self, message: str, *, batch_index: int | None = None, stage: str | None = None):
        self.batch_index = batch_index
        self.stage = stage
        if batch_index is not None:
            message = f"{message} (batch item {batch_index})"
        if stage is not None:
            message = f"{stage}: {message}"
        super().__init__(message)


class BudgetError(TalkitError):
    """A fidelity configuration does not fit the memory budget."""


class ConfigError(TalkitError):
    """Experiment configuration file is missing, unreadable, or inconsistent."""
