"""Exception hierarchy for the voice conversion toolkit."""

from typing import Iterable, Optional


class XVCError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(XVCError):
    """Invalid or mutually inconsistent configuration values."""


class ContractViolation(XVCError):
    """An operation was called with inputs that break its contract (shapes, dims)."""


class DecodeError(XVCError):
    """An audio file could not be read or decoded."""


class EmptyInputError(XVCError):
    """Zero-length audio or an empty sequence where content is required."""


class EmptyFeaturesError(XVCError):
    """A feature matrix with no frames."""


class InsufficientFramesError(XVCError):
    """Too few frames for a per-utterance statistic."""


class InsufficientDataError(XVCError):
    """Not enough frames, utterances or speakers for the requested operation."""


class AdapterError(XVCError):
    """An external model backend is missing or failed.

    Args:
        message: What went wrong
        hint: How to fix it (install command, config key, ...)
    """

    def __init__(self, message: str, hint: Optional[str] = None):
        self.hint = hint
        if hint:
            message = f"{message} (hint: {hint})"
        super().__init__(message)


class IncompatibleCheckpointError(XVCError):
    """A checkpoint whose configuration does not match the requested model."""


class UndefinedRateError(XVCError):
    """An error rate was requested against an empty reference."""


class UndefinedSimilarityError(XVCError):
    """Cosine similarity with a zero-norm embedding."""


class AlignmentError(XVCError):
    """Two manifests could not be paired by utterance id."""

    def __init__(self, orphans: Iterable[str]):
        self.orphans = sorted(orphans)
        super().__init__(f"Unaligned utterance ids: {', '.join(self.orphans)}")


class StageError(XVCError):
    """Wraps a failure inside one stage of the conversion pipeline."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
