"""Exception types shared across the harness."""

from __future__ import annotations


class SegPromptError(Exception):
    """Base class for all harness errors."""


class EmptyMaskError(SegPromptError):
    """An operation that needs foreground was given an all-background mask."""


class UnknownLabelError(SegPromptError):
    """A target label is not part of the dataset's declared label set."""


class DimensionMismatchError(SegPromptError):
    """Two rasters that must share dimensions do not."""


class InsufficientForegroundError(SegPromptError):
    """Fewer foreground pixels than the requested sample size."""

    def __init__(self, requested: int, available: int):
        super().__init__(f"requested {requested} foreground points, only {available} available")
        self.requested = requested
        self.available = available


class InsufficientBackgroundError(SegPromptError):
    """Fewer background pixels than the requested sample size."""

    def __init__(self, requested: int, available: int):
        super().__init__(f"requested {requested} background points, only {available} available")
        self.requested = requested
        self.available = available


class StrategyParseError(SegPromptError):
    """A strategy string does not follow the documented grammar."""


class ZeroBaselineError(SegPromptError):
    """Relative improvement is undefined for a zero baseline score."""


class EmptyListError(SegPromptError):
    """A summary statistic was requested for an empty collection."""


class ManifestError(SegPromptError):
    """Base class for dataset manifest problems."""


class ParseError(ManifestError):
    """A delimited text file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MissingFileError(ManifestError):
    """A file referenced by a manifest does not exist."""


class DuplicatePatchIdError(ManifestError):
    """Two manifest rows declare the same patch id."""


class DecodeError(SegPromptError):
    """A raster file could not be decoded into the expected layout."""


class TooFewPatientsError(SegPromptError):
    """Patient-wise splitting needs at least two distinct patients."""


class BackendError(SegPromptError):
    """Base class for segmenter backend failures."""


class BackendCrashedError(BackendError):
    """The external segmenter process died."""


class SpawnFailedError(BackendError):
    """The external segmenter process could not be started."""


class HandshakeMismatchError(BackendError):
    """The external segmenter spoke an unexpected protocol version."""


class ProtocolError(BackendError):
    """The external segmenter sent a malformed or out-of-order record."""


class TimeoutError_(BackendError):
    """The external segmenter did not answer within the configured duration."""

    def __init__(self, seconds: float):
        super().__init__(f"backend did not respond within {seconds:g}s")
        self.seconds = seconds


class RleLengthError(SegPromptError):
    """Run-length counts do not sum to the declared mask size."""


class ConfigError(SegPromptError):
    """An experiment configuration is invalid."""


class NoOkRecordsError(SegPromptError):
    """A reported strategy has no successful evaluation records."""

    def __init__(self, strategy: str):
        super().__init__(f"no ok records for strategy {strategy!r}")
        self.strategy = strategy


class MissingEffortScoreError(SegPromptError):
    """A strategy in the report has no effort score assigned."""
