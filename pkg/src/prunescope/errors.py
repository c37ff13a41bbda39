"""Exception hierarchy shared by every module.

All toolkit-specific failures derive from :class:`PrunescopeError` so callers
(and the CLI) can distinguish config mistakes, bad data, and numerical
breakdowns from plain bugs.
"""


class PrunescopeError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(PrunescopeError, ValueError):
    """Operands have incompatible lengths or shapes."""


class DegeneratePlaneError(PrunescopeError, ValueError):
    """Plane anchors are (numerically) collinear: no 2-D basis exists."""


class EmptySubspaceError(PrunescopeError, ValueError):
    """A mask has no active coordinates left to work in."""


class MaskExhaustedError(PrunescopeError, ValueError):
    """Too few active prunable coordinates remain to prune further."""


class NumericalFailureError(PrunescopeError, RuntimeError):
    """An iterative numerical procedure failed to converge or produced
    non-finite values. The message names the offending stage/node."""


class DivergenceError(PrunescopeError, RuntimeError):
    """Training loss blew up (non-finite or above the divergence cap)."""

    def __init__(self, message: str, step: int, level: int | None = None):
        super().__init__(message)
        self.step = step
        self.level = level


class DegenerateProfileError(PrunescopeError, RuntimeError):
    """Every direction of a radius profile was censored."""


class UndefinedCosineError(PrunescopeError, ValueError):
    """Cosine similarity requested against a zero vector."""


class DataParseError(PrunescopeError, ValueError):
    """Malformed dataset file. Carries the line number or byte offset."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"offset {offset}")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(message + suffix)
        self.line = line
        self.offset = offset


class LabelRangeError(PrunescopeError, ValueError):
    """A class label fell outside the declared [0, n_classes) range."""


class ConfigError(PrunescopeError, ValueError):
    """Invalid or unknown experiment configuration content."""


class CheckpointError(PrunescopeError, ValueError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version not supported by this build."""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint payload shorter than the header declares."""


class CheckpointChecksumError(CheckpointError):
    """Checkpoint payload bytes do not match the recorded CRC32."""


class ArtifactMissingError(PrunescopeError, FileNotFoundError):
    """A named pipeline artifact expected on disk is absent."""
