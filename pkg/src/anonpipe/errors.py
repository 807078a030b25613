"""Exception hierarchy shared by all pipeline stages."""


class AnonpipeError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(AnonpipeError):
    """Vector or image dimensions do not match."""


class ConfigError(AnonpipeError):
    """Configuration document is invalid; message carries the field path."""


class MediaError(AnonpipeError):
    """Video file cannot be probed or decoded."""

    def __init__(self, message: str, frame_index: int | None = None):
        super().__init__(message)
        self.frame_index = frame_index


class ReassemblyError(AnonpipeError):
    """Scene outputs do not cover the source video, or dimensions mismatch."""


class PoseSolveError(AnonpipeError):
    """PnP solve diverged or the 2D configuration is degenerate."""


class NoFrontalFrameError(AnonpipeError):
    """No candidate frame meets the landmark-coverage requirement."""


class RetryExhaustedError(AnonpipeError):
    """Requested retry attempt exceeds the configured maximum."""


class BackendError(AnonpipeError):
    """Backend replied with status=error, or the transport failed."""


class BackendTimeout(BackendError):
    """Backend call did not complete within the configured timeout."""


class ProtocolError(AnonpipeError):
    """Backend reply violates the wire protocol (schema, request id echo)."""


class SceneError(AnonpipeError):
    """A per-scene stage failed; the scene degrades to passthrough."""


class MetricError(AnonpipeError):
    """Metric input is empty or inconsistent."""
