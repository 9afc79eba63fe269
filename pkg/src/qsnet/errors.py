"""Exception hierarchy shared across the simulator."""


class QsnetError(Exception):
    """Base class for all simulator errors."""


class InvalidArgument(QsnetError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientData(QsnetError, ValueError):
    """Input series is too short for the requested estimate."""


class BandConflict(QsnetError, ValueError):
    """A frequency band overlaps an already registered band."""


class DuplicateNode(QsnetError, ValueError):
    """A node id is registered twice."""


class IllegalBand(QsnetError, ValueError):
    """Requested band is not registered with the center node."""


class InvalidSampleRate(QsnetError, ValueError):
    """Sample rate violates the Nyquist condition for the requested carrier."""


class SyncFailure(QsnetError, RuntimeError):
    """Frame synchronization peak is indistinguishable from sidelobes."""


class PhaseEstimateUnreliable(QsnetError, RuntimeError):
    """Pilot SNR too low for a trustworthy phase estimate."""


class AlignmentError(QsnetError, RuntimeError):
    """Transmit and receive sequences are not aligned."""


class BaselineRequired(QsnetError, ValueError):
    """Spectrum monitoring needs a vibration-free baseline first."""


class NoCommonEvent(QsnetError, RuntimeError):
    """Cross-correlation found no shared vibration event between traces."""


class LocalizationFailure(QsnetError, RuntimeError):
    """Source position solver did not converge to an acceptable residual."""


class GeometryError(QsnetError, ValueError):
    """Node geometry is degenerate (too few nodes or collinear)."""


class ScenarioError(QsnetError, ValueError):
    """Scenario file failed to parse or validate."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")


class IOErrorQsnet(QsnetError, OSError):
    """Report emission could not write its output."""
