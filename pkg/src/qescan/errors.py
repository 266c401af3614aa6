"""Exception hierarchy shared across the station.

Every error a caller is expected to branch on gets its own class; the CLI
maps classes to exit codes via the ``category`` attribute.
"""


class QescanError(Exception):
    category = "error"


class ConfigError(QescanError):
    """Bad or inconsistent configuration / input file."""

    category = "usage"


class WavelengthRangeError(QescanError, ValueError):
    """Wavelength outside the range a component accepts."""

    category = "range"


class RangeError(QescanError, ValueError):
    """Value outside an instrument or geometry limit."""

    category = "range"


class ZeroPowerError(QescanError, ZeroDivisionError):
    """QE requested with no optical power on the device under test."""

    category = "data"


class InsufficientDataError(QescanError, ValueError):
    category = "data"


class UncoveredWavelengthError(QescanError, LookupError):
    """Wavelength falls in a gap of the calibration band table.

    ``nearest`` carries the closest band so callers can report how far off
    the request was.
    """

    category = "data"

    def __init__(self, message, nearest=None):
        super().__init__(message)
        self.nearest = nearest


class EncodeError(QescanError, ValueError):
    category = "protocol"


class ProtocolError(QescanError):
    """Malformed wire data; ``offset`` is the absolute byte position."""

    category = "protocol"

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class FrameTooLongError(ProtocolError):
    pass


class UnknownInstrumentError(QescanError, ValueError):
    category = "usage"


class PixelMappingError(QescanError, ValueError):
    category = "data"


class UnsafeOrderError(QescanError):
    """No order-sorting filter can block the second-order line at this
    wavelength; measuring would be contaminated by stray light."""

    category = "refused"


class SkewError(QescanError):
    """Paired power/current reads exceeded the simultaneity bound."""

    category = "data"


class OverRangeError(QescanError):
    """Picoammeter reported an over-range condition.

    ``partial`` may carry data collected before the fault.
    """

    category = "range"

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class CalibrationError(QescanError):
    category = "data"


class ConsistencyError(QescanError):
    """Records and geometry disagree (e.g. map records vs. scan grid)."""

    category = "data"


class TransportError(QescanError, IOError):
    """Instrument endpoint unreachable or connection lost."""

    category = "io"


class BenchAddressError(TransportError):
    """A bench endpoint address is already in use."""


class SessionBusyError(QescanError):
    """A second command was issued while one was outstanding."""

    category = "protocol"
