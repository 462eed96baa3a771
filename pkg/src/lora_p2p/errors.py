"""Exception hierarchy shared by every layer of the stack."""


class LoraError(Exception):
    """Base class for all errors raised by lora_p2p."""


class ConfigError(LoraError, ValueError):
    """Invalid or inconsistent configuration/scenario."""


class DomainError(LoraError, ValueError):
    """Argument outside the domain of a function."""


class OversizePayload(LoraError, ValueError):
    """Payload longer than the 255-byte LoRa limit."""


class FramingError(LoraError, ValueError):
    """IQ buffer does not hold a whole number of symbols."""


class FrameError(LoraError):
    """Base class for receive-side frame decoding failures."""


class HeaderCorrupt(FrameError):
    """Header failed its checks or the frame is truncated."""


class FecFailure(FrameError):
    """A codeword could not be decoded (detected but uncorrectable)."""


class CrcMismatch(FrameError):
    """Payload CRC did not match; carries the corrupted bytes."""

    def __init__(self, payload: bytes, expected: int, actual: int):
        super().__init__(f"CRC mismatch: frame says 0x{expected:04X}, payload gives 0x{actual:04X}")
        self.payload = payload
        self.expected = expected
        self.actual = actual


class MissingEvent(LoraError):
    """Event pair needed for a latency measurement is absent or out of order."""


class CalibrationError(LoraError):
    """Threshold calibration produced a non-monotone table."""


class TransportError(LoraError):
    """Telemetry request never got a usable HTTP response."""
