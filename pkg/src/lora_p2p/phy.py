"""Chirp spread spectrum PHY: radio parameters, airtime arithmetic, (de)modulation.

Airtime follows Semtech AN1200.22::

    T_sym      = 2**SF / BW
    n_payload  = 8 + max(ceil((8PL - 4SF + 28 + 16CRC - 20IH) / (4(SF - 2DE))) * (CR + 4), 0)
    T_packet   = (n_preamble + 4.25 + n_payload) * T_sym
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, FramingError, OversizePayload

VALID_BANDWIDTHS = (125_000, 250_000, 500_000)
MAX_PAYLOAD = 255
LDRO_SYMBOL_LIMIT_S = 16e-3
SYNC_SYMBOLS = 4.25


@dataclass(frozen=True)
class RadioConfig:
    """LoRa modem settings. Defaults reproduce the 433 MHz test setup.

    ``ldro=None`` resolves automatically: on whenever a symbol lasts more
    than 16 ms. Forcing it off in that regime is rejected.
    """

    frequency_hz: float = 433e6
    sf: int = 12
    bw_hz: int = 125_000
    cr_num: int = 1
    tx_power_dbm: float = 17.0
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_enabled: bool = True
    ldro: bool | None = None
    gray_mapping: bool = True

    def __post_init__(self):
        if not (isinstance(self.sf, (int, np.integer)) and 7 <= self.sf <= 12):
            raise ConfigError(f"sf must be an integer in [7, 12], got {self.sf!r}")
        if self.bw_hz not in VALID_BANDWIDTHS:
            raise ConfigError(f"bw_hz must be one of {VALID_BANDWIDTHS}, got {self.bw_hz!r}")
        if not (isinstance(self.cr_num, (int, np.integer)) and 1 <= self.cr_num <= 4):
            raise ConfigError(f"cr_num must be an integer in [1, 4], got {self.cr_num!r}")
        if not (isinstance(self.preamble_symbols, (int, np.integer)) and self.preamble_symbols >= 4):
            raise ConfigError(f"preamble_symbols must be an integer >= 4, got {self.preamble_symbols!r}")
        if self.frequency_hz <= 0:
            raise ConfigError("frequency_hz must be positive")
        needs_ldro = (2**self.sf) / self.bw_hz > LDRO_SYMBOL_LIMIT_S
        if self.ldro is None:
            object.__setattr__(self, "ldro", needs_ldro)
        elif needs_ldro and not self.ldro:
            raise ConfigError(
                f"LDRO is mandatory for SF{self.sf}/{self.bw_hz} Hz (symbol > 16 ms)"
            )

    @property
    def n_bins(self) -> int:
        return 2**self.sf

    @property
    def coding_rate(self) -> str:
        return f"4/{4 + self.cr_num}"


@dataclass(frozen=True)
class SymbolBlock:
    symbols: tuple[int, ...]
    sf: int
    # per-symbol peak magnitude, only set by demodulate()
    metrics: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        symbols = tuple(int(s) for s in self.symbols)
        limit = 2**self.sf
        for s in symbols:
            if not 0 <= s < limit:
                raise DomainError(f"symbol {s} outside [0, {limit}) for SF{self.sf}")
        object.__setattr__(self, "symbols", symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)


@dataclass(frozen=True)
class IqBuffer:
    samples: np.ndarray
    sample_rate_hz: float
    oversample: int = 1

    def __len__(self) -> int:
        return len(self.samples)


def symbol_duration(cfg: RadioConfig) -> float:
    return (2**cfg.sf) / cfg.bw_hz


def payload_symbol_count(cfg: RadioConfig, payload_len: int) -> int:
    """Number of symbols after the preamble/sync (header included)."""
    if payload_len > MAX_PAYLOAD:
        raise OversizePayload(f"payload of {payload_len} B exceeds {MAX_PAYLOAD} B")
    if payload_len < 0:
        raise DomainError("payload_len must be >= 0")
    crc = 1 if cfg.crc_enabled else 0
    ih = 0 if cfg.explicit_header else 1
    de = 1 if cfg.ldro else 0
    numerator = 8 * payload_len - 4 * cfg.sf + 28 + 16 * crc - 20 * ih
    # integer ceil avoids float rounding on exact multiples
    blocks = -(-numerator // (4 * (cfg.sf - 2 * de)))
    return 8 + max(blocks * (cfg.cr_num + 4), 0)


def time_on_air(cfg: RadioConfig, payload_len: int) -> float:
    n_payload = payload_symbol_count(cfg, payload_len)
    return (cfg.preamble_symbols + SYNC_SYMBOLS + n_payload) * symbol_duration(cfg)


def bit_rate(cfg: RadioConfig) -> float:
    return cfg.sf * (cfg.bw_hz / 2**cfg.sf) * (4 / (4 + cfg.cr_num))


def gray_encode(value: int, sf: int) -> int:
    if not 0 <= value < 2**sf:
        raise DomainError(f"{value} outside [0, 2^{sf})")
    return value ^ (value >> 1)


def gray_decode(value: int, sf: int) -> int:
    if not 0 <= value < 2**sf:
        raise DomainError(f"{value} outside [0, 2^{sf})")
    result = value
    shift = value >> 1
    while shift:
        result ^= shift
        shift >>= 1
    return result


def _chirp_phase(symbols: np.ndarray, n_bins: int, oversample: int) -> np.ndarray:
    """Phase in cycles (mod 1) of the up-chirps for each symbol, shape (n_sym, N*os).

    Instantaneous frequency at sample m is ((s*os + m) mod N*os - N*os/2) / (N*os^2)
    cycles/sample; the running sum is kept in exact integer arithmetic.
    """
    span = n_bins * oversample
    m = np.arange(span, dtype=np.int64)
    freq_num = (symbols[:, None].astype(np.int64) * oversample + m[None, :]) % span - span // 2
    acc = np.cumsum(freq_num, axis=1) - freq_num  # exclusive prefix sum
    modulus = n_bins * oversample * oversample
    return (acc % modulus) / modulus


def modulate(symbols: SymbolBlock, cfg: RadioConfig, oversample: int = 1) -> IqBuffer:
    if oversample < 1:
        raise DomainError("oversample must be >= 1")
    if symbols.sf != cfg.sf:
        raise ConfigError(f"symbol block is SF{symbols.sf}, radio is SF{cfg.sf}")
    values = np.asarray(symbols.symbols, dtype=np.int64)
    phase = _chirp_phase(values, cfg.n_bins, oversample)
    samples = np.exp(2j * np.pi * phase).reshape(-1)
    return IqBuffer(samples=samples, sample_rate_hz=cfg.bw_hz * oversample, oversample=oversample)


def _base_downchirp(n_bins: int, oversample: int) -> np.ndarray:
    phase = _chirp_phase(np.zeros(1, dtype=np.int64), n_bins, oversample)[0, ::oversample]
    return np.exp(-2j * np.pi * phase)


def demodulate(iq: IqBuffer, cfg: RadioConfig) -> SymbolBlock:
    """Noncoherent dechirp + FFT peak pick. Ties go to the lowest bin."""
    n_bins = cfg.n_bins
    span = n_bins * iq.oversample
    if len(iq.samples) % span:
        raise FramingError(
            f"{len(iq.samples)} samples is not a whole number of {span}-sample symbols"
        )
    frames = np.asarray(iq.samples).reshape(-1, span)[:, :: iq.oversample]
    spectrum = np.abs(np.fft.fft(frames * _base_downchirp(n_bins, iq.oversample), axis=1))
    peaks = np.argmax(spectrum, axis=1)
    metrics = spectrum[np.arange(len(peaks)), peaks]
    return SymbolBlock(tuple(peaks.tolist()), cfg.sf, tuple(metrics.tolist()))
