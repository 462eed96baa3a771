"""Statistical radio channel: log-distance path loss, link budget, AWGN, sensitivity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConfigError, DomainError
from .phy import IqBuffer, RadioConfig

THERMAL_NOISE_DBM_HZ = -174.0
NO_NOISE = math.inf
TARGET_SER = 0.1


@dataclass(frozen=True)
class PathLossModel:
    pl0_db: float
    d0_m: float = 1.0
    exponent_n: float = 2.0
    shadowing_sigma_db: float = 0.0

    def __post_init__(self):
        if self.d0_m <= 0:
            raise ConfigError("d0_m must be positive")
        if self.exponent_n <= 0:
            raise ConfigError("exponent_n must be positive")
        if self.shadowing_sigma_db < 0:
            raise ConfigError("shadowing_sigma_db must be >= 0")


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float = 17.0
    tx_gain_dbi: float = 0.0
    rx_gain_dbi: float = 0.0
    noise_figure_db: float = 6.0

    def __post_init__(self):
        if self.noise_figure_db < 0:
            raise ConfigError("noise_figure_db must be >= 0")

    def noise_floor_dbm(self, bw_hz: float) -> float:
        return THERMAL_NOISE_DBM_HZ + 10 * math.log10(bw_hz) + self.noise_figure_db


@dataclass(frozen=True)
class SnrThresholdTable:
    """Minimum demodulation SNR (dB) per spreading factor."""

    thresholds: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        items = sorted((int(k), float(v)) for k, v in self.thresholds.items())
        object.__setattr__(self, "thresholds", dict(items))
        values = [v for _, v in items]
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ConfigError(f"SNR thresholds must strictly decrease with SF: {dict(items)}")

    def __getitem__(self, sf: int) -> float:
        try:
            return self.thresholds[sf]
        except KeyError:
            raise ConfigError(f"no SNR threshold for SF{sf}") from None

    def __contains__(self, sf: int) -> bool:
        return sf in self.thresholds


def path_loss_db(model: PathLossModel, distance_m: float, rng: np.random.Generator | None = None) -> float:
    if distance_m < model.d0_m:
        raise DomainError(f"distance {distance_m} m is inside the reference distance {model.d0_m} m")
    loss = model.pl0_db + 10 * model.exponent_n * math.log10(distance_m / model.d0_m)
    if rng is not None and model.shadowing_sigma_db > 0:
        loss += rng.normal(0.0, model.shadowing_sigma_db)
    return loss


def received_power_dbm(budget: LinkBudget, loss_db: float) -> float:
    return budget.tx_power_dbm + budget.tx_gain_dbi + budget.rx_gain_dbi - loss_db


def snr_db(prx_dbm: float, budget: LinkBudget, bw_hz: float) -> float:
    return prx_dbm - budget.noise_floor_dbm(bw_hz)


def apply_awgn(iq: IqBuffer, snr: float, rng: np.random.Generator) -> IqBuffer:
    """Add circular complex Gaussian noise of power 10^(-snr/10) per sample."""
    if snr == NO_NOISE:
        return IqBuffer(iq.samples.copy(), iq.sample_rate_hz, iq.oversample)
    sigma = math.sqrt(10 ** (-snr / 10) / 2)
    n = len(iq.samples)
    noise = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return IqBuffer(iq.samples + noise, iq.sample_rate_hz, iq.oversample)


def sensitivity_dbm(cfg: RadioConfig, budget: LinkBudget, table: SnrThresholdTable) -> float:
    return budget.noise_floor_dbm(cfg.bw_hz) + table[cfg.sf]


# ---------------------------------------------------------------------------
# Closed-form symbol error rate of the dechirp/FFT/argmax detector.
#
# After dechirping a critically sampled symbol, the FFT bins are independent:
# the signal bin is N + W and the other N-1 bins are W, W ~ CN(0, N*sigma^2).
# Normalising the noise to unit power, correct detection requires the Rician
# signal-bin magnitude to beat N-1 Rayleigh magnitudes.

@lru_cache(maxsize=4096)
def ser_theory(sf: int, snr: float) -> float:
    if snr == NO_NOISE:
        return 0.0
    n_bins = 2**sf
    amp = math.sqrt(n_bins * 10 ** (snr / 10))

    def integrand(r: float) -> float:
        # 2r exp(-(r^2 + A^2)) I0(2Ar), scaled with i0e for stability
        rice = 2 * r * math.exp(-((r - amp) ** 2)) * special.i0e(2 * amp * r)
        p_other = -math.expm1(-r * r)
        if p_other <= 0:
            return 0.0
        return rice * math.exp((n_bins - 1) * math.log(p_other))

    hi = amp + 12.0
    peak = max(amp, 1e-3)
    p_correct = sum(
        integrate.quad(integrand, a, b, limit=200, epsabs=1e-13, epsrel=1e-10)[0]
        for a, b in ((0.0, peak), (peak, hi))
    )
    return float(min(1.0, max(0.0, 1.0 - p_correct)))


@lru_cache(maxsize=64)
def theory_threshold(sf: int, target: float = TARGET_SER) -> float:
    """SNR (dB) where ser_theory crosses ``target``."""
    return optimize.brentq(lambda s: ser_theory(sf, s) - target, -40.0, 10.0, xtol=1e-6)


def calibrated_ser(sf: int, snr: float, table: SnrThresholdTable | None = None) -> float:
    """SER curve shifted so its 10% crossing sits on the table's threshold."""
    if snr == NO_NOISE:
        return 0.0
    offset = 0.0
    if table is not None and sf in table:
        offset = table[sf] - theory_threshold(sf)
    return ser_theory(sf, round(snr - offset, 6))
