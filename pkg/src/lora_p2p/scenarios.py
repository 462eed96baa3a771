"""Scenario definitions and the TOML scenario-file loader."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

from .channel import LinkBudget, PathLossModel, SnrThresholdTable
from .errors import ConfigError
from .node import Delays
from .phy import RadioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

REFERENCE_MESSAGE = "HELLO LORA 0001!"

# 10%-SER crossings of the dechirp/FFT detector, frozen from
# `lora-p2p calibrate --fidelity sample --trials 10000 --high-sf-trials 4000 --seed 20240601`
# (SF 10-12 at the reduced trial count), bisection resolution 0.25 dB.
DEFAULT_SNR_THRESHOLDS = {7: -11.016, 8: -13.672, 9: -16.172, 10: -18.984, 11: -21.641, 12: -24.453}


class Fidelity(str, Enum):
    SAMPLE = "sample"
    ANALYTIC = "analytic"


class Endpoint(str, Enum):
    LCD = "lcd"
    UPLOAD = "upload"


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    radio: RadioConfig = field(default_factory=RadioConfig)
    path_loss: PathLossModel = field(default_factory=lambda: PathLossModel(pl0_db=40.0))
    budget: LinkBudget = field(default_factory=LinkBudget)
    thresholds: SnrThresholdTable = field(
        default_factory=lambda: SnrThresholdTable(DEFAULT_SNR_THRESHOLDS)
    )
    distance_m: float = 5.0
    n_packets: int = 200
    message: str = REFERENCE_MESSAGE
    delays: Delays = field(default_factory=Delays)
    inter_send_delay_s: float = 2.0
    fidelity: Fidelity = Fidelity.ANALYTIC
    endpoint: Endpoint = Endpoint.UPLOAD
    noiseless: bool = False
    seed: int = 0
    description: str = ""

    def __post_init__(self):
        if self.n_packets < 1:
            raise ConfigError("n_packets must be >= 1")
        if self.distance_m < self.path_loss.d0_m:
            raise ConfigError(f"distance {self.distance_m} m is below d0 = {self.path_loss.d0_m} m")
        if self.inter_send_delay_s < 0:
            raise ConfigError("inter_send_delay_s must be >= 0")
        if self.budget.tx_power_dbm != self.radio.tx_power_dbm:
            raise ConfigError("link budget and radio disagree on transmit power")
        if self.radio.sf not in self.thresholds:
            raise ConfigError(f"threshold table has no entry for SF{self.radio.sf}")

    def with_(self, **changes) -> Scenario:
        """Copy with changes; a new radio power is propagated into the budget."""
        if "radio" in changes and "budget" not in changes:
            changes["budget"] = replace(self.budget, tx_power_dbm=changes["radio"].tx_power_dbm)
        return replace(self, **changes)


def _ldro(value):
    if value in (None, "auto"):
        return None
    if isinstance(value, bool):
        return value
    raise ConfigError(f"ldro must be true, false or \"auto\", got {value!r}")


def scenario_from_dict(data: dict) -> Scenario:
    try:
        radio_d = dict(data.get("radio", {}))
        radio_d["ldro"] = _ldro(radio_d.get("ldro"))
        radio = RadioConfig(**radio_d)
        ch = dict(data.get("channel", {}))
        thresholds = ch.pop("snr_thresholds", None) or DEFAULT_SNR_THRESHOLDS
        path_loss = PathLossModel(
            pl0_db=ch.pop("pl0_db"),
            d0_m=ch.pop("d0_m", 1.0),
            exponent_n=ch.pop("exponent_n"),
            shadowing_sigma_db=ch.pop("shadowing_sigma_db", 0.0),
        )
        budget = LinkBudget(tx_power_dbm=radio.tx_power_dbm, **ch)
        exp = dict(data.get("experiment", {}))
        if "fidelity" in exp:
            exp["fidelity"] = Fidelity(exp["fidelity"])
        if "endpoint" in exp:
            exp["endpoint"] = Endpoint(exp["endpoint"])
        return Scenario(
            name=data.get("name", "custom"),
            description=data.get("description", ""),
            radio=radio,
            path_loss=path_loss,
            budget=budget,
            thresholds=SnrThresholdTable({int(k): v for k, v in thresholds.items()}),
            delays=Delays(**data.get("delays", {})),
            **exp,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario definition: {exc}") from exc


def _bundled() -> dict[str, Path]:
    root = resources.files("lora_p2p") / "scenarios"
    out = {}
    for entry in root.iterdir():
        if entry.name.endswith(".toml"):
            out[entry.name[: -len(".toml")]] = Path(str(entry))
    return out


def available_scenarios() -> list[str]:
    names = set(_bundled())
    for path in _bundled().values():
        with open(path, "rb") as fh:
            names.add(tomllib.load(fh).get("name", path.stem))
    return sorted(names)


def load_scenario(name_or_path: str | Path) -> Scenario:
    """Resolve a bundled scenario by file stem or ``name`` field, or load a file path."""
    path = Path(name_or_path)
    if not path.is_file():
        bundled = _bundled()
        path = bundled.get(str(name_or_path))
        if path is None:
            for candidate in bundled.values():
                with open(candidate, "rb") as fh:
                    if tomllib.load(fh).get("name") == str(name_or_path):
                        path = candidate
                        break
        if path is None:
            raise ConfigError(
                f"unknown scenario {name_or_path!r}; available: {', '.join(available_scenarios())}"
            )
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return scenario_from_dict(data)
