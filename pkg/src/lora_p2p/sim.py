"""Discrete-event experiment harness and Monte Carlo SER oracle."""

from __future__ import annotations

import csv
import heapq
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .channel import (
    NO_NOISE,
    TARGET_SER,
    SnrThresholdTable,
    apply_awgn,
    calibrated_ser,
    path_loss_db,
    received_power_dbm,
    sensitivity_dbm,
    ser_theory,
    snr_db,
)
from .errors import CalibrationError, ConfigError
from .node import (
    Arrival,
    EventKind,
    NodeEvent,
    RxNodeState,
    TxNodeState,
    end_to_end_latency,
    rx_step,
    tx_step,
)
from .phy import RadioConfig, SymbolBlock, demodulate, modulate
from .scenarios import Endpoint, Fidelity, Scenario

DELIVERED_PDR = 0.5

_OUTCOME_BY_DETAIL = {
    "HeaderCorrupt": "header",
    "FecFailure": "fec",
    "CrcMismatch": "crc",
    "busy": "lost",
}


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for (seed, keys...); unrelated keys never share state."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)))


def _distance_key(distance_m: float) -> int:
    return int(round(distance_m * 1000))


@dataclass(frozen=True)
class PacketRecord:
    packet: int
    path_loss_db: float
    snr_db: float
    outcome: str  # delivered | header | fec | crc | lost | corrupted
    latency_s: float | None = None


@dataclass
class TrialStats:
    sent: int = 0
    delivered: int = 0
    crc_failures: int = 0
    fec_failures: int = 0
    header_failures: int = 0
    lost: int = 0
    corrupted: int = 0
    latency_mean_s: float = math.nan
    latency_p95_s: float = math.nan
    records: list[PacketRecord] = field(default_factory=list)
    events: list[NodeEvent] = field(default_factory=list, repr=False)

    @property
    def pdr(self) -> float:
        return self.delivered / self.sent if self.sent else 0.0

    def conserved(self) -> bool:
        failures = self.crc_failures + self.fec_failures + self.header_failures
        return self.sent == self.delivered + failures + self.lost + self.corrupted


def _transmit(block: SymbolBlock, scenario: Scenario, rng: np.random.Generator):
    """Push one frame through the channel. Returns (arrival symbols or None, loss, snr)."""
    cfg = scenario.radio
    loss = path_loss_db(scenario.path_loss, scenario.distance_m, rng)
    prx = received_power_dbm(scenario.budget, loss)
    snr = NO_NOISE if scenario.noiseless else snr_db(prx, scenario.budget, cfg.bw_hz)
    if snr == NO_NOISE:
        return block, loss, snr

    if scenario.fidelity is Fidelity.SAMPLE:
        iq = apply_awgn(modulate(block, cfg), snr, rng)
        return demodulate(iq, cfg), loss, snr

    if prx < sensitivity_dbm(cfg, scenario.budget, scenario.thresholds):
        return None, loss, snr
    ser = calibrated_ser(cfg.sf, snr, scenario.thresholds)
    symbols = np.asarray(block.symbols, dtype=np.int64)
    hit = rng.random(len(symbols)) < ser
    # a noncoherent symbol error lands on any other bin with equal probability
    symbols[hit] = (symbols[hit] + rng.integers(1, cfg.n_bins, hit.sum())) % cfg.n_bins
    return SymbolBlock(tuple(symbols.tolist()), cfg.sf), loss, snr


def simulate_events(scenario: Scenario, channel_info: dict | None = None):
    """Yield node events in time order for one point-to-point run.

    ``channel_info`` (if given) is filled with packet -> (path loss, SNR).
    """
    cfg = scenario.radio
    n = scenario.n_packets
    dkey = _distance_key(scenario.distance_m)
    if channel_info is None:
        channel_info = {}
    tx = TxNodeState(
        config=cfg,
        message=scenario.message,
        inter_send_delay=scenario.inter_send_delay_s,
        build_delay=scenario.delays.build_s,
    )
    rx = RxNodeState(config=cfg, delays=scenario.delays)
    arrivals: list[tuple[float, int, Arrival]] = []

    while True:
        due = [t for t in (rx.next_due, arrivals[0][0] if arrivals else None) if t is not None]
        if tx.sent_count < n:
            due.append(tx.next_time)
        if not due:
            return
        now = min(due)
        if tx.sent_count < n and tx.next_time <= now:
            tx, block, tx_events = tx_step(tx, now)
            yield from tx_events
            if block is not None:
                packet = tx_events[-1].packet
                got, loss, snr = _transmit(block, scenario, derive_rng(scenario.seed, dkey, packet))
                channel_info[packet] = (loss, snr)
                if got is not None:
                    heapq.heappush(arrivals, (tx.next_time, packet, Arrival(got, snr, packet)))
        arrival = None
        if arrivals and arrivals[0][0] <= now:
            arrival = heapq.heappop(arrivals)[2]
        rx, rx_events = rx_step(rx, arrival, now)
        yield from rx_events


def run_point_to_point(scenario: Scenario) -> TrialStats:
    channel_info: dict[int, tuple[float, float]] = {}
    events = list(simulate_events(scenario, channel_info))
    return _collect(scenario, events, channel_info)


def _collect(scenario: Scenario, events: list[NodeEvent], channel_info) -> TrialStats:
    endpoint_kind = EventKind.UPLOAD_DONE if scenario.endpoint is Endpoint.UPLOAD else EventKind.LCD_UPDATE
    starts: dict[int, NodeEvent] = {}
    ends: dict[int, NodeEvent] = {}
    outcome: dict[int, str] = {}
    for ev in events:
        if ev.kind is EventKind.TX_START:
            starts[ev.packet] = ev
        elif ev.kind is EventKind.RX_DECODE_OK:
            outcome[ev.packet] = "delivered" if ev.detail == scenario.message else "corrupted"
        elif ev.kind is EventKind.RX_DECODE_FAIL:
            outcome[ev.packet] = _OUTCOME_BY_DETAIL[ev.detail]
        elif ev.kind is endpoint_kind:
            ends[ev.packet] = ev

    result = TrialStats(sent=len(starts), events=events)
    latencies = []
    for packet in sorted(starts):
        kind = outcome.get(packet, "lost")
        latency = None
        if kind == "delivered" and packet in ends:
            latency = end_to_end_latency(starts[packet], ends[packet])
            latencies.append(latency)
        loss, snr = channel_info[packet]
        result.records.append(PacketRecord(packet, loss, snr, kind, latency))
    counts = {k: sum(r.outcome == k for r in result.records) for k in _COUNTER}
    for kind, attr in _COUNTER.items():
        setattr(result, attr, counts[kind])
    if latencies:
        result.latency_mean_s = float(np.mean(latencies))
        result.latency_p95_s = float(np.percentile(latencies, 95))
    return result


_COUNTER = {
    "delivered": "delivered",
    "header": "header_failures",
    "fec": "fec_failures",
    "crc": "crc_failures",
    "lost": "lost",
    "corrupted": "corrupted",
}


@dataclass(frozen=True)
class SweepRow:
    distance_m: float
    pdr: float
    delivered: bool
    latency_mean_s: float
    stats: TrialStats | None = field(default=None, compare=False, repr=False)


def _sweep_point(args) -> TrialStats:
    scenario, distance = args
    stats_ = run_point_to_point(scenario.with_(distance_m=distance))
    stats_.events = []
    return stats_


def sweep_distance(scenario: Scenario, distances, workers: int = 1) -> list[SweepRow]:
    """One run per distance; each distance draws from its own (seed, distance) stream."""
    distances = [float(d) for d in distances]
    if not distances:
        raise ConfigError("distance list is empty")
    jobs = [(scenario, d) for d in distances]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(job) for job in jobs]
    return [
        SweepRow(d, s.pdr, s.pdr >= DELIVERED_PDR, s.latency_mean_s, s)
        for d, s in zip(distances, results)
    ]


SWEEP_COLUMNS = ("distance_m", "pdr", "delivered", "latency_mean_s")


def sweep_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([repr(r.distance_m), repr(r.pdr), "YES" if r.delivered else "No", repr(r.latency_mean_s)])
    return buf.getvalue()


def sweep_from_csv(text: str) -> list[SweepRow]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return [
        SweepRow(float(r["distance_m"]), float(r["pdr"]), r["delivered"] == "YES", float(r["latency_mean_s"]))
        for r in csv.DictReader(lines)
    ]


# ---------------------------------------------------------------------------
# Monte Carlo symbol error rate

@dataclass(frozen=True)
class SerEstimate:
    ser: float
    ci_low: float
    ci_high: float
    errors: int
    trials: int


def _wilson(errors: int, trials: int) -> SerEstimate:
    ci = stats.binomtest(errors, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return SerEstimate(errors / trials, float(ci.low), float(ci.high), errors, trials)


def default_fidelity(sf: int) -> Fidelity:
    return Fidelity.ANALYTIC if sf >= 10 else Fidelity.SAMPLE


def monte_carlo_ser(
    sf: int,
    snr: float,
    trials: int,
    seed: int,
    fidelity: Fidelity | None = None,
    chunk: int = 1024,
) -> SerEstimate:
    """Symbol error rate of random symbols through AWGN and the FFT demodulator.

    For a fixed seed the symbols and unit noise are identical at every SNR,
    only the noise scale changes, so sweeps over SNR use common random numbers.
    """
    if trials < 1000:
        raise ConfigError("Monte Carlo SER needs at least 1000 trials")
    fidelity = Fidelity(fidelity) if fidelity is not None else default_fidelity(sf)
    rng = derive_rng(seed, sf)
    if fidelity is Fidelity.ANALYTIC:
        errors = int((rng.random(trials) < ser_theory(sf, float(snr))).sum())
        return _wilson(errors, trials)

    cfg = RadioConfig(sf=sf, bw_hz=500_000)  # bandwidth is irrelevant at baseband
    errors = 0
    for start in range(0, trials, chunk):
        count = min(chunk, trials - start)
        sent = rng.integers(0, cfg.n_bins, count)
        iq = apply_awgn(modulate(SymbolBlock(tuple(sent.tolist()), sf), cfg), snr, rng)
        got = np.asarray(demodulate(iq, cfg).symbols)
        errors += int((got != sent).sum())
    return _wilson(errors, trials)


def calibrate_thresholds(
    sfs,
    trials: int,
    seed: int,
    fidelity: Fidelity | None = None,
    high_sf_trials: int | None = None,
    resolution_db: float = 0.25,
    bracket: tuple[float, float] = (-40.0, 0.0),
) -> SnrThresholdTable:
    """Bisect each SF's SNR down to the 10%-SER crossing."""
    table = {}
    for sf in sorted(sfs):
        if not 7 <= sf <= 12:
            raise ConfigError(f"SF{sf} outside [7, 12]")
        n = high_sf_trials if (high_sf_trials and sf >= 10) else trials
        fid = fidelity if fidelity is not None else default_fidelity(sf)

        def ser_at(snr: float) -> float:
            return monte_carlo_ser(sf, snr, n, seed, fid).ser

        lo, hi = bracket
        if not ser_at(lo) > TARGET_SER > ser_at(hi):
            raise CalibrationError(f"SF{sf}: 10% SER crossing not inside {bracket} dB")
        while hi - lo > resolution_db:
            mid = (lo + hi) / 2
            if ser_at(mid) > TARGET_SER:
                lo = mid
            else:
                hi = mid
        table[sf] = round((lo + hi) / 2, 3)
    values = [table[sf] for sf in sorted(table)]
    if any(b >= a for a, b in zip(values, values[1:])):
        raise CalibrationError(f"threshold table not decreasing in SF: {table}")
    return SnrThresholdTable(table)
