"""Command-line entry point: ``lora-p2p <airtime|budget|sweep|ser|calibrate|demo>``.

Every command prints its fully resolved configuration as ``# key = value``
lines before any result, so a saved output is enough to rerun it.

Exit codes: 0 ok, 2 usage error, 3 scenario/config error, 4 telemetry
transport error (reserved for non-demo commands; ``demo`` never fails on it).
"""

from __future__ import annotations

import json
import logging
import math
import sys
import time
from dataclasses import fields, is_dataclass
from enum import Enum

import click

from . import channel as ch
from . import telemetry
from .errors import CalibrationError, ConfigError, TransportError
from .node import EventKind, NodeEvent, lcd_art, render_lcd
from .phy import VALID_BANDWIDTHS, RadioConfig, bit_rate, payload_symbol_count, symbol_duration, time_on_air
from .scenarios import Fidelity, Scenario, load_scenario
from .sim import (
    calibrate_thresholds,
    monte_carlo_ser,
    simulate_events,
    sweep_distance,
    sweep_to_csv,
)

EXIT_CONFIG = 3
EXIT_TRANSPORT = 4

log = logging.getLogger("lora_p2p")


class ConfigFailure(click.ClickException):
    exit_code = EXIT_CONFIG


def _header(items: dict) -> None:
    for key, value in items.items():
        click.echo(f"# {key} = {value}")


def _flatten(prefix: str, obj) -> dict:
    if is_dataclass(obj):
        out = {}
        for f in fields(obj):
            out.update(_flatten(f"{prefix}.{f.name}" if prefix else f.name, getattr(obj, f.name)))
        return out
    if isinstance(obj, Enum):
        obj = obj.value
    return {prefix: obj}


def _scenario_header(scenario: Scenario, **extra) -> None:
    flat = _flatten("", scenario)
    flat.pop("description", None)
    flat["channel.thresholds"] = json.dumps(scenario.thresholds.thresholds)
    flat.pop("thresholds.thresholds", None)
    flat.update(extra)
    _header(flat)


def _load(name: str) -> Scenario:
    try:
        return load_scenario(name)
    except ConfigError as exc:
        raise ConfigFailure(str(exc)) from exc


def _float_list(value: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}") from None


def _int_list(value: str) -> list[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from None


def _cr(value: str) -> int:
    text = str(value).strip()
    if text.startswith("4/"):
        text = str(int(text[2:]) - 4)
    try:
        cr = int(text)
    except ValueError:
        raise click.BadParameter(f"coding rate must be 1-4 or 4/5-4/8, got {value!r}") from None
    if not 1 <= cr <= 4:
        raise click.BadParameter(f"coding rate must be 1-4 or 4/5-4/8, got {value!r}")
    return cr


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool):
    """Point-to-point LoRa text link simulator."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@click.option("--sf", type=click.IntRange(7, 12), default=12, show_default=True)
@click.option("--bw", type=click.Choice([str(b) for b in VALID_BANDWIDTHS]), default="125000", show_default=True)
@click.option("--cr", default="1", show_default=True, help="Coding rate index 1-4 or 4/5..4/8.")
@click.option("--payload", type=click.IntRange(0, 255), default=16, show_default=True, help="Payload bytes.")
@click.option("--preamble", type=click.IntRange(min=4), default=8, show_default=True)
@click.option("--ldro", type=click.Choice(["auto", "on", "off"]), default="auto", show_default=True)
@click.option("--implicit-header", is_flag=True)
@click.option("--no-crc", is_flag=True)
def airtime(sf, bw, cr, payload, preamble, ldro, implicit_header, no_crc):
    """Symbol time, payload symbols, time on air and bit rate."""
    try:
        cfg = RadioConfig(
            sf=sf,
            bw_hz=int(bw),
            cr_num=_cr(cr),
            preamble_symbols=preamble,
            explicit_header=not implicit_header,
            crc_enabled=not no_crc,
            ldro={"auto": None, "on": True, "off": False}[ldro],
        )
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    _header({**_flatten("radio", cfg), "payload_bytes": payload})
    rows = [
        ("T_sym", f"{symbol_duration(cfg) * 1e3:.3f} ms"),
        ("n_payload", f"{payload_symbol_count(cfg, payload)} symbols"),
        ("ToA", f"{time_on_air(cfg, payload) * 1e3:.3f} ms"),
        ("bit rate", f"{bit_rate(cfg):.5f} bps"),
    ]
    for name, value in rows:
        click.echo(f"{name:<10} {value}")


@main.command()
@click.option("--scenario", default="paper-urban", show_default=True)
@click.option("--distances", default="5,10,20,25,50", show_default=True)
def budget(scenario, distances):
    """Deterministic link budget (no shadowing) per distance."""
    sc = _load(scenario)
    dists = _float_list(distances)
    _scenario_header(sc, distances=",".join(map(str, dists)))
    floor = sc.budget.noise_floor_dbm(sc.radio.bw_hz)
    sens = ch.sensitivity_dbm(sc.radio, sc.budget, sc.thresholds)
    click.echo(f"noise floor {floor:.2f} dBm, sensitivity {sens:.2f} dBm")
    click.echo(f"{'distance_m':>10} {'loss_db':>9} {'prx_dbm':>9} {'snr_db':>8} {'margin_db':>9}")
    for d in dists:
        try:
            loss = ch.path_loss_db(sc.path_loss, d)
        except ConfigError as exc:
            raise ConfigFailure(str(exc)) from exc
        except ValueError as exc:
            raise click.BadParameter(str(exc), param_hint="--distances") from exc
        prx = ch.received_power_dbm(sc.budget, loss)
        snr = ch.snr_db(prx, sc.budget, sc.radio.bw_hz)
        click.echo(f"{d:>10g} {loss:>9.2f} {prx:>9.2f} {snr:>8.2f} {prx - sens:>9.2f}")


@main.command()
@click.option("--scenario", default="paper-urban", show_default=True, help="Scenario name or TOML path.")
@click.option("--distances", default="5,10,20,25,50", show_default=True)
@click.option("--packets", type=click.IntRange(min=1), default=None, help="Packets per distance.")
@click.option("--seed", type=int, default=None)
@click.option("--fidelity", type=click.Choice([f.value for f in Fidelity]), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl", "table"]), default="csv", show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
def sweep(scenario, distances, packets, seed, fidelity, fmt, workers):
    """Packet delivery ratio and latency versus distance."""
    sc = _load(scenario)
    changes = {}
    if packets is not None:
        changes["n_packets"] = packets
    if seed is not None:
        changes["seed"] = seed
    if fidelity is not None:
        changes["fidelity"] = Fidelity(fidelity)
    sc = sc.with_(**changes)
    dists = _float_list(distances)
    _scenario_header(sc, distances=",".join(map(str, dists)))
    try:
        rows = sweep_distance(sc, dists, workers=workers)
    except ConfigError as exc:
        raise ConfigFailure(str(exc)) from exc
    if fmt == "csv":
        click.echo(sweep_to_csv(rows), nl=False)
    elif fmt == "jsonl":
        for r in rows:
            s = r.stats
            click.echo(json.dumps({
                "distance_m": r.distance_m, "pdr": r.pdr, "delivered": r.delivered,
                "latency_mean_s": None if math.isnan(r.latency_mean_s) else r.latency_mean_s,
                "sent": s.sent, "crc_failures": s.crc_failures, "fec_failures": s.fec_failures,
                "header_failures": s.header_failures, "lost": s.lost, "corrupted": s.corrupted,
            }))
    else:
        click.echo(f"{'distance_m':>10} {'pdr':>6} {'shown':>5} {'latency_s':>9}")
        for r in rows:
            click.echo(f"{r.distance_m:>10g} {r.pdr:>6.3f} {'YES' if r.delivered else 'No':>5} {r.latency_mean_s:>9.3f}")


@main.command()
@click.option("--sf", type=click.IntRange(7, 12), default=7, show_default=True)
@click.option("--snr", "snrs", default="-20,-15,-10,-5,0", show_default=True, help="Comma-separated SNR grid (dB).")
@click.option("--trials", type=click.IntRange(min=1000), default=10_000, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--fidelity", type=click.Choice([f.value for f in Fidelity]), default=None)
def ser(sf, snrs, trials, seed, fidelity):
    """Monte Carlo symbol error rate with 95% Wilson intervals."""
    grid = _float_list(snrs)
    _header({"sf": sf, "snr_db": ",".join(map(str, grid)), "trials": trials, "seed": seed,
             "fidelity": fidelity or ("analytic" if sf >= 10 else "sample")})
    click.echo("sf,snr_db,ser,ci_low,ci_high,theory")
    for snr in grid:
        est = monte_carlo_ser(sf, snr, trials, seed, fidelity)
        click.echo(f"{sf},{snr!r},{est.ser!r},{est.ci_low!r},{est.ci_high!r},{ch.ser_theory(sf, snr)!r}")


@main.command()
@click.option("--sfs", default="7,8,9,10,11,12", show_default=True)
@click.option("--trials", type=click.IntRange(min=1000), default=10_000, show_default=True)
@click.option("--high-sf-trials", type=click.IntRange(min=1000), default=None, help="Trials for SF >= 10.")
@click.option("--seed", type=int, default=20240601, show_default=True)
@click.option("--fidelity", type=click.Choice([f.value for f in Fidelity]), default=None)
def calibrate(sfs, trials, high_sf_trials, seed, fidelity):
    """Find the 10%-SER SNR threshold per spreading factor."""
    sf_list = _int_list(sfs)
    _header({"sfs": ",".join(map(str, sf_list)), "trials": trials, "high_sf_trials": high_sf_trials,
             "seed": seed, "fidelity": fidelity or "auto"})
    try:
        table = calibrate_thresholds(sf_list, trials, seed, fidelity, high_sf_trials)
    except (ConfigError, CalibrationError) as exc:
        raise ConfigFailure(str(exc)) from exc
    click.echo("sf,threshold_db,theory_db")
    for sf, value in table.thresholds.items():
        click.echo(f"{sf},{value},{ch.theory_threshold(sf):.3f}")


def _describe(ev: NodeEvent) -> str:
    detail = ev.detail.replace("\n", " | ")
    return f"[{ev.timestamp:9.3f}s] {ev.node_id:<2} {ev.kind.value:<12} {detail}"


@main.command()
@click.option("--message", default="HELLO LORA", show_default=True)
@click.option("--distance", type=float, default=5.0, show_default=True, help="Metres.")
@click.option("--scenario", default="paper-urban", show_default=True)
@click.option("--count", type=click.IntRange(min=1), default=1, show_default=True, help="Messages to send.")
@click.option("--endpoint", envvar=telemetry.ENV_ENDPOINT, default=None, help="Telemetry base URL (default: in-process mock).")
@click.option("--write-key", envvar=telemetry.ENV_WRITE_KEY, default=None)
@click.option("--time-scale", type=click.FloatRange(min=0), default=1.0, show_default=True,
              help="Wall seconds per simulated second; 0 runs flat out.")
@click.option("--fidelity", type=click.Choice([f.value for f in Fidelity]), default="sample", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--log", "log_path", type=click.Path(dir_okay=False, writable=True), default=None,
              help="Also write the event log as JSON lines.")
def demo(message, distance, scenario, count, endpoint, write_key, time_scale, fidelity, seed, log_path):
    """Two-node loopback: TX -> channel -> RX -> LCD -> telemetry."""
    sc = _load(scenario)
    changes = {"message": message, "distance_m": distance, "n_packets": count, "fidelity": Fidelity(fidelity)}
    if seed is not None:
        changes["seed"] = seed
    try:
        sc = sc.with_(**changes)
    except ConfigError as exc:
        raise ConfigFailure(str(exc)) from exc

    server = None
    channel_id = None
    if endpoint is None:
        store = telemetry.MockThingSpeak()
        try:
            chan = store.create_channel(write_key)
        except ValueError as exc:
            raise ConfigFailure(str(exc)) from exc
        server = telemetry.MockServer(store).__enter__()
        endpoint, write_key, channel_id = server.url, chan.write_key, chan.channel_id
    _scenario_header(sc, telemetry_endpoint=endpoint, time_scale=time_scale)

    log_fp = open(log_path, "w") if log_path else None
    lcd = render_lcd("")
    clock = 0.0
    try:
        for ev in simulate_events(sc):
            if time_scale > 0 and ev.timestamp > clock:
                time.sleep((ev.timestamp - clock) * time_scale)
            clock = max(clock, ev.timestamp)
            click.echo(_describe(ev))
            if log_fp:
                log_fp.write(json.dumps(ev.to_record()) + "\n")
            if ev.kind is EventKind.LCD_UPDATE:
                lcd = tuple(ev.detail.split("\n"))
                click.echo(lcd_art(lcd))
            elif ev.kind is EventKind.UPLOAD_START:
                try:
                    entry = telemetry.upload(endpoint, write_key or "", ev.detail[: telemetry.MAX_FIELD_CHARS])
                    click.echo(f"  upload entry_id={entry}")
                except TransportError as exc:
                    log.warning("telemetry upload failed: %s", exc)
                    click.echo(f"  upload failed: {exc}")
        click.echo("final LCD:")
        click.echo(lcd_art(lcd))
        if server is not None:
            feed = server.store.channels[channel_id].feed
            click.echo(f"mock channel {channel_id}: {len(feed)} entries")
            for entry in feed:
                click.echo(f"  #{entry['entry_id']} field1={entry.get('field1', '')!r}")
    finally:
        if log_fp:
            log_fp.close()
        if server is not None:
            server.__exit__(None, None, None)


if __name__ == "__main__":
    sys.exit(main())
