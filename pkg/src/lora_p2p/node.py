"""Transmitter/receiver node state machines, LCD rendering and event log.

Both machines are immutable dataclasses advanced by a step function that
returns the successor state. Events carry the time they were scheduled for,
so a driver may call a step late without skewing timestamps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

from .errors import CrcMismatch, FecFailure, FrameError, HeaderCorrupt, LoraError, MissingEvent
from .link import decode_frame, encode_frame
from .phy import RadioConfig, SymbolBlock, time_on_air

LCD_COLS = 16
LCD_ROWS = 2


class EventKind(str, Enum):
    TX_START = "TxStart"
    TX_END = "TxEnd"
    TX_ABORT = "TxAbort"
    RX_DETECT = "RxDetect"
    RX_DECODE_OK = "RxDecodeOk"
    RX_DECODE_FAIL = "RxDecodeFail"
    LCD_UPDATE = "LcdUpdate"
    UPLOAD_START = "UploadStart"
    UPLOAD_DONE = "UploadDone"


@dataclass(frozen=True)
class NodeEvent:
    timestamp: float
    kind: EventKind
    detail: str = ""
    node_id: str = ""
    packet: int | None = None
    # TxStart only: when the frame build began (latency origin)
    generated_at: float | None = None

    def to_record(self) -> dict:
        record = asdict(self)
        record["kind"] = self.kind.value
        return record


def write_event_log(events, fp) -> None:
    """Line-delimited JSON, one event per line."""
    for ev in events:
        fp.write(json.dumps(ev.to_record()) + "\n")


def read_event_log(fp) -> list[NodeEvent]:
    out = []
    for line in fp:
        if line.strip():
            rec = json.loads(line)
            rec["kind"] = EventKind(rec["kind"])
            out.append(NodeEvent(**rec))
    return out


@dataclass(frozen=True)
class Delays:
    """Processing time constants (seconds) around the airtime."""

    build_s: float = 0.0
    decode_s: float = 0.0
    display_s: float = 0.0
    upload_s: float = 0.0


# ---------------------------------------------------------------------------
# Transmitter

class TxPhase(str, Enum):
    INIT = "Init"
    BUILDING = "Building"
    TRANSMITTING = "Transmitting"
    WAITING = "Waiting"


@dataclass(frozen=True)
class TxNodeState:
    config: RadioConfig
    message: str
    inter_send_delay: float = 0.0
    build_delay: float = 0.0
    state: TxPhase = TxPhase.INIT
    sent_count: int = 0
    next_time: float = 0.0
    build_started: float = 0.0
    node_id: str = "tx"


def tx_step(state: TxNodeState, now: float) -> tuple[TxNodeState, SymbolBlock | None, list[NodeEvent]]:
    """Advance the transmitter through every transition due by ``now``.

    Stops right after putting a frame on air so at most one block is returned.
    """
    events: list[NodeEvent] = []
    while state.next_time <= now:
        t = state.next_time
        if state.state in (TxPhase.INIT, TxPhase.WAITING):
            state = replace(state, state=TxPhase.BUILDING, build_started=t, next_time=t + state.build_delay)
        elif state.state is TxPhase.BUILDING:
            try:
                block = encode_frame(state.message, state.config)
            except LoraError as exc:
                events.append(NodeEvent(t, EventKind.TX_ABORT, str(exc), state.node_id, state.sent_count))
                state = replace(state, state=TxPhase.WAITING, next_time=t + state.inter_send_delay)
                continue
            toa = time_on_air(state.config, len(state.message.encode("utf-8")))
            events.append(
                NodeEvent(t, EventKind.TX_START, state.message, state.node_id, state.sent_count, state.build_started)
            )
            state = replace(state, state=TxPhase.TRANSMITTING, next_time=t + toa)
            return state, block, events
        else:  # TRANSMITTING
            events.append(NodeEvent(t, EventKind.TX_END, "", state.node_id, state.sent_count))
            state = replace(
                state, state=TxPhase.WAITING, sent_count=state.sent_count + 1, next_time=t + state.inter_send_delay
            )
    return state, None, events


# ---------------------------------------------------------------------------
# Receiver

class RxPhase(str, Enum):
    INIT = "Init"
    LISTENING = "Listening"
    DECODING = "Decoding"
    DISPLAYING = "Displaying"
    UPLOADING = "Uploading"


@dataclass(frozen=True)
class RxStats:
    detected: int = 0
    decoded: int = 0
    header_failures: int = 0
    fec_failures: int = 0
    crc_failures: int = 0
    busy_drops: int = 0
    uploads: int = 0


@dataclass(frozen=True)
class Arrival:
    symbols: SymbolBlock
    snr_db: float
    packet: int | None = None


BLANK_LCD = (" " * LCD_COLS,) * LCD_ROWS


@dataclass(frozen=True)
class RxNodeState:
    config: RadioConfig
    delays: Delays = field(default_factory=Delays)
    state: RxPhase = RxPhase.INIT
    last_message: str | None = None
    lcd: tuple[str, str] = BLANK_LCD
    stats: RxStats = field(default_factory=RxStats)
    next_time: float | None = None
    # (packet, decoded text or failure kind, ok?) held between detect and decode
    pending: tuple | None = None
    # (done_time, packet, text) for uploads still in flight
    uploads: tuple = ()
    node_id: str = "rx"

    @property
    def next_due(self) -> float | None:
        times = [u[0] for u in self.uploads]
        if self.next_time is not None:
            times.append(self.next_time)
        return min(times) if times else None


_FAILURE_FIELD = {
    HeaderCorrupt: "header_failures",
    FecFailure: "fec_failures",
    CrcMismatch: "crc_failures",
}


def _idle_phase(state: RxNodeState) -> RxPhase:
    return RxPhase.UPLOADING if state.uploads else RxPhase.LISTENING


def _bump(stats: RxStats, name: str) -> RxStats:
    return replace(stats, **{name: getattr(stats, name) + 1})


def rx_step(state: RxNodeState, arrival: Arrival | None, now: float) -> tuple[RxNodeState, list[NodeEvent]]:
    events: list[NodeEvent] = []
    nid = state.node_id
    if state.state is RxPhase.INIT:
        state = replace(state, state=RxPhase.LISTENING)

    while state.next_due is not None and state.next_due <= now:
        due_upload = min(state.uploads, default=None)
        if due_upload is not None and (state.next_time is None or due_upload[0] <= state.next_time):
            t, packet, text = due_upload
            remaining = tuple(u for u in state.uploads if u is not due_upload)
            events.append(NodeEvent(t, EventKind.UPLOAD_DONE, text, nid, packet))
            state = replace(state, uploads=remaining)
            if state.state is RxPhase.UPLOADING and not remaining:
                state = replace(state, state=RxPhase.LISTENING)
            continue

        t = state.next_time
        packet, result, ok = state.pending
        if state.state is RxPhase.DECODING:
            if ok:
                events.append(NodeEvent(t, EventKind.RX_DECODE_OK, result, nid, packet))
                state = replace(
                    state,
                    state=RxPhase.DISPLAYING,
                    next_time=t + state.delays.display_s,
                    stats=_bump(state.stats, "decoded"),
                )
            else:
                events.append(NodeEvent(t, EventKind.RX_DECODE_FAIL, result, nid, packet))
                state = replace(state, next_time=None, pending=None, state=_idle_phase(state))
        else:  # DISPLAYING
            lcd = render_lcd(result)
            events.append(NodeEvent(t, EventKind.LCD_UPDATE, "\n".join(lcd), nid, packet))
            events.append(NodeEvent(t, EventKind.UPLOAD_START, result, nid, packet))
            state = replace(
                state,
                state=RxPhase.UPLOADING,
                lcd=lcd,
                last_message=result,
                next_time=None,
                pending=None,
                uploads=state.uploads + ((t + state.delays.upload_s, packet, result),),
                stats=_bump(state.stats, "uploads"),
            )

    if arrival is not None:
        if state.state in (RxPhase.LISTENING, RxPhase.UPLOADING):
            events.append(NodeEvent(now, EventKind.RX_DETECT, f"snr={arrival.snr_db:.2f}", nid, arrival.packet))
            stats = _bump(state.stats, "detected")
            try:
                pending = (arrival.packet, decode_frame(arrival.symbols, state.config), True)
            except FrameError as exc:
                pending = (arrival.packet, type(exc).__name__, False)
                stats = _bump(stats, _FAILURE_FIELD[type(exc)])
            state = replace(
                state,
                state=RxPhase.DECODING,
                pending=pending,
                next_time=now + state.delays.decode_s,
                stats=stats,
            )
            # zero decode delay resolves immediately
            state, more = rx_step(state, None, now)
            events.extend(more)
        else:
            events.append(NodeEvent(now, EventKind.RX_DECODE_FAIL, "busy", nid, arrival.packet))
            state = replace(state, stats=_bump(state.stats, "busy_drops"))
    return state, events


def render_lcd(text: str) -> tuple[str, str]:
    """Lay text out on a 16x2 character LCD; non-ASCII and control characters show as '?'."""
    cells = "".join(c if 32 <= ord(c) < 127 else "?" for c in text)[: LCD_COLS * LCD_ROWS]
    return cells[:LCD_COLS].ljust(LCD_COLS), cells[LCD_COLS:].ljust(LCD_COLS)


def lcd_art(lcd: tuple[str, str]) -> str:
    border = "+" + "-" * LCD_COLS + "+"
    return "\n".join([border, *(f"|{row}|" for row in lcd), border])


def end_to_end_latency(start: NodeEvent, end: NodeEvent) -> float:
    """Seconds from frame build start (carried on TxStart) to LcdUpdate or UploadDone."""
    if start.kind is not EventKind.TX_START:
        raise MissingEvent(f"latency needs a TxStart origin, got {start.kind.value}")
    if end.kind not in (EventKind.LCD_UPDATE, EventKind.UPLOAD_DONE):
        raise MissingEvent(f"latency endpoint must be LcdUpdate or UploadDone, got {end.kind.value}")
    if start.packet != end.packet:
        raise MissingEvent(f"events belong to packets {start.packet} and {end.packet}")
    origin = start.timestamp if start.generated_at is None else start.generated_at
    latency = end.timestamp - origin
    if latency < 0:
        raise MissingEvent("endpoint precedes the transmission")
    return latency
