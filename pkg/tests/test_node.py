import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lora_p2p.errors import MissingEvent
from lora_p2p.link import encode_frame
from lora_p2p.node import (
    Arrival,
    Delays,
    EventKind,
    NodeEvent,
    RxNodeState,
    RxPhase,
    TxNodeState,
    TxPhase,
    end_to_end_latency,
    lcd_art,
    read_event_log,
    render_lcd,
    rx_step,
    tx_step,
    write_event_log,
)
from lora_p2p.phy import RadioConfig, SymbolBlock, time_on_air

CFG = RadioConfig()
MSG = "HELLO LORA 0001!"
TOA = time_on_air(CFG, 16)


def test_tx_cycle_timing():
    tx = TxNodeState(CFG, MSG, inter_send_delay=2.0, build_delay=0.1)
    tx, block, ev = tx_step(tx, 0.0)
    assert block is None and tx.state is TxPhase.BUILDING and ev == []
    tx, block, ev = tx_step(tx, 0.1)
    assert block == encode_frame(MSG, CFG)
    assert [e.kind for e in ev] == [EventKind.TX_START]
    assert ev[0].generated_at == 0.0 and ev[0].timestamp == pytest.approx(0.1)
    start = ev[0]
    tx, block, ev = tx_step(tx, tx.next_time)
    assert [e.kind for e in ev] == [EventKind.TX_END]
    assert ev[0].timestamp - start.timestamp == pytest.approx(TOA, abs=1e-12)
    assert tx.sent_count == 1 and tx.state is TxPhase.WAITING
    assert tx.next_time == pytest.approx(0.1 + TOA + 2.0)


def test_tx_catches_up_but_returns_one_block_at_a_time():
    tx = TxNodeState(RadioConfig(sf=7), "x", inter_send_delay=0.5)
    starts = 0
    now = 10.0
    while True:
        tx, block, ev = tx_step(tx, now)
        starts += sum(e.kind is EventKind.TX_START for e in ev)
        if block is None:
            break
    assert starts == tx.sent_count + (tx.state is TxPhase.TRANSMITTING)
    assert starts >= 18


def test_tx_abort_on_oversize_message():
    tx = TxNodeState(CFG, "z" * 300, inter_send_delay=1.0)
    tx, block, ev = tx_step(tx, 0.0)
    assert block is None
    assert [e.kind for e in ev] == [EventKind.TX_ABORT]
    assert tx.state is TxPhase.WAITING and tx.sent_count == 0


def _deliver(rx, block, now, packet=0, snr=5.0):
    return rx_step(rx, Arrival(block, snr, packet), now)


def test_rx_happy_path_event_sequence():
    delays = Delays(decode_s=0.15, display_s=0.05, upload_s=1.58)
    rx = RxNodeState(CFG, delays)
    rx, ev = _deliver(rx, encode_frame(MSG, CFG), 1.0)
    assert [e.kind for e in ev] == [EventKind.RX_DETECT]
    assert rx.state is RxPhase.DECODING
    rx, ev = rx_step(rx, None, 1.15)
    assert [e.kind for e in ev] == [EventKind.RX_DECODE_OK]
    assert ev[0].detail == MSG
    rx, ev = rx_step(rx, None, 1.2)
    assert [e.kind for e in ev] == [EventKind.LCD_UPDATE, EventKind.UPLOAD_START]
    assert ev[0].detail == "HELLO LORA 0001!\n" + " " * 16
    assert rx.lcd == ("HELLO LORA 0001!", " " * 16)
    assert rx.state is RxPhase.UPLOADING
    rx, ev = rx_step(rx, None, 2.79)
    assert [e.kind for e in ev] == [EventKind.UPLOAD_DONE]
    assert ev[0].timestamp == pytest.approx(2.78)
    assert rx.state is RxPhase.LISTENING
    assert rx.stats.detected == rx.stats.decoded == rx.stats.uploads == 1
    assert rx.last_message == MSG


def test_rx_zero_delays_resolve_in_one_step():
    rx = RxNodeState(CFG)
    rx, ev = _deliver(rx, encode_frame(MSG, CFG), 0.0)
    assert [e.kind for e in ev] == [
        EventKind.RX_DETECT,
        EventKind.RX_DECODE_OK,
        EventKind.LCD_UPDATE,
        EventKind.UPLOAD_START,
        EventKind.UPLOAD_DONE,
    ]
    assert rx.state is RxPhase.LISTENING


@pytest.mark.parametrize(
    "mangle,reason,counter",
    [
        (lambda s: s[:4], "HeaderCorrupt", "header_failures"),
        (lambda s: s[:12] + ((s[12] + 3) % 4096,) + s[13:], None, None),
    ],
)
def test_rx_failures_keep_lcd_and_count(mangle, reason, counter):
    rx = RxNodeState(CFG, Delays(decode_s=0.1))
    rx, _ = _deliver(rx, encode_frame(MSG, CFG), 0.0, packet=0)
    rx, _ = rx_step(rx, None, 5.0)
    before = rx.lcd
    bad = SymbolBlock(mangle(encode_frame("OTHER MESSAGE", CFG).symbols), 12)
    rx, ev = _deliver(rx, bad, 10.0, packet=1)
    rx, ev2 = rx_step(rx, None, 10.1)
    fail = [e for e in ev + ev2 if e.kind is EventKind.RX_DECODE_FAIL]
    assert len(fail) == 1
    assert rx.lcd == before
    if reason:
        assert fail[0].detail == reason
        assert getattr(rx.stats, counter) == 1
    else:
        assert fail[0].detail in ("FecFailure", "CrcMismatch")
        assert rx.stats.fec_failures + rx.stats.crc_failures == 1
    assert rx.state is RxPhase.LISTENING


def test_rx_busy_while_decoding():
    rx = RxNodeState(CFG, Delays(decode_s=1.0))
    block = encode_frame(MSG, CFG)
    rx, _ = _deliver(rx, block, 0.0, packet=0)
    rx, ev = _deliver(rx, block, 0.5, packet=1)
    assert [(e.kind, e.detail) for e in ev] == [(EventKind.RX_DECODE_FAIL, "busy")]
    assert rx.stats.busy_drops == 1


def test_rx_accepts_frames_while_uploading():
    rx = RxNodeState(CFG, Delays(upload_s=10.0))
    block = encode_frame(MSG, CFG)
    rx, _ = _deliver(rx, block, 0.0, packet=0)
    assert rx.state is RxPhase.UPLOADING
    rx, ev = _deliver(rx, block, 2.0, packet=1)
    assert EventKind.RX_DECODE_OK in [e.kind for e in ev]
    assert len(rx.uploads) == 2
    rx, ev = rx_step(rx, None, 20.0)
    assert [(e.kind, e.packet) for e in ev] == [(EventKind.UPLOAD_DONE, 0), (EventKind.UPLOAD_DONE, 1)]
    assert rx.state is RxPhase.LISTENING


def test_render_lcd():
    assert render_lcd("") == (" " * 16, " " * 16)
    assert render_lcd("A" * 40) == ("A" * 16, "A" * 16)
    assert render_lcd("héllo\tworld") == ("h?llo?world".ljust(16), " " * 16)
    art = lcd_art(render_lcd("HI"))
    assert art.splitlines()[1] == "|HI              |"


@given(st.text(max_size=64))
def test_render_lcd_is_always_16x2_printable(text):
    rows = render_lcd(text)
    assert len(rows) == 2
    assert all(len(r) == 16 and all(32 <= ord(c) < 127 for c in r) for r in rows)


def test_latency_from_generation_time():
    start = NodeEvent(0.1, EventKind.TX_START, MSG, "tx", 3, generated_at=0.0)
    end = NodeEvent(3.2, EventKind.UPLOAD_DONE, MSG, "rx", 3)
    assert end_to_end_latency(start, end) == pytest.approx(3.2)
    assert end_to_end_latency(NodeEvent(0.1, EventKind.TX_START, MSG, "tx", 3), end) == pytest.approx(3.1)


def test_latency_rejects_bad_pairs():
    start = NodeEvent(1.0, EventKind.TX_START, MSG, "tx", 0, generated_at=0.9)
    with pytest.raises(MissingEvent):
        end_to_end_latency(start, NodeEvent(2.0, EventKind.UPLOAD_DONE, "", "rx", 1))
    with pytest.raises(MissingEvent):
        end_to_end_latency(start, NodeEvent(2.0, EventKind.RX_DETECT, "", "rx", 0))
    with pytest.raises(MissingEvent):
        end_to_end_latency(start, NodeEvent(0.5, EventKind.LCD_UPDATE, "", "rx", 0))
    with pytest.raises(MissingEvent):
        end_to_end_latency(NodeEvent(0, EventKind.TX_END, "", "tx", 0), start)


def test_event_log_roundtrip():
    events = [
        NodeEvent(0.1, EventKind.TX_START, MSG, "tx", 0, 0.0),
        NodeEvent(1.5, EventKind.RX_DECODE_FAIL, "busy", "rx", 1),
    ]
    buf = io.StringIO()
    write_event_log(events, buf)
    assert len(buf.getvalue().splitlines()) == 2
    buf.seek(0)
    assert read_event_log(buf) == events
