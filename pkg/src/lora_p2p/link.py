"""Text <-> symbol framing: header, Hamming-family FEC, CRC-16 and Gray packing.

On-air layout (MSB first everywhere)::

    header  [len:8][cr:3][crc_flag:1][hdr_chk:4][reserved:4]   5 nibbles, always 4/8
    payload UTF-8 bytes, high nibble first
    crc16   CRC-16/CCITT-FALSE of the payload, big-endian      (if enabled)

The nibble stream is cut into LoRa-style blocks so that the symbol count is
exactly the airtime formula's ``n_payload``:

* block 0: 8 symbols carrying ``SF-2`` bits each (bins spaced by 4), i.e.
  ``SF-2`` codewords at 4/8. Header nibbles first, payload fills the rest.
* block i>0: ``4+CR`` symbols carrying ``SF-2*LDRO`` bits each, i.e.
  ``SF-2*LDRO`` codewords at the frame's coding rate.

Codeword bits are concatenated and chopped into per-symbol bit groups; no
interleaver or whitening. A group ``v`` is sent in bin ``gray_decode(v) << shift``
so that an off-by-one bin error flips a single bit.
"""

from __future__ import annotations

import binascii
from dataclasses import dataclass

from .errors import ConfigError, CrcMismatch, FecFailure, HeaderCorrupt, OversizePayload
from .phy import MAX_PAYLOAD, RadioConfig, SymbolBlock, gray_decode, gray_encode

HEADER_NIBBLES = 5
HEADER_CR = 4
FIRST_BLOCK_SYMBOLS = 8


def crc16(payload: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor."""
    return binascii.crc_hqx(bytes(payload), 0xFFFF)


def _header_checksum(bits12: int) -> int:
    # CRC-4/ITU polynomial x^4 + x + 1 over the 12 header bits
    reg = 0
    for i in range(11, -1, -1):
        top = ((reg >> 3) & 1) ^ ((bits12 >> i) & 1)
        reg = (reg << 1) & 0xF
        if top:
            reg ^= 0x3
    return reg


# ---------------------------------------------------------------------------
# FEC

def _hamming_parities(nibble: int) -> tuple[int, int, int]:
    d3, d2, d1, d0 = (nibble >> 3) & 1, (nibble >> 2) & 1, (nibble >> 1) & 1, nibble & 1
    return d3 ^ d2 ^ d0, d3 ^ d1 ^ d0, d2 ^ d1 ^ d0


def _encode_nibble(nibble: int, cr_num: int) -> int:
    if cr_num == 1:
        parity = (nibble ^ (nibble >> 1) ^ (nibble >> 2) ^ (nibble >> 3)) & 1
        return (nibble << 1) | parity
    p = _hamming_parities(nibble)
    word = nibble
    for bit in p[: min(cr_num, 3)]:
        word = (word << 1) | bit
    if cr_num == 4:
        word = (word << 1) | (bin(word).count("1") & 1)
    return word


_ENCODE = {cr: [_encode_nibble(n, cr) for n in range(16)] for cr in range(1, 5)}


def _build_decoder(cr_num: int) -> dict[int, tuple[int, int]]:
    """Map every received word to (nibble, corrected bits); absent means uncorrectable."""
    codewords = {_ENCODE[cr_num][n]: n for n in range(16)}
    table = {cw: (n, 0) for cw, n in codewords.items()}
    if cr_num == 4:
        for cw, n in codewords.items():
            for bit in range(8):
                table[cw ^ (1 << bit)] = (n, 1)
    return table


_DECODE = {cr: _build_decoder(cr) for cr in range(1, 5)}


@dataclass(frozen=True)
class CodedBits:
    bits: tuple[int, ...]
    cr_num: int

    def __post_init__(self):
        if len(self.bits) % (4 + self.cr_num):
            raise ValueError(f"{len(self.bits)} bits is not a multiple of {4 + self.cr_num}")


@dataclass(frozen=True)
class FecResult:
    nibbles: tuple[int, ...]
    corrected: int
    uncorrectable: bool = False


def _word_bits(word: int, width: int) -> list[int]:
    return [(word >> (width - 1 - i)) & 1 for i in range(width)]


def _bits_word(bits) -> int:
    word = 0
    for b in bits:
        word = (word << 1) | b
    return word


def fec_encode(nibbles, cr_num: int) -> CodedBits:
    if cr_num not in _ENCODE:
        raise ConfigError(f"cr_num must be in [1, 4], got {cr_num}")
    width = 4 + cr_num
    bits: list[int] = []
    for n in nibbles:
        if not 0 <= n < 16:
            raise ValueError(f"nibble {n} out of range")
        bits.extend(_word_bits(_ENCODE[cr_num][n], width))
    return CodedBits(tuple(bits), cr_num)


def fec_decode(coded: CodedBits, strict: bool = True) -> FecResult:
    """Decode codewords back to nibbles.

    With ``strict`` (the default) the first uncorrectable codeword raises
    FecFailure; otherwise its raw data bits are kept and the result is flagged.
    """
    width = 4 + coded.cr_num
    table = _DECODE[coded.cr_num]
    nibbles = []
    corrected = 0
    bad = False
    for i in range(0, len(coded.bits), width):
        word = _bits_word(coded.bits[i : i + width])
        hit = table.get(word)
        if hit is None:
            if strict:
                raise FecFailure(f"uncorrectable codeword {word:0{width}b} at CR 4/{width}")
            bad = True
            nibbles.append(word >> coded.cr_num)
            continue
        nibbles.append(hit[0])
        corrected += hit[1]
    return FecResult(tuple(nibbles), corrected, bad)


# ---------------------------------------------------------------------------
# Frames

@dataclass(frozen=True)
class FrameHeader:
    payload_len: int
    cr_num: int
    crc_enabled: bool

    def nibbles(self) -> list[int]:
        bits12 = (self.payload_len << 4) | (self.cr_num << 1) | int(self.crc_enabled)
        chk = _header_checksum(bits12)
        word = (bits12 << 8) | (chk << 4)
        return [(word >> s) & 0xF for s in (16, 12, 8, 4, 0)]

    @classmethod
    def from_nibbles(cls, nibbles) -> FrameHeader:
        word = _bits_word_nibbles(nibbles)
        bits12 = word >> 8
        chk = (word >> 4) & 0xF
        if word & 0xF:
            raise HeaderCorrupt("reserved header bits set")
        if _header_checksum(bits12) != chk:
            raise HeaderCorrupt("header checksum mismatch")
        cr_num = (bits12 >> 1) & 0x7
        if not 1 <= cr_num <= 4:
            raise HeaderCorrupt(f"header coding rate index {cr_num} invalid")
        return cls(payload_len=bits12 >> 4, cr_num=cr_num, crc_enabled=bool(bits12 & 1))


def _bits_word_nibbles(nibbles) -> int:
    word = 0
    for n in nibbles:
        word = (word << 4) | n
    return word


@dataclass(frozen=True)
class Frame:
    payload: bytes
    header: FrameHeader
    crc16: int | None
    corrected_bits: int = 0

    def __post_init__(self):
        if self.header.payload_len != len(self.payload):
            raise ValueError("header length disagrees with payload")
        if self.crc16 is not None and crc16(self.payload) != self.crc16:
            raise ValueError("stored CRC does not match payload")

    @property
    def text(self) -> str:
        return self.payload.decode("utf-8", errors="replace")


def _bytes_to_nibbles(data: bytes) -> list[int]:
    out = []
    for b in data:
        out.extend((b >> 4, b & 0xF))
    return out


def _nibbles_to_bytes(nibbles) -> bytes:
    return bytes((nibbles[i] << 4) | nibbles[i + 1] for i in range(0, len(nibbles), 2))


def _layout(cfg: RadioConfig) -> tuple[int, int]:
    """(nibbles in block 0, nibbles per later block)."""
    return cfg.sf - 2, cfg.sf - 2 * int(cfg.ldro)


def _pack(bits, bits_per_symbol: int, cfg: RadioConfig) -> list[int]:
    shift = cfg.sf - bits_per_symbol
    out = []
    for i in range(0, len(bits), bits_per_symbol):
        value = _bits_word(bits[i : i + bits_per_symbol])
        if cfg.gray_mapping:
            value = gray_decode(value, bits_per_symbol)
        out.append(value << shift)
    return out


def _unpack(symbols, bits_per_symbol: int, cfg: RadioConfig) -> list[int]:
    shift = cfg.sf - bits_per_symbol
    mask = (1 << bits_per_symbol) - 1
    half = (1 << shift) >> 1
    bits: list[int] = []
    for s in symbols:
        value = ((s + half) >> shift) & mask
        if cfg.gray_mapping:
            value = gray_encode(value, bits_per_symbol)
        bits.extend(_word_bits(value, bits_per_symbol))
    return bits


def encode_frame(text: str, cfg: RadioConfig) -> SymbolBlock:
    payload = text.encode("utf-8")
    if len(payload) > MAX_PAYLOAD:
        raise OversizePayload(f"message is {len(payload)} B, limit {MAX_PAYLOAD} B")
    stream = _bytes_to_nibbles(payload)
    if cfg.crc_enabled:
        stream += _bytes_to_nibbles(crc16(payload).to_bytes(2, "big"))
    if cfg.explicit_header:
        stream = FrameHeader(len(payload), cfg.cr_num, cfg.crc_enabled).nibbles() + stream

    first_n, block_n = _layout(cfg)
    first = stream[:first_n] + [0] * max(0, first_n - len(stream))
    rest = stream[first_n:]
    rest += [0] * (-len(rest) % block_n)

    symbols = _pack(fec_encode(first, HEADER_CR).bits, cfg.sf - 2, cfg)
    if rest:
        symbols += _pack(fec_encode(rest, cfg.cr_num).bits, block_n, cfg)
    return SymbolBlock(tuple(symbols), cfg.sf)


def _decode_words(bits, cr_num: int, count: int) -> tuple[list[int], int]:
    result = fec_decode(CodedBits(tuple(bits[: count * (4 + cr_num)]), cr_num))
    return list(result.nibbles), result.corrected


def parse_frame(symbols: SymbolBlock, cfg: RadioConfig, payload_len: int | None = None) -> Frame:
    """Full receive path. ``payload_len`` is required only in implicit-header mode."""
    if symbols.sf != cfg.sf:
        raise ConfigError(f"symbol block is SF{symbols.sf}, radio is SF{cfg.sf}")
    if len(symbols) < FIRST_BLOCK_SYMBOLS:
        raise HeaderCorrupt(f"only {len(symbols)} symbols, header needs {FIRST_BLOCK_SYMBOLS}")
    first_n, block_n = _layout(cfg)
    first_bits = _unpack(symbols.symbols[:FIRST_BLOCK_SYMBOLS], cfg.sf - 2, cfg)

    corrected = 0
    if cfg.explicit_header:
        try:
            hdr_nibbles, corrected = _decode_words(first_bits, HEADER_CR, HEADER_NIBBLES)
        except FecFailure as exc:
            raise HeaderCorrupt(f"header codeword uncorrectable: {exc}") from exc
        header = FrameHeader.from_nibbles(hdr_nibbles)
        skip = HEADER_NIBBLES
    else:
        if payload_len is None:
            raise ConfigError("implicit-header frames need payload_len")
        header = FrameHeader(payload_len, cfg.cr_num, cfg.crc_enabled)
        skip = 0

    needed = 2 * header.payload_len + (4 if header.crc_enabled else 0)
    in_first = min(needed, first_n - skip)
    in_rest = needed - in_first
    n_blocks = -(-in_rest // block_n)
    expected = FIRST_BLOCK_SYMBOLS + n_blocks * (4 + header.cr_num)
    if len(symbols) < expected:
        raise HeaderCorrupt(f"header implies {expected} symbols, got {len(symbols)}")

    words = first_bits[skip * 8 : (skip + in_first) * 8]
    nibbles, fixed = _decode_words(words, HEADER_CR, in_first)
    corrected += fixed
    if in_rest:
        rest_bits = _unpack(symbols.symbols[FIRST_BLOCK_SYMBOLS:expected], block_n, cfg)
        more, fixed = _decode_words(rest_bits, header.cr_num, in_rest)
        nibbles += more
        corrected += fixed

    payload = _nibbles_to_bytes(nibbles[: 2 * header.payload_len])
    stored = None
    if header.crc_enabled:
        stored = int.from_bytes(_nibbles_to_bytes(nibbles[2 * header.payload_len :]), "big")
        actual = crc16(payload)
        if actual != stored:
            raise CrcMismatch(payload, stored, actual)
    return Frame(payload, header, stored, corrected)


def decode_frame(symbols: SymbolBlock, cfg: RadioConfig, payload_len: int | None = None) -> str:
    return parse_frame(symbols, cfg, payload_len).text
