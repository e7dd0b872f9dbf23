"""Archive compressor: greedy LZ77 tokens coded by an adaptive binary range coder.

Container layout (little-endian)::

    0   4  magic "ULDB"
    4   1  version (1)
    5   4  original length
    9   4  CRC-32 of the original data
    13  .. range-coded token stream

Token coding: one ``is_match`` decision, then either the literal octet as 8
decisions down a 255-slot bit tree, or ``length-3`` (8 decisions, 255-slot
tree) followed by ``distance-1`` (13 decisions, 8191-slot tree). There is no
end-of-stream symbol; the decoder stops after ``original length`` octets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from ._jit import njit
from .bitcore import crc32
from .errors import CorruptionError, FormatError, MalformedStreamError

MAGIC = b"ULDB"
VERSION = 1
HEADER_SIZE = 13

WINDOW = 8192
MIN_MATCH = 3
MAX_MATCH = 258

PROB_BITS = 12
PROB_INIT = 1 << (PROB_BITS - 1)
MOVE_BITS = 5
TOP = 1 << 24

# probability slot layout inside one flat model array
SLOT_MATCH = 0
SLOT_LIT = 1
SLOT_LEN = SLOT_LIT + 255
SLOT_DIST = SLOT_LEN + 255
MODEL_SIZE = SLOT_DIST + 8191

_HASH_BITS = 16


class Literal(NamedTuple):
    value: int


class Match(NamedTuple):
    length: int
    distance: int


Token = Union[Literal, Match]


# ---------------------------------------------------------------- LZ77 ----

@njit
def _parse_kernel(data):
    n = data.shape[0]
    kinds = np.zeros(n, np.uint8)
    aval = np.zeros(n, np.int32)
    bval = np.zeros(n, np.int32)
    head = np.full(1 << _HASH_BITS, -1, np.int64)
    prev = np.full(max(n, 1), -1, np.int64)
    mask = (1 << _HASH_BITS) - 1
    ntok = 0
    pos = 0
    inserted = 0

    while pos < n:
        # keep the hash chains current up to pos
        while inserted < pos and inserted + 2 < n:
            h = ((data[inserted] << 10) ^ (data[inserted + 1] << 5) ^ data[inserted + 2]) & mask
            prev[inserted] = head[h]
            head[h] = inserted
            inserted += 1
        if inserted < pos:
            inserted = pos

        best_len = 0
        best_dist = 0
        if pos + MIN_MATCH <= n:
            limit = min(MAX_MATCH, n - pos)
            h = ((data[pos] << 10) ^ (data[pos + 1] << 5) ^ data[pos + 2]) & mask
            cand = head[h]
            while cand >= 0 and pos - cand <= WINDOW:
                length = 0
                while length < limit and data[cand + length] == data[pos + length]:
                    length += 1
                if length > best_len:
                    best_len = length
                    best_dist = pos - cand
                    if length == limit:
                        break
                cand = prev[cand]

        if best_len >= MIN_MATCH:
            kinds[ntok] = 1
            aval[ntok] = best_len
            bval[ntok] = best_dist
            pos += best_len
        else:
            aval[ntok] = data[pos]
            pos += 1
        ntok += 1
    return kinds[:ntok], aval[:ntok], bval[:ntok]


def _parse_arrays(data: bytes):
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    return _parse_kernel(arr)


def lz77_parse(data: bytes) -> list[Token]:
    """Greedy longest-match parse (window 8192, match 3..258, nearest on ties)."""
    kinds, aval, bval = _parse_arrays(data)
    return [Match(int(a), int(b)) if k else Literal(int(a))
            for k, a, b in zip(kinds.tolist(), aval.tolist(), bval.tolist())]


def lz77_expand(tokens: Sequence[Token]) -> bytes:
    """Expand tokens; overlapping copies (distance < length) are resolved byte by byte."""
    out = bytearray()
    for tok in tokens:
        if isinstance(tok, Match):
            length, dist = tok
            if dist < 1 or dist > len(out):
                raise MalformedStreamError(
                    f"match distance {dist} exceeds {len(out)} produced octets")
            start = len(out) - dist
            if dist >= length:
                out += out[start:start + length]
            else:
                for i in range(length):
                    out.append(out[start + i])
        else:
            out.append(tok.value)
    return bytes(out)


# ---------------------------------------------------------- range coder ----
# encoder state: [low, range, cache, cache_size, out_pos]
# decoder state: [range, code, in_pos]

@njit
def _shift_low(st, out):
    low = st[0]
    if low < 0xFF000000 or low > 0xFFFFFFFF:
        carry = low >> 32
        temp = st[2]
        while True:
            out[st[4]] = (temp + carry) & 0xFF
            st[4] += 1
            temp = 0xFF
            st[3] -= 1
            if st[3] == 0:
                break
        st[2] = (low >> 24) & 0xFF
    st[3] += 1
    st[0] = (low & 0x00FFFFFF) << 8


@njit
def _enc_bit(st, out, probs, slot, bit):
    p = probs[slot]
    bound = (st[1] >> PROB_BITS) * p
    if bit == 0:
        st[1] = bound
        probs[slot] = p + (((1 << PROB_BITS) - p) >> MOVE_BITS)
    else:
        st[0] += bound
        st[1] -= bound
        probs[slot] = p - (p >> MOVE_BITS)
    while st[1] < TOP:
        st[1] <<= 8
        _shift_low(st, out)


@njit
def _dec_bit(st, data, probs, slot):
    p = probs[slot]
    bound = (st[0] >> PROB_BITS) * p
    if st[1] < bound:
        st[0] = bound
        probs[slot] = p + (((1 << PROB_BITS) - p) >> MOVE_BITS)
        bit = 0
    else:
        st[1] -= bound
        st[0] -= bound
        probs[slot] = p - (p >> MOVE_BITS)
        bit = 1
    while st[0] < TOP:
        st[0] <<= 8
        nxt = 0
        if st[2] < data.shape[0]:
            nxt = data[st[2]]
        st[2] += 1
        st[1] = ((st[1] << 8) | nxt) & 0xFFFFFFFF
    return bit


def _new_encoder_state():
    return np.array([0, 0xFFFFFFFF, 0, 1, 0], dtype=np.int64)


def _finish(st, out) -> bytes:
    for _ in range(5):
        _shift_low(st, out)
    coded = out[1:st[4]].tobytes()  # first octet is always the zero cache byte
    return coded.rstrip(b"\x00")  # decoder refills zeros past the end


def _decoder_state(coded: np.ndarray):
    code = 0
    for i in range(4):
        code = (code << 8) | (int(coded[i]) if i < coded.shape[0] else 0)
    return np.array([0xFFFFFFFF, code, 4], dtype=np.int64)


@dataclass
class RangeEncoder:
    """Bit-at-a-time range encoder for ad-hoc decision sequences."""

    capacity: int = 1 << 16

    def __post_init__(self):
        self.state = _new_encoder_state()
        self.out = np.zeros(self.capacity, dtype=np.uint8)

    def encode_bit(self, probs: np.ndarray, slot: int, bit: int) -> None:
        if self.state[4] + 16 >= self.out.shape[0]:
            self.out = np.concatenate([self.out, np.zeros_like(self.out)])
        _enc_bit(self.state, self.out, probs, slot, bit)

    def finish(self) -> bytes:
        return _finish(self.state, self.out)


class RangeDecoder:
    """Mirror of :class:`RangeEncoder`; reads zeros past the end of input."""

    def __init__(self, coded: bytes):
        self.data = np.frombuffer(bytes(coded), dtype=np.uint8)
        self.state = _decoder_state(self.data)

    def decode_bit(self, probs: np.ndarray, slot: int) -> int:
        return int(_dec_bit(self.state, self.data, probs, slot))


def new_model() -> np.ndarray:
    return np.full(MODEL_SIZE, PROB_INIT, dtype=np.int64)


# ------------------------------------------------------- token stream ----

@njit
def _encode_tree(st, out, probs, base, value, nbits):
    m = 1
    for i in range(nbits - 1, -1, -1):
        b = (value >> i) & 1
        _enc_bit(st, out, probs, base + m - 1, b)
        m = (m << 1) | b


@njit
def _decode_tree(st, data, probs, base, nbits):
    m = 1
    for _ in range(nbits):
        m = (m << 1) | _dec_bit(st, data, probs, base + m - 1)
    return m - (1 << nbits)


@njit
def _encode_tokens(kinds, aval, bval, probs, out):
    st = np.zeros(5, np.int64)
    st[1] = 0xFFFFFFFF
    st[3] = 1
    for t in range(kinds.shape[0]):
        if kinds[t]:
            _enc_bit(st, out, probs, SLOT_MATCH, 1)
            _encode_tree(st, out, probs, SLOT_LEN, aval[t] - MIN_MATCH, 8)
            _encode_tree(st, out, probs, SLOT_DIST, bval[t] - 1, 13)
        else:
            _enc_bit(st, out, probs, SLOT_MATCH, 0)
            _encode_tree(st, out, probs, SLOT_LIT, aval[t], 8)
    return st


@njit
def _decode_tokens(coded, length, probs, out):
    """Returns 0 on success, 1 when a match reaches before the stream start
    or past the declared length."""
    st = np.zeros(3, np.int64)
    st[0] = 0xFFFFFFFF
    code = 0
    for i in range(4):
        code <<= 8
        if i < coded.shape[0]:
            code |= coded[i]
    st[1] = code
    st[2] = 4
    pos = 0
    while pos < length:
        if _dec_bit(st, coded, probs, SLOT_MATCH):
            mlen = _decode_tree(st, coded, probs, SLOT_LEN, 8) + MIN_MATCH
            dist = _decode_tree(st, coded, probs, SLOT_DIST, 13) + 1
            if dist > pos or pos + mlen > length:
                return 1
            for i in range(mlen):
                out[pos] = out[pos - dist]
                pos += 1
        else:
            out[pos] = _decode_tree(st, coded, probs, SLOT_LIT, 8)
            pos += 1
    return 0


def encode_tokens(kinds, aval, bval, probs=None) -> bytes:
    if probs is None:
        probs = new_model()
    # worst case is ~7 bits per decision (probabilities never leave [31, 4065])
    nmatch = int(kinds.sum())
    out = np.zeros(9 * (kinds.shape[0] - nmatch) + 21 * nmatch + 64, dtype=np.uint8)
    st = _encode_tokens(kinds, aval, bval, probs, out)
    return _finish(st, out)


def compress(data: bytes) -> bytes:
    """Compress ``data`` into a self-describing ArchiveContainer."""
    data = bytes(data)
    if len(data) >= 1 << 32:
        raise ValueError("input too large for a 32-bit length field")
    kinds, aval, bval = _parse_arrays(data)
    coded = encode_tokens(kinds, aval, bval)
    return MAGIC + bytes([VERSION]) + struct.pack("<II", len(data), crc32(data)) + coded


def parse_container(container: bytes) -> tuple[int, int, bytes]:
    """Return ``(original_length, checksum, coded)`` after validating the header."""
    container = bytes(container)
    if len(container) < HEADER_SIZE or container[:4] != MAGIC:
        raise FormatError("not a ULDB container (bad magic)")
    if container[4] != VERSION:
        raise FormatError(f"unsupported container version {container[4]}")
    length, checksum = struct.unpack_from("<II", container, 5)
    return length, checksum, container[HEADER_SIZE:]


def decompress(container: bytes, probs: np.ndarray | None = None) -> bytes:
    """Inverse of :func:`compress`; verifies the CRC of the result."""
    length, checksum, coded = parse_container(container)
    if probs is None:
        probs = new_model()
    out = np.zeros(length, dtype=np.uint8)
    status = _decode_tokens(np.frombuffer(coded, dtype=np.uint8), length, probs, out)
    if status:
        raise MalformedStreamError("match references data outside the decoded range")
    data = out.tobytes()
    if crc32(data) != checksum:
        raise CorruptionError(
            f"CRC mismatch: stored 0x{checksum:08X}, decoded 0x{crc32(data):08X}")
    return data
