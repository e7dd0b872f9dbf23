"""Bit packing and CRC-32 primitives shared by the codecs.

Bits are packed MSB-first within each octet. The CRC is the reflected
CRC-32 (polynomial 0xEDB88320, init and final XOR 0xFFFFFFFF).
"""

from __future__ import annotations

import zlib
from typing import Iterable, Sequence

import numpy as np


def pack_bits(bits: Sequence[int]) -> bytes:
    """Pack a bit sequence into octets; the final partial octet is zero-padded."""
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.size == 0:
        return b""
    return np.packbits(arr, bitorder="big").tobytes()


def unpack_bits(data: bytes | Sequence[int], n: int) -> list[int]:
    """Return the first ``n`` bits of ``data`` in MSB-first order."""
    buf = bytes(data)
    if n < 0 or n > 8 * len(buf):
        raise ValueError(f"cannot unpack {n} bits from {len(buf)} octets")
    arr = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="big")
    return arr[:n].tolist()


def crc32(data: bytes | Iterable[int], crc: int = 0) -> int:
    """CRC-32/ISO-HDLC of ``data``; ``crc`` continues a previous result."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        data = bytes(data)
    return zlib.crc32(data, crc) & 0xFFFFFFFF
