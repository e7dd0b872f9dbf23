from __future__ import annotations

import random
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ark import dbcoder
from ark.dbcoder import Literal, Match
from ark.errors import CorruptionError, FormatError, MalformedStreamError


def test_parse_empty():
    assert dbcoder.lz77_parse(b"") == []
    assert dbcoder.lz77_expand([]) == b""


def test_parse_abcabc():
    toks = dbcoder.lz77_parse(b"abcabc")
    assert toks == [Literal(97), Literal(98), Literal(99), Match(3, 3)]
    assert dbcoder.lz77_expand(toks) == b"abcabc"


def test_parse_run_of_300():
    toks = dbcoder.lz77_parse(b"a" * 300)
    assert toks == [Literal(97), Match(258, 1), Match(41, 1)]
    assert dbcoder.lz77_expand(toks) == b"a" * 300


def test_expand_overlap():
    assert dbcoder.lz77_expand([Literal(ord("x")), Match(3, 1)]) == b"xxxx"


def test_expand_bad_distance():
    with pytest.raises(MalformedStreamError):
        dbcoder.lz77_expand([Literal(1), Match(3, 2)])


def _naive_longest(data: bytes, pos: int) -> tuple[int, int]:
    best = (0, 0)
    limit = min(dbcoder.MAX_MATCH, len(data) - pos)
    for dist in range(1, min(pos, dbcoder.WINDOW) + 1):
        n = 0
        while n < limit and data[pos - dist + n] == data[pos + n]:
            n += 1
        if n > best[0]:
            best = (n, dist)
    return best


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=400), st.integers(2, 6))
def test_parse_matches_naive_greedy(raw, alphabet):
    # small alphabets force many ties between candidate distances
    data = bytes(b % alphabet for b in raw)
    pos = 0
    for tok in dbcoder.lz77_parse(data):
        length, dist = _naive_longest(data, pos)
        if length >= dbcoder.MIN_MATCH:
            assert tok == Match(length, dist)
            pos += length
        else:
            assert tok == Literal(data[pos])
            pos += 1
    assert pos == len(data)


def test_window_discipline():
    rng = random.Random(3)
    block = bytes(rng.randrange(256) for _ in range(3000))
    data = block + bytes(rng.randrange(256) for _ in range(9000)) + block
    pos = 0
    for tok in dbcoder.lz77_parse(data):
        if isinstance(tok, Match):
            assert 1 <= tok.distance <= min(pos, dbcoder.WINDOW)
            assert dbcoder.MIN_MATCH <= tok.length <= dbcoder.MAX_MATCH
            pos += tok.length
        else:
            pos += 1


def test_probability_update():
    probs = dbcoder.new_model()
    enc = dbcoder.RangeEncoder()
    enc.encode_bit(probs, 0, 0)
    assert probs[0] == 2112
    probs = dbcoder.new_model()
    enc.encode_bit(probs, 0, 1)
    assert probs[0] == 1984


def _roundtrip_bits(bits, slots):
    pe = dbcoder.new_model()
    enc = dbcoder.RangeEncoder(capacity=64)
    for b, s in zip(bits, slots):
        enc.encode_bit(pe, s, b)
    coded = enc.finish()
    pd = dbcoder.new_model()
    dec = dbcoder.RangeDecoder(coded)
    got = [dec.decode_bit(pd, s) for s in slots]
    return got, pe, pd


def test_rc_random_sequences():
    rng = random.Random(7)
    for _ in range(1000):
        n = rng.randrange(0, 200)
        bias = rng.random()
        bits = [int(rng.random() < bias) for _ in range(n)]
        slots = [rng.randrange(4) for _ in range(n)]
        got, pe, pd = _roundtrip_bits(bits, slots)
        assert got == bits
        # model symmetry
        assert np.array_equal(pe, pd)
        assert pe.min() >= 1 and pe.max() <= 4095


def test_rc_single_zero_and_empty():
    got, _, _ = _roundtrip_bits([0], [0])
    assert got == [0]
    enc = dbcoder.RangeEncoder()
    assert enc.finish() == b""


def test_probabilities_stay_in_range():
    probs = dbcoder.new_model()
    enc = dbcoder.RangeEncoder()
    for _ in range(2000):
        enc.encode_bit(probs, 0, 0)
        enc.encode_bit(probs, 1, 1)
    assert 1 <= probs[1] <= probs[0] <= 4095


def test_empty_container():
    c = dbcoder.compress(b"")
    assert c == b"ULDB\x01" + struct.pack("<II", 0, 0)
    assert dbcoder.decompress(c) == b""


@settings(max_examples=80, deadline=None)
@given(st.binary(max_size=3000))
def test_roundtrip_property(data):
    assert dbcoder.decompress(dbcoder.compress(data)) == data


@pytest.mark.parametrize("n", [1, 2, 255, 4096, 65537, 1 << 20])
def test_roundtrip_random_sizes(n):
    rng = np.random.default_rng(n)
    # mix random and repetitive content so both token kinds appear
    data = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
    data = data[: n // 2] + data[: n - n // 2]
    assert dbcoder.decompress(dbcoder.compress(data)) == data


def test_determinism_and_model_symmetry():
    data = b"INSERT INTO t VALUES (1, 'abc');\n" * 200 + bytes(range(256))
    assert dbcoder.compress(data) == dbcoder.compress(data)
    kinds, aval, bval = dbcoder._parse_arrays(data)
    pe = dbcoder.new_model()
    dbcoder.encode_tokens(kinds, aval, bval, pe)
    pd = dbcoder.new_model()
    assert dbcoder.decompress(dbcoder.compress(data), probs=pd) == data
    assert np.array_equal(pe, pd)


def test_flipped_checksum():
    c = bytearray(dbcoder.compress(b"hello hello hello"))
    c[9] ^= 0x01
    with pytest.raises(CorruptionError):
        dbcoder.decompress(bytes(c))


def test_bad_magic_and_version():
    c = dbcoder.compress(b"xyz")
    with pytest.raises(FormatError):
        dbcoder.decompress(b"ULDX" + c[4:])
    with pytest.raises(FormatError):
        dbcoder.decompress(c[:4] + b"\x02" + c[5:])
    with pytest.raises(FormatError):
        dbcoder.decompress(c[:8])


def test_invalid_distance_detected():
    # a lone match token with distance 1 at position 0 is illegal
    kinds = np.array([1], np.uint8)
    coded = dbcoder.encode_tokens(kinds, np.array([3], np.int32), np.array([1], np.int32))
    c = b"ULDB\x01" + struct.pack("<II", 3, 0) + coded
    with pytest.raises(MalformedStreamError):
        dbcoder.decompress(c)


def test_compression_ratio_on_dump():
    import lzma
    from corpus import lineitem_dump

    data = lineitem_dump(1 << 20)
    size = len(dbcoder.compress(data))
    assert size <= 0.35 * len(data)
    assert size <= 2.0 * len(lzma.compress(data, preset=9 | lzma.PRESET_EXTREME))
