from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ark import dbcoder, ecc, mocoder, olonys, scansim
from ark.bitcore import crc32
from ark.dynarisc import MEM_SIZE, dr_assemble
from ark.errors import BootstrapError, LettersError
from ark.verisc import ENTRY

from corpus import lineitem_dump

GEOM = mocoder.PROFILES["test"]


def hex_letters(data: bytes) -> str:
    """Second route to the letter mapping: hex digits relabelled 0->P ... F->A."""
    return data.hex().translate(str.maketrans("0123456789abcdef", "PONMLKJIHGFEDCBA"))


@pytest.fixture(scope="module")
def gs():
    return olonys.guests()


@pytest.fixture(scope="module")
def doc(gs):
    return olonys.bootstrap_generate(gs[olonys.DREMU], gs[olonys.MOCDEC])


def corrupt_render(payload: bytes, header: mocoder.EmblemHeader, nerr: int, cell_px: int,
                   seed: int, geom=GEOM) -> np.ndarray:
    """Render an emblem with ``nerr`` random octet errors in every inner codeword."""
    rng = np.random.default_rng(seed)
    n = geom.n_codewords
    msgs = np.zeros(n * ecc.K, np.uint8)
    msgs[:len(payload)] = np.frombuffer(payload, np.uint8)
    cws = ecc.rs_encode_blocks(msgs.reshape(n, ecc.K))
    for j in range(n):
        pos = rng.choice(ecc.N, nerr, replace=False)
        cws[j, pos] ^= rng.integers(1, 256, nerr).astype(np.uint8)
    stream = np.concatenate([np.frombuffer(mocoder.header_block(header), np.uint8), cws.T.reshape(-1)])
    bits = np.unpackbits(stream, bitorder="big")
    bits = np.concatenate([bits, np.arange(geom.data_cells // 2 - bits.size) % 2 == 0]).astype(np.uint8)
    cells = mocoder.template(geom).astype(np.uint8)
    rows, cols = mocoder.serpentine(geom)
    cells[rows, cols] = mocoder.dm2d_encode(bits)
    return mocoder.emblem_render(cells, geom, cell_px)


def _emblem(payload: bytes, **kw) -> np.ndarray:
    return mocoder.encode_image(payload, mocoder.EmblemHeader(payload_length=len(payload), **kw), GEOM)


# ---------------------------------------------------------------- letters ----

def test_letters_examples():
    assert olonys.letters_encode(b"\xf0") == "AP"
    assert olonys.letters_encode(b"\x00") == "PP"
    assert olonys.letters_decode("AP") == b"\xf0"
    assert olonys.letters_decode("A P\n") == b"\xf0"


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=300))
def test_letters_round_trip(data):
    text = olonys.letters_encode(data)
    assert text.replace("\n", "") == hex_letters(data)
    assert all(len(line) <= olonys.LETTERS_PER_LINE for line in text.splitlines())
    assert olonys.letters_decode(text) == data


def test_letters_errors():
    with pytest.raises(LettersError) as exc:
        olonys.letters_decode("AQ")
    assert exc.value.position == 1
    with pytest.raises(LettersError):
        olonys.letters_decode("ABC")
    with pytest.raises(LettersError):
        olonys.letters_decode("ab")


# ----------------------------------------------------------------- guests ----

def test_assets_match_generators():
    for name, text in olonys.generated_sources().items():
        assert olonys.asset_text(name) == text, f"{name} is stale; run olonys.regenerate_assets()"


def test_guest_images_fit(gs):
    assert ENTRY + len(gs[olonys.DREMU].data) // 2 <= olonys.GUEST_BASE
    for gid in (olonys.MOCDEC, olonys.DBDEC):
        assert 0x0100 + len(gs[gid].data) <= MEM_SIZE
    assert gs[olonys.DBDEC].crc32 == crc32(gs[olonys.DBDEC].data)
    # mocoder-dec keeps its tables from 0x2000 upward; the code must end below them
    from ark import _mocdec
    assert dr_assemble(olonys.guest_source(olonys.MOCDEC)).symbols["code_end"] <= _mocdec.EXP


# -------------------------------------------------------------- bootstrap ----

def test_bootstrap_round_trip(gs, doc):
    dremu, moc = olonys.bootstrap_parse(doc)
    assert dremu == gs[olonys.DREMU] and moc == gs[olonys.MOCDEC]
    assert max(len(line) for line in doc.splitlines()) <= 78
    assert all(32 <= ord(ch) < 127 for ch in doc.replace("\n", ""))


def test_bootstrap_letter_blocks_and_checks(gs, doc):
    lines = doc.splitlines()
    for start, end, gid in ((2, 3, olonys.DREMU), (3, 4, olonys.MOCDEC)):
        body = lines[lines.index(olonys.MARKERS[start]) + 2:lines.index(olonys.MARKERS[end])]
        block = "".join(body)
        assert set(block) <= set("ABCDEFGHIJKLMNOP")
        assert block == hex_letters(gs[gid].data)
    checks = [ln for ln in lines if ln.startswith("BLOCK ")]
    assert checks[0].endswith(hex_letters(struct.pack(">I", gs[olonys.DREMU].crc32)))


def test_bootstrap_verify(doc):
    rep = olonys.bootstrap_verify(doc)
    assert rep.matches_build and rep.max_columns <= 78 and rep.pseudocode_lines <= 500
    print(rep.text())


@pytest.mark.parametrize("block, section", [(2, "block A"), (3, "block B")])
def test_bootstrap_corrupted_letter(doc, block, section):
    lines = doc.splitlines()
    k = lines.index(olonys.MARKERS[block]) + 5
    lines[k] = ("B" if lines[k][0] != "B" else "C") + lines[k][1:]
    with pytest.raises(BootstrapError) as exc:
        olonys.bootstrap_parse("\n".join(lines))
    assert exc.value.section == section


def test_bootstrap_reordered_sections(doc):
    a = doc.index(olonys.MARKERS[2])
    b = doc.index(olonys.MARKERS[3])
    c = doc.index(olonys.MARKERS[4])
    swapped = doc[:a] + doc[b:c] + doc[a:b] + doc[c:]
    with pytest.raises(BootstrapError, match="order"):
        olonys.bootstrap_parse(swapped)


def test_bootstrap_missing_marker(doc):
    with pytest.raises(BootstrapError) as exc:
        olonys.bootstrap_parse(doc.replace(olonys.MARKERS[4], "SECTION FIVE"))
    assert exc.value.section == "check values"


def test_bootstrap_rejects_wrong_ids(gs):
    with pytest.raises(ValueError):
        olonys.bootstrap_generate(gs[olonys.MOCDEC], gs[olonys.DREMU])


# ------------------------------------------------------------ nested runs ----

def test_nested_echo(gs):
    echo = dr_assemble(olonys.asset_text("echo.dra")).image
    data = bytes(range(200))
    nested = olonys.nested_run(gs[olonys.DREMU], echo, data)
    native = olonys.native_run(echo, data)
    assert nested.output == native.output == data
    assert nested.exit_code == native.exit_code == 0


def test_nested_trap_code(gs):
    res = olonys.nested_run(gs[olonys.DREMU], b"\xff\xff")
    assert res.exit_code == 0xDE02 and res.guest_trap == "invalid opcode"
    assert olonys.native_run(b"\xff\xff").exit_code == 0xDE02
    res = olonys.nested_run(gs[olonys.DREMU], dr_assemble("LDI R0,#0x8000\nMOVE D0,R0\nLDM R1,[D0]").image)
    assert res.guest_trap == "memory access >= 0x8000"


def test_nested_dbdec_random_4k(gs):
    data = np.random.default_rng(4).integers(0, 256, 4096, dtype=np.uint8).tobytes()
    blob = dbcoder.compress(data)
    ratio, native, nested = olonys.step_overhead(gs[olonys.DBDEC], blob)
    assert nested.output == native.output == dbcoder.decompress(blob) == data
    print(f"dremu overhead: {ratio:.1f} VeRisc steps per guest instruction")
    assert ratio <= 400


def test_nested_determinism(gs):
    blob = dbcoder.compress(b"nested determinism " * 50)
    runs = [olonys.nested_run(gs[olonys.DREMU], gs[olonys.DBDEC], blob) for _ in range(2)]
    assert runs[0] == runs[1]


# ------------------------------------------------------ dbcoder-dec guest ----

def test_dbdec_contract_corpus():
    rng = np.random.default_rng(11)
    corpus = [b"", b"a", b"abc" * 3000, rng.integers(0, 256, 5000, dtype=np.uint8).tobytes(),
              bytes(20000), lineitem_dump(30000, seed=3)]
    rep = olonys.guest_contract_check(olonys.DBDEC, corpus)
    assert rep.ok, rep.mismatches
    assert rep.items == len(corpus)


def test_dbdec_exit_codes(gs):
    blob = bytearray(dbcoder.compress(b"some text to protect " * 20))
    assert olonys.native_run(gs[olonys.DBDEC], b"XLDB" + bytes(blob[4:])).exit_code == 1
    bad = bytearray(blob)
    bad[9] ^= 1                                   # stored crc32
    assert olonys.native_run(gs[olonys.DBDEC], bytes(bad)).exit_code == 2


# ------------------------------------------------------ mocoder-dec guest ----

def test_scan_bundle_layout():
    img = np.arange(6, dtype=np.uint8).reshape(2, 3)
    blob = olonys.make_scan_bundle([img, img.T])
    assert blob[:6] == b"ULSC\x02\x00"
    assert blob[6:22] == struct.pack("<IHHIHH", 22, 3, 2, 28, 2, 3)
    assert blob[22:] == bytes(range(6)) + bytes([0, 3, 1, 4, 2, 5])
    back = olonys.parse_scan_bundle(blob)
    assert np.array_equal(back[0], img) and np.array_equal(back[1], img.T)


def test_split_guest_records():
    out = struct.pack("<I", 2) + b"hi" + b"\xff" * 4 + struct.pack("<I", 0)
    assert olonys.split_guest_records(out, 3) == [b"hi", None, b""]


def test_mocdec_clean_render_nested(gs):
    payload = bytes(range(256)) * 4
    img = _emblem(payload, group_id=7, index_in_group=2)
    res = olonys.nested_run(gs[olonys.DREMU], gs[olonys.MOCDEC], olonys.make_scan_bundle([img]))
    assert res.exit_code == 0
    assert olonys.split_guest_records(res.output, 1) == [mocoder.decode_image(img, GEOM)[1]]


@pytest.mark.parametrize("cell_px, shift", [(2, (0, 0)), (3, (7, 3)), (4, (0, 11)), (5, (13, 0))])
def test_mocdec_scale_and_translation(cell_px, shift):
    payload = np.random.default_rng(cell_px).integers(0, 256, 1500, dtype=np.uint8).tobytes()
    img = mocoder.emblem_render(mocoder.emblem_encode(
        payload, mocoder.EmblemHeader(payload_length=1500), GEOM), GEOM, cell_px)
    canvas = np.full((img.shape[0] + 20, img.shape[1] + 20), 255, np.uint8)
    canvas[shift[0]:shift[0] + img.shape[0], shift[1]:shift[1] + img.shape[1]] = img
    rep = olonys.guest_contract_check(olonys.MOCDEC, [[canvas]])
    assert rep.ok


@pytest.mark.parametrize("nerr", [8, 16])
def test_mocdec_corrects_like_native(nerr):
    payload = np.random.default_rng(nerr).integers(0, 256, 2500, dtype=np.uint8).tobytes()
    img = corrupt_render(payload, mocoder.EmblemHeader(payload_length=2500), nerr, 4, seed=nerr)
    assert mocoder.decode_image(img, GEOM)[1] == payload
    rep = olonys.guest_contract_check(olonys.MOCDEC, [[img]])
    assert rep.ok


def test_mocdec_beyond_capacity_reports_failure(gs):
    img = corrupt_render(bytes(100), mocoder.EmblemHeader(payload_length=100), 17, 4, seed=5)
    out = olonys.native_run(gs[olonys.MOCDEC], olonys.make_scan_bundle([img]))
    assert out.output == b"\xff" * 4
    assert olonys.native_mocoder_records([img]) == b"\xff" * 4


def test_mocdec_rotation_out_of_scope(gs):
    img = _emblem(b"rotated")
    rot = scansim.distort(img, scansim.DistortionParams(rotation=1.5))
    assert mocoder.decode_image(rot, GEOM)[1] == b"rotated"
    out = olonys.native_run(gs[olonys.MOCDEC], olonys.make_scan_bundle([rot]))
    assert out.exit_code == 0 and out.output == b"\xff" * 4


def test_mocdec_bundle_edge_cases(gs):
    assert olonys.native_run(gs[olonys.MOCDEC], b"XLSC\x00\x00").exit_code == 1
    res = olonys.native_run(gs[olonys.MOCDEC], olonys.make_scan_bundle([]))
    assert (res.output, res.exit_code) == (b"", 0)


def test_mocdec_multi_image_bundle():
    imgs = [_emblem(b"first", index_in_group=0), np.full((300, 300), 255, np.uint8),
            _emblem(b"", index_in_group=1), _emblem(b"third" * 100, index_in_group=2)]
    rep = olonys.guest_contract_check(olonys.MOCDEC, [imgs])
    assert rep.ok
