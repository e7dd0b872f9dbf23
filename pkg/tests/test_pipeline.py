from __future__ import annotations

import hashlib
import itertools
import json
import random
import shutil

import numpy as np
import pytest

from ark import dbcoder, ecc, mocoder, olonys, pipeline, scansim
from ark.bitcore import crc32
from ark.errors import CorruptionError, UnrecoverableGroupError

from corpus import lineitem_dump

GEOM = mocoder.PROFILES["test"]


def digest(folder) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.iterdir())}


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    """An 11 KB text dump in the test profile: one group of 2 data + 3 parity emblems."""
    root = tmp_path_factory.mktemp("small")
    data = lineitem_dump(11000, seed=2)
    (root / "dump.sql").write_bytes(data)
    manifest = pipeline.archive(root / "dump.sql", "test", root / "arc")
    return data, root / "arc", manifest


@pytest.fixture(scope="module")
def full_group(tmp_path_factory):
    """Incompressible input filling one complete 17 + 3 group."""
    root = tmp_path_factory.mktemp("full")
    data = np.random.default_rng(17).integers(0, 256, 33 * GEOM.user_capacity // 2, dtype=np.uint8).tobytes()
    (root / "blob.bin").write_bytes(data)
    manifest = pipeline.archive(root / "blob.bin", "test", root / "arc")
    return data, root / "arc", manifest


def test_manifest_contents(small):
    data, arc, m = small
    assert m.input_length == len(data) and m.input_crc32 == crc32(data)
    assert m.count("data") == 2 and m.count("system") == 1 and m.count("parity") == 6
    assert m.compressed_length == len(dbcoder.compress(data))
    gs = olonys.guests()
    assert m.guests == {gid: g.crc32 for gid, g in gs.items()}
    assert {g.group_id for g in m.groups} == {0, pipeline.SYSTEM_GROUP}
    assert all(g.parity == 3 for g in m.groups)
    assert pipeline.ArchiveManifest.from_json((arc / pipeline.MANIFEST_NAME).read_text()) == m
    assert pipeline.verify_manifest(arc) == []
    assert (arc / pipeline.BOOTSTRAP_NAME).read_text().startswith(olonys.MARKERS[0])


def test_system_emblems_carry_decompressor(small):
    _, arc, m = small
    sys_rec = [e for e in m.emblems if e.type == "system"]
    assert [e.profile for e in sys_rec] == ["test"]
    h, payload, _ = mocoder.decode_image(mocoder.read_pgm(arc / sys_rec[0].file), GEOM)
    assert h.emblem_type == mocoder.TYPE_SYSTEM and h.group_id == pipeline.SYSTEM_GROUP
    assert payload == olonys.guests()[olonys.DBDEC].data
    assert h.total_emblems == len(m.emblems)


def test_round_trip_native(small):
    data, arc, _ = small
    out, report = pipeline.restore(arc)
    assert out == data
    assert report.crc32 == crc32(data) and not report.recovered
    assert all(e.status == "ok" for e in report.emblems)


def test_round_trip_emulated(small):
    data, arc, _ = small
    out, report = pipeline.restore(arc, "emulated")
    assert out == data
    assert len(report.guest_steps) >= 2 and all(report.guest_steps)


def test_idempotent(small, tmp_path):
    data, arc, m = small
    (tmp_path / "dump.sql").write_bytes(data)
    m2 = pipeline.archive(tmp_path / "dump.sql", "test", tmp_path / "again")
    assert m2 == m
    assert digest(tmp_path / "again") == digest(arc)


def test_order_independence_and_extras(small, tmp_path):
    data, arc, _ = small
    folder = tmp_path / "mixed"
    shutil.copytree(arc, folder)
    mocoder.write_pgm(folder / "holiday_photo.pgm", np.random.default_rng(0).integers(0, 256, (300, 400)).astype(np.uint8))
    (folder / "notes.txt").write_text("not an image")
    files = sorted(folder.glob("*.pgm"))
    random.Random(3).shuffle(files)
    out, report = pipeline.restore(folder, files=files)
    assert out == data
    assert [e.status for e in report.emblems].count("failed") == 1


def test_empty_input(tmp_path):
    (tmp_path / "empty").write_bytes(b"")
    m = pipeline.archive(tmp_path / "empty", "test", tmp_path / "arc")
    data_rec = [e for e in m.emblems if e.type == "data"]
    assert len(data_rec) == 1 and data_rec[0].payload_length == 0
    assert sum(e.type == "parity" and e.group_id == 0 for e in m.emblems) == 3
    assert m.count("system") == 1
    for mode in ("native", "emulated"):
        out, _ = pipeline.restore(tmp_path / "arc", mode)
        assert out == b""


def test_three_missing_members(full_group, tmp_path):
    data, arc, m = full_group
    assert m.count("data") == 17
    members = [e.file for e in m.emblems if e.group_id == 0]
    assert len(members) == 20
    rng = random.Random(5)
    for trial in range(3):
        gone = rng.sample(members, 3)
        folder = tmp_path / f"t{trial}"
        shutil.copytree(arc, folder, ignore=lambda d, names: [n for n in names if n in gone])
        out, report = pipeline.restore(folder)
        assert out == data
        assert len(report.recovered) == sum("data" in g for g in gone)


def test_four_missing_members(full_group, tmp_path):
    _, arc, m = full_group
    gone = [e.file for e in m.emblems if e.group_id == 0][5:9]
    shutil.copytree(arc, tmp_path / "arc", ignore=lambda d, names: [n for n in names if n in gone])
    with pytest.raises(UnrecoverableGroupError) as exc:
        pipeline.restore(tmp_path / "arc")
    assert exc.value.group_id == 0 and "group 0" in str(exc.value)


def test_outer_recovery_emulated(small, tmp_path):
    data, arc, _ = small
    shutil.copytree(arc, tmp_path / "arc")
    (tmp_path / "arc" / "emblem_00000_00_data.pgm").unlink()
    out, report = pipeline.restore(tmp_path / "arc", "emulated")
    assert out == data and report.recovered == [(0, 0)]


def test_final_crc_mismatch(small, tmp_path):
    data, arc, m = small
    shutil.copytree(arc, tmp_path / "arc")
    rec = next(e for e in m.emblems if e.type == "data" and e.index == 0)
    h, payload, _ = mocoder.decode_image(mocoder.read_pgm(arc / rec.file), GEOM)
    forged = bytearray(payload)
    forged[9] ^= 0x01                        # stored crc32 of the container
    mocoder.write_pgm(tmp_path / "arc" / rec.file, mocoder.encode_image(bytes(forged), h, GEOM))
    with pytest.raises(CorruptionError):
        pipeline.restore(tmp_path / "arc")
    with pytest.raises(CorruptionError):
        pipeline.restore(tmp_path / "arc", "emulated")


def test_distorted_images_native(small, tmp_path):
    data, arc, _ = small
    folder = tmp_path / "scan"
    folder.mkdir()
    rng = np.random.default_rng(9)
    for k, p in enumerate(sorted(arc.glob("emblem_*.pgm"))):
        params = scansim.envelope_params(rng, GEOM.cell_px, seed=k)
        mocoder.write_pgm(folder / p.name, scansim.distort(mocoder.read_pgm(p), params))
    out, report = pipeline.restore(folder)
    assert out == data


def test_report_json(small):
    _, arc, _ = small
    _, report = pipeline.restore(arc)
    doc = json.loads(report.to_json())
    assert doc["mode"] == "native" and len(doc["emblems"]) == 9
    assert {"file", "status", "corrected", "erasures"} <= set(doc["emblems"][0])
    assert "restore (native)" in report.text()


def test_plan_groups_shapes():
    payloads = [bytes([i]) * 10 for i in range(40)] + [b"tail"]
    groups = pipeline.plan_groups(payloads)
    assert [g.k for g in groups] == [17, 17, 7]
    assert all(len(g.parity_payloads) == 3 for g in groups)
    last = groups[-1]
    padded = [p.ljust(10, b"\0") for p in last.data_payloads]
    for lost in itertools.combinations(range(10), 3):
        present = {i: m for i, m in enumerate(padded + last.parity_payloads) if i not in lost}
        assert ecc.outer_recover(present, last.k)[:last.k] == padded
