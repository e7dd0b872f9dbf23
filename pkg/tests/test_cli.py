from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from ark import mocoder, olonys
from ark.cli import EXIT_DECODE, EXIT_OK, EXIT_UNRECOVERABLE, EXIT_USAGE, main


@pytest.fixture(scope="module")
def archived(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = b"INSERT INTO t VALUES (1, 'cli');\n" * 200
    (root / "in.sql").write_bytes(data)
    assert main(["archive", str(root / "in.sql"), "--profile", "test", "--out", str(root / "arc")]) == EXIT_OK
    return root, data


def test_restore_both_modes(archived, capsys):
    root, data = archived
    for mode in ("native", "emulated"):
        out = root / f"out_{mode}"
        rep = root / f"rep_{mode}.json"
        assert main(["restore", str(root / "arc"), "--mode", mode, "--out", str(out),
                     "--report", str(rep)]) == EXIT_OK
        assert out.read_bytes() == data
        assert json.loads(rep.read_text())["mode"] == mode
    assert "restore (emulated)" in capsys.readouterr().out


def test_inspect(archived, capsys):
    root, _ = archived
    assert main(["inspect", str(root / "arc" / "emblem_32768_00_system.pgm")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "type system" in out and "group 32768" in out


def test_inspect_blank_image_is_decode_failure(tmp_path):
    mocoder.write_pgm(tmp_path / "blank.pgm", np.full((1100, 1100), 255, np.uint8))
    assert main(["inspect", str(tmp_path / "blank.pgm")]) == EXIT_DECODE


def test_unrecoverable_exit_code(archived, tmp_path):
    root, _ = archived
    for p in (root / "arc").iterdir():
        if not p.name.startswith("emblem_00000_"):
            (tmp_path / p.name).write_bytes(p.read_bytes())
    assert main(["restore", str(tmp_path), "--out", str(tmp_path / "x")]) == EXIT_UNRECOVERABLE


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["archive", "x", "--profile", "huge", "--out", "y"])
    assert exc.value.code == EXIT_USAGE
    assert main(["archive", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["bootstrap", "verify"]) == EXIT_USAGE


def test_bootstrap_commands(tmp_path, capsys):
    doc = tmp_path / "bootstrap.txt"
    assert main(["bootstrap", "generate", "--out", str(doc)]) == EXIT_OK
    assert main(["bootstrap", "verify", str(doc)]) == EXIT_OK
    assert "binaries match build: True" in capsys.readouterr().out
    assert main(["bootstrap", "parse", str(doc), "--out", str(tmp_path / "bins")]) == EXIT_OK
    gs = olonys.guests()
    assert (tmp_path / "bins" / "dremu.bin").read_bytes() == gs[olonys.DREMU].data
    assert (tmp_path / "bins" / "mocoder-dec.bin").read_bytes() == gs[olonys.MOCDEC].data
    text = doc.read_text()
    doc.write_text(text.replace(olonys.MARKERS[3], "==== SECTION 4 ===="))
    assert main(["bootstrap", "parse", str(doc)]) == EXIT_DECODE


def test_asm_and_emulate(tmp_path):
    src = tmp_path / "echo.dra"
    src.write_text(olonys.asset_text("echo.dra"))
    assert main(["asm", "--arch", "dynarisc", str(src), "-o", str(tmp_path / "echo.bin")]) == EXIT_OK
    (tmp_path / "in.txt").write_bytes(b"hello there")
    for image in ("echo.bin", "echo.dra"):
        proc = subprocess.run([sys.executable, "-m", "ark.cli", "emulate", "--arch", "dynarisc",
                               str(tmp_path / image), "--input", str(tmp_path / "in.txt")],
                              capture_output=True, check=True)
        assert proc.stdout == b"hello there"
        assert b"exit 0" in proc.stderr
    vra = tmp_path / "halt.vra"
    vra.write_text("LD 9\nST 4\n")
    assert main(["asm", "--arch", "verisc", str(vra), "-o", str(tmp_path / "halt.bin")]) == EXIT_OK
    assert (tmp_path / "halt.bin").read_bytes() == b"\x00\x00\x09\x00\x01\x00\x04\x00"


def test_emulate_trap_is_decode_failure(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"\xff\xff")
    (tmp_path / "empty").write_bytes(b"")
    assert main(["emulate", "--arch", "dynarisc", str(tmp_path / "bad.bin"),
                 "--input", str(tmp_path / "empty")]) == EXIT_DECODE


def test_distort(archived, tmp_path):
    root, _ = archived
    src = root / "arc" / "emblem_00000_00_data.pgm"
    out = tmp_path / "d.pgm"
    assert main(["distort", str(src), str(out), "--rotation", "1.2", "--blur", "1.0",
                 "--noise", "4", "--seed", "3"]) == EXIT_OK
    assert main(["inspect", str(out)]) == EXIT_OK
    preset = tmp_path / "p.json"
    preset.write_text(json.dumps({"rotation": -1.0, "scale": 0.95, "seed": 1}))
    assert main(["distort", str(src), str(out), "--preset", str(preset)]) == EXIT_OK
    img = mocoder.read_pgm(out)
    assert img.shape == mocoder.read_pgm(src).shape
