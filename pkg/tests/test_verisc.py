from __future__ import annotations

import re
from importlib import resources

import numpy as np
import pytest

from ark.errors import AssemblyError, StepLimitError, TrapError
from ark.verisc import VeRiscImage, VeRiscState, vr_assemble, vr_memory, vr_run, vr_step

# Echo: patches the address word of ``jmp`` to pick a branch target from a
# two-entry table (0x100 apart), since VeRisc has no other indirection.
ECHO = """
loop:   LD   2
        ST   ch
        AND  mask
        ST   t
        LD   zero
        ST   1
        SBB  t
        ST   t
        LD   zero
        ST   1
        LD   tblp
        SBB  t
        ST   jmp+1
jmp:    LD   0
        ST   0
out:    LD   ch
        ST   3
        LD   loopp
        ST   0
done:   LD   zero
        ST   4
zero:   .word 0
mask:   .word 0x100
ch:     .word 0
t:      .word 0
loopp:  .word loop
tblp:   .word table
table:  .word out
        .org table+0x100
        .word done
"""

ADD = """
        LD   zero
        ST   1
        SBB  b
        ST   nb
        LD   zero
        ST   1
        LD   a
        SBB  nb
        ST   3
        LD   zero
        ST   4
zero:   .word 0
a:      .word 2
b:      .word 3
nb:     .word 0
"""


def state_with(words: list[int], r=0, borrow=0, data=b"") -> VeRiscState:
    st = VeRiscState.load(VeRiscImage(np.array(words, dtype=np.uint16)), data)
    st.r, st.borrow = r, borrow
    return st


def test_sbb_examples():
    st = state_with([2, 100], r=5)
    st.memory[100] = 3
    vr_step(st)
    assert (st.r, st.borrow) == (2, 0)
    st = state_with([2, 100], r=2)
    st.memory[100] = 3
    vr_step(st)
    assert (st.r, st.borrow) == (0xFFFF, 1)
    assert st.read(1) == 1


def test_mapped_jump():
    st = state_with([0, 50, 1, 0])
    st.memory[50] = 0x0200
    vr_step(st)
    vr_step(st)
    assert st.pc == 0x0200


def test_and_keeps_borrow():
    st = state_with([3, 100], r=0xF0F0, borrow=1)
    st.memory[100] = 0x0FF0
    vr_step(st)
    assert (st.r, st.borrow) == (0x00F0, 1)


def test_reserved_cells():
    st = state_with([0, 9, 1, 12, 0, 0], r=77)
    vr_step(st)
    assert st.r == 0
    st.r = 5
    vr_step(st)
    assert st.memory[12] == 0
    vr_step(st)
    assert st.r == 22             # read(0) = address of the next instruction


def test_input_cursor_cells():
    data = bytes(range(10, 20))
    src = "LD k\nST 6\nLD 2\nST 3\nLD 2\nST 3\nLD 7\nST 3\nLD 8\nST 4\nk: .word 7"
    res = vr_run(vr_assemble(src), data)
    assert res.output == bytes([17, 18, 10]) and res.exit_code == 0


def test_input_end_marker():
    res = vr_run(vr_assemble("LD 2\nST 4"), b"")
    assert res.exit_code == 0xFFFF


def test_assembler_examples():
    assert vr_assemble("LD 2").words.tolist() == [0, 2]
    assert vr_assemble(".word 0xBEEF").words.tolist() == [0xBEEF]
    img = vr_assemble("LD x\nx: .word 5")
    assert img.words.tolist() == [0, 18, 5] and img.symbols["x"] == 18
    assert img.to_bytes() == b"\x00\x00\x12\x00\x05\x00"


@pytest.mark.parametrize("src", ["LD nowhere", "LD 65536", "JMP 3", "x: LD 1\nx: LD 2"])
def test_assembler_errors(src):
    with pytest.raises(AssemblyError):
        vr_assemble(src)


def test_echo():
    data = bytes(range(256)) + b"tail"
    res = vr_run(vr_assemble(ECHO), data)
    assert res.output == data and res.exit_code == 0


def test_immediate_halt():
    res = vr_run(vr_assemble("LD 9\nST 4"))
    assert (res.output, res.exit_code, res.step_count) == (b"", 0, 2)


def test_addition_by_double_subtraction():
    res = vr_run(vr_assemble(ADD))
    assert res.output == b"\x05"


def test_traps_and_limits():
    with pytest.raises(TrapError, match="opcode"):
        vr_run(VeRiscImage(np.array([0x0100, 0], dtype=np.uint16)))
    with pytest.raises(TrapError, match="fetch"):
        vr_run(vr_assemble("LD z\nST 0\nz: .word 4"))
    with pytest.raises(StepLimitError) as exc:
        vr_run(vr_assemble("LD 0\nSBB two\nST 0\ntwo: .word 2"), max_steps=999)
    assert exc.value.steps == 999


def test_self_modification():
    # the first instruction rewrites the address word of the third
    src = "LD v\nST tgt+1\ntgt: LD 0\nST 3\nLD 9\nST 4\nv: .word w\nw: .word 0x41"
    assert vr_run(vr_assemble(src)).output == b"A"


def test_step_and_kernel_agree():
    img = vr_assemble(ECHO)
    data = b"reference and kernel"
    st = VeRiscState.load(img, data)
    while not st.halted:
        vr_step(st)
    res = vr_run(vr_memory(img), data)
    assert res.output == bytes(st.output) == data
    assert (res.exit_code, res.step_count) == (st.exit_code, st.step_count)


def test_pseudocode_length_and_width():
    text = resources.files("ark").joinpath("assets", "verisc_pseudocode.txt").read_text()
    lines = text.splitlines()
    assert len(lines) <= 500
    assert max(map(len, lines)) <= 78


def test_pseudocode_cells_match_machine():
    """Every special cell the machine implements is listed in the pseudocode table."""
    text = resources.files("ark").joinpath("assets", "verisc_pseudocode.txt").read_text()
    listed = {int(m.group(1)) for m in re.finditer(r"^      (\d)     ", text, re.M)}
    assert listed == set(range(9))
