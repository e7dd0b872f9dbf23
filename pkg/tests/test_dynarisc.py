from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from ark.dynarisc import (LOAD_ADDRESS, DynaRiscProgram, DynaRiscState, decode_word, dr_assemble,
                          dr_run, dr_step)
from ark.errors import AssemblyError, StepLimitError, TrapError
from ark.olonys import asset_text

ALU = ("ADC", "SBB", "SUB", "CMP", "MUL", "AND", "OR", "XOR", "LSL", "LSR", "ASR", "ROR")


def alu_oracle(op: str, a: int, b: int, c: int) -> tuple[int, int, int]:
    """(Rd, C, Z) after ``op Rd, Rs`` with Rd=a, Rs=b, carry c; written from the ISA table."""
    n = b % 16
    if op == "ADC":
        t = a + b + c
        return t & 0xFFFF, t >> 16, int(t & 0xFFFF == 0)
    if op in ("SBB", "SUB", "CMP"):
        t = a - b - (c if op == "SBB" else 0)
        r = t & 0xFFFF
        return (a if op == "CMP" else r), int(t < 0), int(r == 0)
    if op == "MUL":
        t = a * b
        return t & 0xFFFF, int(t >= 1 << 16), int(t & 0xFFFF == 0)
    if op in ("AND", "OR", "XOR"):
        r = {"AND": a & b, "OR": a | b, "XOR": a ^ b}[op]
        return r, c, int(r == 0)
    if n == 0:
        return a, c, int(a == 0)
    if op == "LSL":
        r, c = (a << n) & 0xFFFF, (a >> (16 - n)) & 1
    elif op == "LSR":
        r, c = a >> n, (a >> (n - 1)) & 1
    elif op == "ASR":
        s = a - (1 << 16) if a & 0x8000 else a
        r, c = (s >> n) & 0xFFFF, (a >> (n - 1)) & 1
    else:
        r = ((a >> n) | (a << (16 - n))) & 0xFFFF
        c = r >> 15
    return r, c, int(r == 0)


def one_step(src: str, r=None, d=None, c=0, z=0, data=b"") -> DynaRiscState:
    s = DynaRiscState.load(dr_assemble(src), data)
    if r:
        s.r[:len(r)] = r
    if d:
        s.d[:len(d)] = d
    s.c, s.z = c, z
    return dr_step(s)


# ---------------------------------------------------------------- assembler ----

def test_halt_encoding():
    img = dr_assemble("HALT").image
    assert len(img) == 2
    assert decode_word(int.from_bytes(img, "big")) == (22, 0, 0, 0, 0)


def test_ldi_two_words():
    img = dr_assemble("LDI R1,#0x1234").image
    assert len(img) == 4
    assert img[2:] == b"\x12\x34"
    assert decode_word(int.from_bytes(img[:2], "big"))[:2] == (13, 1)


def test_forward_reference():
    prog = dr_assemble("JUMP end\n.byte 1,2,3,4\nend: HALT")
    assert prog.symbols["end"] == LOAD_ADDRESS + 8
    assert int.from_bytes(prog.image[2:4], "big") == LOAD_ADDRESS + 8


def test_directives():
    prog = dr_assemble('.word 0xBEEF\n.ascii "hi"\n.org 0x108\nx: .byte 7')
    assert prog.image == b"\xbe\xef" + b"hi" + bytes(4) + b"\x07"
    assert prog.symbols["x"] == 0x108


@pytest.mark.parametrize("src, line", [
    ("HALT\nFOO R1,R2", 2),
    ("LDI R1,#0x10000", 1),
    ("a: HALT\na: HALT", 2),
    ("JUMP nowhere", 1),
    ("ADC R8,R1", 1),
])
def test_assembly_errors(src, line):
    with pytest.raises(AssemblyError) as exc:
        dr_assemble(src)
    assert exc.value.line == line


# -------------------------------------------------------------- semantics ----

def test_hand_trace_add():
    s = DynaRiscState.load(dr_assemble("LDI R0,#2\nLDI R1,#3\nSUB R2,R2\nADC R0,R1\nHALT"))
    for _ in range(4):
        dr_step(s)
    assert (s.r[0], s.c, s.z) == (5, 0, 0)


def test_ror_one():
    s = one_step("ROR R0,R1", r=[1, 1])
    assert s.r[0] == 0x8000


def test_sub_self():
    s = one_step("SUB R0,R0", r=[1234], c=1)
    assert (s.r[0], s.z, s.c) == (0, 1, 0)


@settings(max_examples=400, deadline=None)
@given(op=st.sampled_from(ALU), a=st.integers(0, 0xFFFF), b=st.integers(0, 0xFFFF),
       c=st.integers(0, 1))
def test_alu_against_oracle(op, a, b, c):
    s = one_step(f"{op} R3,R4", r=[0, 0, 0, a, b], c=c, z=1 - c)
    assert (s.r[3], s.c, s.z) == alu_oracle(op, a, b, c)
    assert s.r[4] == b and s.pc == LOAD_ADDRESS + 2 and s.step_count == 1


@settings(max_examples=300, deadline=None)
@given(a=st.integers(0, 0xFFFF), b=st.integers(0, 0xFFFF), c=st.integers(0, 1))
def test_adc_sbb_inverse(a, b, c):
    s = DynaRiscState.load(dr_assemble("ADC R0,R1\nSBB R0,R1"))
    s.r[:2], s.c = [a, b], c
    dr_step(s)
    s.c = c                       # borrow-in equal to the carry-in undoes the addition
    dr_step(s)
    assert s.r[0] == a


def test_moves_and_memory():
    src = """
        LDI R1,#0x1234
        MOVE D2,R1
        MOVE R5,D2
        MOVE R6,R5
        LDI R0,#0x7FFF
        MOVE D0,R0
        LDI R2,#0xABCD
        STM R2,[D0]
        LDM R3,[D0]
        HALT
    """
    s = DynaRiscState.load(dr_assemble(src))
    while not s.halted:
        dr_step(s)
    assert s.d[2] == 0x1234 and s.r[5] == 0x1234 and s.r[6] == 0x1234
    assert s.memory[0x7FFF] == 0xCD and s.r[3] == 0xCD
    assert s.exit_code == 0x7FFF


def test_ldi_keeps_flags():
    s = one_step("LDI R0,#0", c=1, z=0)
    assert (s.c, s.z) == (1, 0)


@pytest.mark.parametrize("cond, c, z, taken", [
    ("JZ", 0, 1, True), ("JZ", 0, 0, False), ("JNZ", 0, 0, True), ("JNZ", 1, 1, False),
    ("JC", 1, 0, True), ("JC", 0, 1, False), ("JNC", 0, 0, True), ("JNC", 1, 0, False),
])
def test_conditional_jumps(cond, c, z, taken):
    s = one_step(f"{cond} 0x0400", c=c, z=z)
    assert s.pc == (0x0400 if taken else LOAD_ADDRESS + 4)


def test_indirect_jump():
    s = one_step("JUMP [D1]", d=[0, 0x0222])
    assert s.pc == 0x0222


def test_sys_io():
    s = one_step("SYS 0", r=[1, 0], data=b"ab")
    assert s.r[2] == ord("b")
    s = one_step("SYS 0", r=[0, 1], data=b"ab")
    assert s.r[2] == 0xFFFF
    s = one_step("SYS 1", r=[0, 0, 0x1241])
    assert bytes(s.output) == b"A"
    s = one_step("SYS 2", data=bytes(70000))
    assert (s.r[1] << 16) | s.r[0] == 70000


def test_traps():
    with pytest.raises(TrapError, match="invalid opcode"):
        dr_run(DynaRiscProgram(b"\xff\xff"))
    with pytest.raises(TrapError, match="memory"):
        dr_run(dr_assemble("LDI R0,#0x8000\nMOVE D0,R0\nLDM R1,[D0]\nHALT"))
    with pytest.raises(TrapError, match="0x7FFE"):
        dr_run(dr_assemble("JUMP 0x7FFF"))
    s = DynaRiscState.load(DynaRiscProgram(b"\xff\xff"))
    with pytest.raises(TrapError) as exc:
        dr_step(s)
    assert exc.value.pc == LOAD_ADDRESS


# ---------------------------------------------------------------- dr_run ----

def test_echo_program():
    prog = dr_assemble(asset_text("echo.dra"))
    data = bytes(range(256)) * 3
    res = dr_run(prog, data)
    assert res.output == data and res.exit_code == 0


def test_empty_program_halts():
    res = dr_run(dr_assemble("HALT"))
    assert (res.output, res.exit_code, res.step_count) == (b"", 0, 1)


def test_step_limit_exact():
    with pytest.raises(StepLimitError) as exc:
        dr_run(dr_assemble("loop: JUMP loop"), max_steps=1000)
    assert exc.value.steps == 1000


def _random_program(rng: random.Random) -> str:
    lines = [f"LDI R{i},#{rng.randrange(65536)}" for i in range(8)]
    lines += ["LDI R0,#0x4000", "MOVE D0,R0", "LDI R0,#0x4100", "MOVE D1,R0"]
    for _ in range(60):
        k = rng.random()
        a, b = rng.randrange(8), rng.randrange(8)
        if k < 0.7:
            lines.append(f"{rng.choice(ALU)} R{a},R{b}")
        elif k < 0.8:
            lines.append(f"STM R{a},[D{rng.randrange(2)}]")
        elif k < 0.9:
            lines.append(f"LDM R{a},[D{rng.randrange(2)}]")
        else:
            lines.append(f"MOVE R{a},R{b}")
    for i in range(8):
        lines.append(f"MOVE R2,R{i}\nSYS 1\nLDI R3,#8\nMOVE R2,R{i}\nLSR R2,R3\nSYS 1")
    lines.append("HALT")
    return "\n".join(lines)


def test_step_and_kernel_agree():
    rng = random.Random(7)
    for _ in range(40):
        prog = dr_assemble(_random_program(rng))
        s = DynaRiscState.load(prog)
        while not s.halted:
            dr_step(s)
        res = dr_run(prog)
        assert res.output == bytes(s.output)
        assert (res.exit_code, res.step_count) == (s.exit_code, s.step_count)


def test_determinism():
    prog = dr_assemble(asset_text("echo.dra"))
    runs = {tuple(vars(dr_run(prog, b"determinism")).values()) for _ in range(3)}
    assert len(runs) == 1
