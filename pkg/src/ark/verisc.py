"""VeRisc: the four-instruction bootstrap machine.

One accumulator R, a borrow flag and 65,536 words of 16-bit memory. Every
instruction is two words: an opcode word (0 LD, 1 ST, 2 SBB, 3 AND; any
other value traps) and an address word. Words 0-15 are mapped cells::

    0   read: address of the next instruction   write: jump
    1   read: borrow (0/1)                      write: borrow = (value != 0)
    2   read: next input octet, 0xFFFF at end (cursor advances only on success)
    3   write: append low octet to the output
    4   write: halt with the value as exit code
    5/6 input cursor, high/low word (ordinary read/write)
    7/8 read: input length, low/high word
    others read as 0; writes to cells other than 0, 1, 3, 4, 5, 6 are ignored

Execution starts at word 16; fetching an instruction outside 16..0xFFFE traps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _asm
from ._jit import njit
from .errors import AssemblyError, StepLimitError, TrapError

MEM_WORDS = 1 << 16
ENTRY = 16
LD, ST, SBB, AND = range(4)
MNEMONICS = ("LD", "ST", "SBB", "AND")
OPCODES = {name: i for i, name in enumerate(MNEMONICS)}

CELL_PC, CELL_BORROW, CELL_IN, CELL_OUT, CELL_HALT = 0, 1, 2, 3, 4
CELL_CUR_HI, CELL_CUR_LO, CELL_LEN_LO, CELL_LEN_HI = 5, 6, 7, 8

TRAP_PC, TRAP_OPCODE = 1, 2
TRAP_NAMES = {TRAP_PC: "instruction fetch outside 16..0xFFFE", TRAP_OPCODE: "invalid opcode word"}


# ----------------------------------------------------------- assembler ----

@dataclass
class VeRiscImage:
    words: np.ndarray                  # uint16, loaded at word ``ENTRY``
    symbols: dict[str, int] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        return self.words.astype("<u2").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "VeRiscImage":
        if len(data) % 2:
            raise ValueError("VeRisc image has an odd octet count")
        words = np.frombuffer(bytes(data), dtype="<u2").astype(np.uint16)
        if ENTRY + words.size > MEM_WORDS:
            raise ValueError("VeRisc image does not fit memory")
        return cls(words)


def vr_assemble(source: str) -> VeRiscImage:
    """Two-pass assembler for ``.vra`` source; the location counter starts at 16."""
    lines = _asm.split_lines(source)
    symbols: dict[str, int] = {}
    for pass_no in (1, 2):
        table = None if pass_no == 1 else symbols
        pc = ENTRY
        words: list[int] = []
        for ln in lines:
            if pass_no == 1:
                for label in ln.labels:
                    _asm.define(symbols, label, pc, ln.number)
            if not ln.op:
                continue
            args = _asm.split_args(ln.args)
            if ln.op == ".EQU":
                if len(args) != 2:
                    raise AssemblyError(ln.number, ".equ takes a name and a value")
                if pass_no == 1:
                    _asm.define(symbols, args[0].strip(), _asm.evaluate(args[1], symbols, ln.number), ln.number)
                continue
            if ln.op == ".ORG":
                target = _asm.evaluate(ln.args, symbols, ln.number)
                if target < pc:
                    raise AssemblyError(ln.number, f".org {target} moves backwards")
                chunk = [0] * (target - pc)
            elif ln.op == ".SPACE":
                chunk = [0] * _asm.evaluate(ln.args, symbols, ln.number)
            elif ln.op == ".WORD":
                chunk = [_asm.evaluate(a, table, ln.number) for a in args]
                if table is not None and any(not -0x8000 <= v <= 0xFFFF for v in chunk):
                    raise AssemblyError(ln.number, ".word value out of range")
            elif ln.op in OPCODES:
                if len(args) != 1:
                    raise AssemblyError(ln.number, f"{ln.op} takes one address")
                addr = _asm.evaluate(args[0], table, ln.number)
                if table is not None and not 0 <= addr < MEM_WORDS:
                    raise AssemblyError(ln.number, f"address {addr} out of range")
                chunk = [OPCODES[ln.op], addr]
            else:
                raise AssemblyError(ln.number, f"unknown mnemonic {ln.op!r}")
            words.extend(v & 0xFFFF for v in chunk)
            pc += len(chunk)
            if pc > MEM_WORDS:
                raise AssemblyError(ln.number, "program extends past word 65535")
    return VeRiscImage(np.array(words, dtype=np.uint16), symbols)


# ------------------------------------------------------------- machine ----

@dataclass
class VeRiscState:
    memory: np.ndarray = field(default_factory=lambda: np.zeros(MEM_WORDS, np.uint16))
    r: int = 0
    pc: int = ENTRY
    borrow: int = 0
    halted: bool = False
    exit_code: int = 0
    step_count: int = 0
    input: bytes = b""
    output: bytearray = field(default_factory=bytearray)

    @classmethod
    def load(cls, image: VeRiscImage, data: bytes = b"") -> "VeRiscState":
        st = cls(input=bytes(data))
        st.memory[ENTRY:ENTRY + image.words.size] = image.words
        return st

    def snapshot(self) -> dict:
        return {"r": self.r, "pc": self.pc, "borrow": self.borrow, "halted": self.halted,
                "exit_code": self.exit_code, "step_count": self.step_count}

    def _cursor(self) -> int:
        return (int(self.memory[CELL_CUR_HI]) << 16) | int(self.memory[CELL_CUR_LO])

    def read(self, addr: int) -> int:
        if addr >= 16 or addr in (CELL_CUR_HI, CELL_CUR_LO):
            return int(self.memory[addr])
        if addr == CELL_PC:
            return (self.pc + 2) & 0xFFFF
        if addr == CELL_BORROW:
            return self.borrow
        if addr == CELL_IN:
            cur = self._cursor()
            if cur >= len(self.input):
                return 0xFFFF
            cur += 1
            self.memory[CELL_CUR_HI], self.memory[CELL_CUR_LO] = (cur >> 16) & 0xFFFF, cur & 0xFFFF
            return self.input[cur - 1]
        if addr == CELL_LEN_LO:
            return len(self.input) & 0xFFFF
        if addr == CELL_LEN_HI:
            return (len(self.input) >> 16) & 0xFFFF
        return 0


def vr_step(st: VeRiscState) -> VeRiscState:
    """Execute one instruction in place (reference semantics)."""
    if st.halted:
        raise ValueError("machine is halted")
    pc = st.pc
    if pc < ENTRY or pc > MEM_WORDS - 2:
        raise TrapError(pc, TRAP_NAMES[TRAP_PC], st.snapshot())
    op, addr = int(st.memory[pc]), int(st.memory[pc + 1])
    if op > AND:
        raise TrapError(pc, TRAP_NAMES[TRAP_OPCODE], st.snapshot())
    nxt = pc + 2
    if op == LD:
        st.r = st.read(addr)
    elif op == SBB:
        t = st.r - st.read(addr) - st.borrow
        st.r, st.borrow = t & 0xFFFF, int(t < 0)
    elif op == AND:
        st.r &= st.read(addr)
    elif addr >= 16 or addr in (CELL_CUR_HI, CELL_CUR_LO):
        st.memory[addr] = st.r
    elif addr == CELL_PC:
        nxt = st.r
    elif addr == CELL_BORROW:
        st.borrow = int(st.r != 0)
    elif addr == CELL_OUT:
        st.output.append(st.r & 0xFF)
    elif addr == CELL_HALT:
        st.halted = True
        st.exit_code = st.r
    st.pc = nxt
    st.step_count += 1
    return st


# s: [pc, r, borrow, halted, exit_code, steps, trap_cause, out_len]

@njit
def _run_kernel(mem, s, inp, out, max_steps):
    """Returns 0 halted, 1 trapped, 2 step limit, 3 output buffer full."""
    pc = s[0]
    r = s[1]
    borrow = s[2]
    steps = s[5]
    olen = s[7]
    ninp = inp.shape[0]
    status = 2
    while steps < max_steps:
        if pc < 16 or pc > 0xFFFE:
            s[6] = 1
            status = 1
            break
        op = mem[pc]
        addr = mem[pc + 1]
        if op > 3:
            s[6] = 2
            status = 1
            break
        nxt = pc + 2
        if op != 1:
            if addr >= 16 or addr == 5 or addr == 6:
                v = mem[addr]
            elif addr == 0:
                v = (pc + 2) & 0xFFFF
            elif addr == 1:
                v = borrow
            elif addr == 2:
                cur = (mem[5] << 16) | mem[6]
                if cur < ninp:
                    v = inp[cur]
                    cur += 1
                    mem[5] = (cur >> 16) & 0xFFFF
                    mem[6] = cur & 0xFFFF
                else:
                    v = 0xFFFF
            elif addr == 7:
                v = ninp & 0xFFFF
            elif addr == 8:
                v = (ninp >> 16) & 0xFFFF
            else:
                v = 0
            if op == 0:
                r = v
            elif op == 2:
                t = r - v - borrow
                borrow = 1 if t < 0 else 0
                r = t & 0xFFFF
            else:
                r = r & v
        else:
            if addr >= 16 or addr == 5 or addr == 6:
                mem[addr] = r
            elif addr == 0:
                nxt = r
            elif addr == 1:
                borrow = 1 if r != 0 else 0
            elif addr == 3:
                if olen >= out.shape[0]:
                    status = 3
                    break
                out[olen] = r & 0xFF
                olen += 1
            elif addr == 4:
                s[3] = 1
                s[4] = r
                steps += 1
                pc = nxt
                status = 0
                break
        pc = nxt
        steps += 1
    s[0] = pc
    s[1] = r
    s[2] = borrow
    s[5] = steps
    s[7] = olen
    return status


@dataclass
class RunResult:
    output: bytes
    exit_code: int
    step_count: int


def vr_memory(image: VeRiscImage) -> np.ndarray:
    mem = np.zeros(MEM_WORDS, dtype=np.int64)
    mem[ENTRY:ENTRY + image.words.size] = image.words
    return mem


def vr_run(image: VeRiscImage | np.ndarray, data: bytes = b"", max_steps: int = 10 ** 12) -> RunResult:
    """Run from word 16 until halt. ``image`` may also be a full 65,536-word memory."""
    if isinstance(image, VeRiscImage):
        mem = vr_memory(image)
    else:
        mem = np.asarray(image, dtype=np.int64).copy()
        if mem.shape != (MEM_WORDS,):
            raise ValueError("memory must hold 65536 words")
    s = np.zeros(8, np.int64)
    s[0] = ENTRY
    inp = np.frombuffer(bytes(data), dtype=np.uint8)
    out = np.zeros(1 << 16, dtype=np.uint8)
    while True:
        status = _run_kernel(mem, s, inp, out, max_steps)
        if status != 3:
            break
        out = np.concatenate([out, np.zeros_like(out)])
    snap = {"r": int(s[1]), "pc": int(s[0]), "borrow": int(s[2]), "halted": bool(s[3]),
            "exit_code": int(s[4]), "step_count": int(s[5])}
    if status == 1:
        raise TrapError(int(s[0]), TRAP_NAMES[int(s[6])], snap)
    if status == 2:
        raise StepLimitError(int(s[5]), snap)
    return RunResult(out[:s[7]].tobytes(), int(s[4]), int(s[5]))
