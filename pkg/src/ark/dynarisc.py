"""DynaRisc: a 16-bit, 23-instruction virtual processor.

Machine model: data registers R0..R7, pointer registers D0..D3, flags C and
Z, 32 KiB of octet memory (0x0000-0x7FFF). Instruction words are stored
big-endian. Word 0 layout, MSB first::

    opcode(5) rd(3) rs(3) class(2) mode(1) reserved(2)

LDI, JUMP and the conditional jumps carry a second word (immediate or target).
``class`` selects the MOVE direction (0 R<-R, 1 D<-R, 2 R<-D); ``mode`` = 1
turns a jump into an indirect jump through pointer register ``rs``.

Traps: execution of a word beyond 0x7FFF (so a one-word instruction at
PC > 0x7FFE), opcode >= 23, pointer-register field >= 4, MOVE class 3, SYS
function >= 3, or a memory access at an address >= 0x8000.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _asm
from ._jit import njit
from .errors import AssemblyError, StepLimitError, TrapError

MEM_SIZE = 0x8000
LOAD_ADDRESS = 0x0100

MNEMONICS = ("ADC", "SBB", "SUB", "CMP", "MUL", "AND", "OR", "XOR", "LSL", "LSR",
             "ASR", "ROR", "MOVE", "LDI", "LDM", "STM", "JUMP", "JZ", "JNZ", "JC",
             "JNC", "SYS", "HALT")
OPCODES = {name: i for i, name in enumerate(MNEMONICS)}
(ADC, SBB, SUB, CMP, MUL, AND, OR, XOR, LSL, LSR, ASR, ROR, MOVE, LDI, LDM, STM,
 JUMP, JZ, JNZ, JC, JNC, SYS, HALT) = range(23)

CLASS_RR, CLASS_RD, CLASS_DR = 0, 1, 2

TWO_WORD = frozenset({LDI, JUMP, JZ, JNZ, JC, JNC})
_ALU = frozenset({ADC, SBB, SUB, CMP, MUL, AND, OR, XOR, LSL, LSR, ASR, ROR})

TRAP_PC, TRAP_OPCODE, TRAP_MEMORY, TRAP_OPERAND = 1, 2, 3, 4
TRAP_NAMES = {TRAP_PC: "execution past 0x7FFE", TRAP_OPCODE: "invalid opcode",
              TRAP_MEMORY: "memory access >= 0x8000", TRAP_OPERAND: "invalid operand"}
TRAP_CODES = {v: k for k, v in TRAP_NAMES.items()}

EOF = 0xFFFF


def encode_word(opcode: int, rd: int = 0, rs: int = 0, cls: int = 0, mode: int = 0) -> int:
    return (opcode << 11) | (rd << 8) | (rs << 5) | (cls << 3) | (mode << 2)


def decode_word(word: int) -> tuple[int, int, int, int, int]:
    return word >> 11, (word >> 8) & 7, (word >> 5) & 7, (word >> 3) & 3, (word >> 2) & 1


# ----------------------------------------------------------- assembler ----

@dataclass
class DynaRiscProgram:
    image: bytes
    load_address: int = LOAD_ADDRESS
    entry: int | None = None
    symbols: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.entry is None:
            self.entry = self.load_address
        if self.load_address + len(self.image) > MEM_SIZE:
            raise ValueError("program image does not fit below 0x8000")

    @classmethod
    def from_binary(cls, image: bytes, load_address: int = LOAD_ADDRESS) -> "DynaRiscProgram":
        return cls(bytes(image), load_address)


def _register(tok: str, kind: str, line: int) -> int:
    t = tok.strip().upper()
    if len(t) == 2 and t[0] == kind and t[1].isdigit():
        n = int(t[1])
        if n < (8 if kind == "R" else 4):
            return n
    name = "data" if kind == "R" else "pointer"
    raise AssemblyError(line, f"expected a {name} register, got {tok!r}")


def _pointer(tok: str, line: int) -> int:
    t = tok.strip()
    if not (t.startswith("[") and t.endswith("]")):
        raise AssemblyError(line, f"expected [Dn], got {tok!r}")
    return _register(t[1:-1], "D", line)


def _nargs(args: list[str], n: int, op: str, line: int) -> None:
    if len(args) != n:
        raise AssemblyError(line, f"{op} takes {n} operand(s), got {len(args)}")


def _instruction(op: str, args: list[str], symbols, line: int) -> list[int]:
    """Return the instruction's words."""
    code = OPCODES[op]
    if code in _ALU:
        _nargs(args, 2, op, line)
        return [encode_word(code, _register(args[0], "R", line), _register(args[1], "R", line))]
    if code == MOVE:
        _nargs(args, 2, op, line)
        dst, src = args[0].strip().upper(), args[1].strip().upper()
        if dst.startswith("D"):
            return [encode_word(MOVE, _register(dst, "D", line), _register(src, "R", line), CLASS_RD)]
        if src.startswith("D"):
            return [encode_word(MOVE, _register(dst, "R", line), _register(src, "D", line), CLASS_DR)]
        return [encode_word(MOVE, _register(dst, "R", line), _register(src, "R", line), CLASS_RR)]
    if code == LDI:
        _nargs(args, 2, op, line)
        imm = args[1].strip()
        if not imm.startswith("#"):
            raise AssemblyError(line, "LDI immediate must start with '#'")
        value = _asm.evaluate(imm[1:], symbols, line)
        if symbols is not None and not -0x8000 <= value <= 0xFFFF:
            raise AssemblyError(line, f"immediate {value} out of 16-bit range")
        return [encode_word(LDI, _register(args[0], "R", line)), value & 0xFFFF]
    if code == LDM:
        _nargs(args, 2, op, line)
        return [encode_word(LDM, _register(args[0], "R", line), _pointer(args[1], line))]
    if code == STM:
        _nargs(args, 2, op, line)
        return [encode_word(STM, _pointer(args[1], line), _register(args[0], "R", line))]
    if JUMP <= code <= JNC:
        _nargs(args, 1, op, line)
        target = args[0].strip()
        if target.startswith("["):
            return [encode_word(code, 0, _pointer(target, line), 0, 1), 0]
        value = _asm.evaluate(target, symbols, line)
        if symbols is not None and not 0 <= value <= 0xFFFF:
            raise AssemblyError(line, f"jump target {value} out of range")
        return [encode_word(code), value & 0xFFFF]
    if code == SYS:
        _nargs(args, 1, op, line)
        fn = _asm.evaluate(args[0], symbols, line)
        if not 0 <= fn <= 7:
            raise AssemblyError(line, f"SYS function {fn} out of range")
        return [encode_word(SYS, fn)]
    _nargs(args, 0, op, line)
    return [encode_word(HALT)]


def dr_assemble(source: str, load_address: int = LOAD_ADDRESS) -> DynaRiscProgram:
    """Two-pass assembler for ``.dra`` source text."""
    lines = _asm.split_lines(source)
    symbols: dict[str, int] = {}
    for pass_no in (1, 2):
        table = None if pass_no == 1 else symbols
        pc = load_address
        image = bytearray()
        for ln in lines:
            if pass_no == 1:
                for label in ln.labels:
                    _asm.define(symbols, label, pc, ln.number)
            if not ln.op:
                continue
            args = _asm.split_args(ln.args)
            chunk = b""
            if ln.op == ".EQU":
                _nargs(args, 2, ln.op, ln.number)
                if pass_no == 1:
                    # .equ must only use symbols defined earlier
                    _asm.define(symbols, args[0].strip(), _asm.evaluate(args[1], symbols, ln.number), ln.number)
                continue
            if ln.op == ".ORG":
                _nargs(args, 1, ln.op, ln.number)
                target = _asm.evaluate(args[0], symbols, ln.number)
                if target < pc:
                    raise AssemblyError(ln.number, f".org 0x{target:04X} moves backwards")
                chunk = bytes(target - pc)
            elif ln.op == ".SPACE":
                _nargs(args, 1, ln.op, ln.number)
                chunk = bytes(_asm.evaluate(args[0], symbols, ln.number))
            elif ln.op == ".BYTE":
                vals = [_asm.evaluate(a, table, ln.number) for a in args]
                if table is not None and any(not -0x80 <= v <= 0xFF for v in vals):
                    raise AssemblyError(ln.number, ".byte value out of range")
                chunk = bytes(v & 0xFF for v in vals)
            elif ln.op == ".WORD":
                vals = [_asm.evaluate(a, table, ln.number) for a in args]
                if table is not None and any(not -0x8000 <= v <= 0xFFFF for v in vals):
                    raise AssemblyError(ln.number, ".word value out of range")
                chunk = b"".join((v & 0xFFFF).to_bytes(2, "big") for v in vals)
            elif ln.op == ".ASCII":
                chunk = _asm.parse_string(ln.args, ln.number)
            elif ln.op in OPCODES:
                words = _instruction(ln.op, args, table, ln.number)
                chunk = b"".join(w.to_bytes(2, "big") for w in words)
            else:
                raise AssemblyError(ln.number, f"unknown mnemonic {ln.op!r}")
            image += chunk
            pc += len(chunk)
            if pc > MEM_SIZE:
                raise AssemblyError(ln.number, "program extends past 0x7FFF")
    return DynaRiscProgram(bytes(image), load_address, load_address, symbols)


def dr_disassemble(word: int, second: int | None = None) -> str:
    op, rd, rs, cls, mode = decode_word(word)
    if op >= len(MNEMONICS):
        return f".word 0x{word:04X}"
    name = MNEMONICS[op]
    if op in _ALU:
        return f"{name} R{rd}, R{rs}"
    if op == MOVE:
        dst, src = {CLASS_RD: ("D", "R"), CLASS_DR: ("R", "D")}.get(cls, ("R", "R"))
        return f"MOVE {dst}{rd}, {src}{rs}"
    if op == LDI:
        return f"LDI R{rd}, #0x{second or 0:04X}"
    if op == LDM:
        return f"LDM R{rd}, [D{rs}]"
    if op == STM:
        return f"STM R{rs}, [D{rd}]"
    if JUMP <= op <= JNC:
        return f"{name} [D{rs}]" if mode else f"{name} 0x{second or 0:04X}"
    if op == SYS:
        return f"SYS {rd}"
    return name


# ------------------------------------------------------- machine state ----

@dataclass
class DynaRiscState:
    r: list[int] = field(default_factory=lambda: [0] * 8)
    d: list[int] = field(default_factory=lambda: [0] * 4)
    pc: int = LOAD_ADDRESS
    c: int = 0
    z: int = 0
    memory: bytearray = field(default_factory=lambda: bytearray(MEM_SIZE))
    halted: bool = False
    exit_code: int = 0
    step_count: int = 0
    input: bytes = b""
    output: bytearray = field(default_factory=bytearray)

    @classmethod
    def load(cls, prog: DynaRiscProgram, data: bytes = b"") -> "DynaRiscState":
        st = cls(pc=prog.entry, input=bytes(data))
        st.memory[prog.load_address:prog.load_address + len(prog.image)] = prog.image
        return st

    def snapshot(self) -> dict:
        return {"r": list(self.r), "d": list(self.d), "pc": self.pc, "c": self.c, "z": self.z,
                "step_count": self.step_count, "halted": self.halted, "exit_code": self.exit_code}


def _trap(st: DynaRiscState, cause: int):
    raise TrapError(st.pc, TRAP_NAMES[cause], st.snapshot())


def dr_step(st: DynaRiscState) -> DynaRiscState:
    """Execute one instruction in place (reference semantics)."""
    if st.halted:
        raise ValueError("machine is halted")
    pc = st.pc
    if pc > MEM_SIZE - 2:
        _trap(st, TRAP_PC)
    mem = st.memory
    word = (mem[pc] << 8) | mem[pc + 1]
    op, rd, rs, cls, mode = decode_word(word)
    if op > HALT:
        _trap(st, TRAP_OPCODE)
    nxt = pc + 2
    second = 0
    if op in TWO_WORD:
        if pc > MEM_SIZE - 4:
            _trap(st, TRAP_PC)
        second = (mem[pc + 2] << 8) | mem[pc + 3]
        nxt = pc + 4
    r = st.r
    if op in _ALU:
        a, b = r[rd], r[rs]
        res, c = a, st.c
        if op == ADC:
            t = a + b + st.c
            res, c = t & 0xFFFF, t >> 16
        elif op in (SBB, SUB, CMP):
            t = a - b - (st.c if op == SBB else 0)
            res, c = t & 0xFFFF, int(t < 0)
        elif op == MUL:
            t = a * b
            res, c = t & 0xFFFF, int(t > 0xFFFF)
        elif op == AND:
            res = a & b
        elif op == OR:
            res = a | b
        elif op == XOR:
            res = a ^ b
        else:
            n = b & 15
            if n:
                if op == LSL:
                    res, c = (a << n) & 0xFFFF, (a >> (16 - n)) & 1
                elif op == LSR:
                    res, c = a >> n, (a >> (n - 1)) & 1
                elif op == ASR:
                    s = a - 0x10000 if a & 0x8000 else a
                    res, c = (s >> n) & 0xFFFF, (a >> (n - 1)) & 1
                else:
                    res = ((a >> n) | (a << (16 - n))) & 0xFFFF
                    c = res >> 15
        st.c = c
        st.z = int(res == 0)
        if op != CMP:
            r[rd] = res
    elif op == MOVE:
        if cls == CLASS_RR:
            r[rd] = r[rs]
        elif cls == CLASS_RD and rd < 4:
            st.d[rd] = r[rs]
        elif cls == CLASS_DR and rs < 4:
            r[rd] = st.d[rs]
        else:
            _trap(st, TRAP_OPERAND)
    elif op == LDI:
        r[rd] = second
    elif op == LDM:
        if rs >= 4:
            _trap(st, TRAP_OPERAND)
        addr = st.d[rs]
        if addr >= MEM_SIZE:
            _trap(st, TRAP_MEMORY)
        r[rd] = mem[addr]
    elif op == STM:
        if rd >= 4:
            _trap(st, TRAP_OPERAND)
        addr = st.d[rd]
        if addr >= MEM_SIZE:
            _trap(st, TRAP_MEMORY)
        mem[addr] = r[rs] & 0xFF
    elif JUMP <= op <= JNC:
        if mode and rs >= 4:
            _trap(st, TRAP_OPERAND)
        taken = (op == JUMP or (op == JZ and st.z) or (op == JNZ and not st.z)
                 or (op == JC and st.c) or (op == JNC and not st.c))
        if taken:
            nxt = st.d[rs] if mode else second
    elif op == SYS:
        if rd == 0:
            off = (r[1] << 16) | r[0]
            r[2] = st.input[off] if off < len(st.input) else EOF
        elif rd == 1:
            st.output.append(r[2] & 0xFF)
        elif rd == 2:
            n = len(st.input)
            r[0], r[1] = n & 0xFFFF, (n >> 16) & 0xFFFF
        else:
            _trap(st, TRAP_OPERAND)
    else:
        st.halted = True
        st.exit_code = r[0]
    st.pc = nxt
    st.step_count += 1
    return st


# ------------------------------------------------------ fast interpreter ----
# s: [pc, c, z, halted, exit_code, steps, trap_cause, out_len]

@njit
def _run_kernel(mem, r, d, s, inp, out, max_steps):
    """Returns 0 halted, 1 trapped, 2 step limit, 3 output buffer full."""
    pc = s[0]
    c = s[1]
    z = s[2]
    steps = s[5]
    olen = s[7]
    ninp = inp.shape[0]
    status = 2
    while steps < max_steps:
        if pc > 0x7FFE:
            s[6] = 1
            status = 1
            break
        word = (mem[pc] << 8) | mem[pc + 1]
        op = word >> 11
        rd = (word >> 8) & 7
        rs = (word >> 5) & 7
        cls = (word >> 3) & 3
        mode = (word >> 2) & 1
        if op > 22:
            s[6] = 2
            status = 1
            break
        nxt = pc + 2
        second = 0
        if op == 13 or (op >= 16 and op <= 20):
            if pc > 0x7FFC:
                s[6] = 1
                status = 1
                break
            second = (mem[pc + 2] << 8) | mem[pc + 3]
            nxt = pc + 4
        if op <= 11:
            a = r[rd]
            b = r[rs]
            res = a
            if op == 0:
                t = a + b + c
                res = t & 0xFFFF
                c = t >> 16
            elif op <= 3:
                t = a - b
                if op == 1:
                    t -= c
                res = t & 0xFFFF
                c = 1 if t < 0 else 0
            elif op == 4:
                t = a * b
                res = t & 0xFFFF
                c = 1 if t > 0xFFFF else 0
            elif op == 5:
                res = a & b
            elif op == 6:
                res = a | b
            elif op == 7:
                res = a ^ b
            else:
                n = b & 15
                if n:
                    if op == 8:
                        res = (a << n) & 0xFFFF
                        c = (a >> (16 - n)) & 1
                    elif op == 9:
                        res = a >> n
                        c = (a >> (n - 1)) & 1
                    elif op == 10:
                        sv = a - 0x10000 if a & 0x8000 else a
                        res = (sv >> n) & 0xFFFF
                        c = (a >> (n - 1)) & 1
                    else:
                        res = ((a >> n) | (a << (16 - n))) & 0xFFFF
                        c = res >> 15
            z = 1 if res == 0 else 0
            if op != 3:
                r[rd] = res
        elif op == 12:
            if cls == 0:
                r[rd] = r[rs]
            elif cls == 1 and rd < 4:
                d[rd] = r[rs]
            elif cls == 2 and rs < 4:
                r[rd] = d[rs]
            else:
                s[6] = 4
                status = 1
                break
        elif op == 13:
            r[rd] = second
        elif op == 14:
            if rs >= 4:
                s[6] = 4
                status = 1
                break
            addr = d[rs]
            if addr >= 0x8000:
                s[6] = 3
                status = 1
                break
            r[rd] = mem[addr]
        elif op == 15:
            if rd >= 4:
                s[6] = 4
                status = 1
                break
            addr = d[rd]
            if addr >= 0x8000:
                s[6] = 3
                status = 1
                break
            mem[addr] = r[rs] & 0xFF
        elif op <= 20:
            if mode and rs >= 4:
                s[6] = 4
                status = 1
                break
            taken = (op == 16 or (op == 17 and z == 1) or (op == 18 and z == 0)
                     or (op == 19 and c == 1) or (op == 20 and c == 0))
            if taken:
                nxt = d[rs] if mode else second
        elif op == 21:
            if rd == 0:
                off = (r[1] << 16) | r[0]
                r[2] = inp[off] if off < ninp else 0xFFFF
            elif rd == 1:
                if olen >= out.shape[0]:
                    status = 3
                    break
                out[olen] = r[2] & 0xFF
                olen += 1
            elif rd == 2:
                r[0] = ninp & 0xFFFF
                r[1] = (ninp >> 16) & 0xFFFF
            else:
                s[6] = 4
                status = 1
                break
        else:
            s[3] = 1
            s[4] = r[0]
            pc = nxt
            steps += 1
            status = 0
            break
        pc = nxt
        steps += 1
    s[0] = pc
    s[1] = c
    s[2] = z
    s[5] = steps
    s[7] = olen
    return status


@dataclass
class RunResult:
    output: bytes
    exit_code: int
    step_count: int


def dr_run(prog: DynaRiscProgram, data: bytes = b"", max_steps: int = 10 ** 9) -> RunResult:
    """Load, reset and run until HALT; raises TrapError or StepLimitError."""
    mem = np.zeros(MEM_SIZE, dtype=np.int64)
    mem[prog.load_address:prog.load_address + len(prog.image)] = np.frombuffer(prog.image, np.uint8)
    r = np.zeros(8, np.int64)
    d = np.zeros(4, np.int64)
    s = np.zeros(8, np.int64)
    s[0] = prog.entry
    inp = np.frombuffer(bytes(data), dtype=np.uint8)
    out = np.zeros(1 << 16, dtype=np.uint8)
    while True:
        status = _run_kernel(mem, r, d, s, inp, out, max_steps)
        if status != 3:
            break
        out = np.concatenate([out, np.zeros_like(out)])
    snap = {"r": r.tolist(), "d": d.tolist(), "pc": int(s[0]), "c": int(s[1]), "z": int(s[2]),
            "step_count": int(s[5]), "halted": bool(s[3]), "exit_code": int(s[4])}
    if status == 1:
        raise TrapError(int(s[0]), TRAP_NAMES[int(s[6])], snap)
    if status == 2:
        raise StepLimitError(int(s[5]), snap)
    return RunResult(out[:s[7]].tobytes(), int(s[4]), int(s[5]))
