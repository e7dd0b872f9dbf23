"""Generator for dremu.vra, the DynaRisc interpreter written in VeRisc.

The generated source is committed as ``assets/dremu.vra``; ``build()``
regenerates it so tests can check the asset is current.

VeRisc idioms used throughout:

* ``clrb`` (LD zero; ST 1) clears the borrow; it clobbers R.
* ``x + y`` is computed as ``x - (-y)``; ``~x`` as ``0xFFFF - x``.
* A two-way branch turns the borrow into a mask (LD zero; SBB zero gives
  0 or 0xFFFF), selects the difference of the two targets and jumps.
* Table lookups patch the address word of a following LD instruction.

Memory: guest octet ``a`` lives in word ``0x8000 + a``; the guest registers,
flags and scratch variables sit after the code. Guest flags are kept as
``fc`` (0/1) and ``fz`` (the last flag-setting result; Z = fz == 0).
"""

from __future__ import annotations

GUEST_BASE = 0x8000
TRAP_EXIT = 0xDE00      # guest trap -> exit code TRAP_EXIT | cause

_OPS = ("ADC", "SBB", "SUB", "CMP", "MUL", "AND", "OR", "XOR", "LSL", "LSR", "ASR",
        "ROR", "MOVE", "LDI", "LDM", "STM", "JUMP", "JZ", "JNZ", "JC", "JNC", "SYS", "HALT")


class _Gen:
    def __init__(self):
        self.code: list[str] = []
        self.consts: dict[str, str] = {}
        self.vars: list[str] = []
        self.tables: list[tuple[str, list[str]]] = []
        self._n = 0

    # -- emission
    def op(self, mnemonic: str, addr) -> None:
        self.code.append(f"        {mnemonic:<4} {addr}")

    def label(self, name: str) -> None:
        self.code.append(f"{name}:")

    def comment(self, text: str) -> None:
        self.code.append(f"; {text}")

    def fresh(self, stem: str) -> str:
        self._n += 1
        return f"{stem}_{self._n}"

    def k(self, value) -> str:
        """Name of a constant word holding ``value`` (int or label expression)."""
        key = f"{value & 0xFFFF:04X}" if isinstance(value, int) else str(value)
        if key not in self.consts:
            name = f"k{key}" if isinstance(value, int) else f"k_{len(self.consts)}"
            self.consts[key] = name
        return self.consts[key]

    def var(self, name: str) -> str:
        if name not in self.vars:
            self.vars.append(name)
        return name

    def table(self, name: str, entries: list) -> None:
        self.tables.append((name, [str(e) for e in entries]))

    # -- macros
    def clrb(self):
        self.op("LD", self.k(0))
        self.op("ST", 1)

    def jmp(self, target: str):
        self.op("LD", self.k(target))
        self.op("ST", 0)

    def copy(self, dst: str, src: str):
        self.op("LD", src)
        self.op("ST", dst)

    def brb(self, if_borrow: str, if_clear: str):
        """Jump to ``if_borrow`` when the borrow is set, else ``if_clear``."""
        self.op("LD", self.k(0))
        self.op("SBB", self.k(0))
        self.op("AND", self.k(f"{if_clear}-{if_borrow}"))
        self.op("ST", "t0")
        self.clrb()
        self.op("LD", self.k(if_clear))
        self.op("SBB", "t0")
        self.op("ST", 0)

    def lookup(self, table: str, idx: str):
        """R = table[idx] (borrow clobbered)."""
        at = self.fresh("lk")
        self.clrb()
        self.op("LD", idx)
        self.op("SBB", self.k(f"65536-{table}"))
        self.op("ST", f"{at}+1")
        self.label(at)
        self.op("LD", 0)

    def patch(self, *sites: str):
        for s in sites:
            self.op("ST", f"{s}+1")

    def guest_addr(self, var: str, trap: str = "trap_mem"):
        """R = 0x8000 + var; traps when var >= 0x8000."""
        ok = self.fresh("ga")
        self.clrb()
        self.op("LD", var)
        self.op("SBB", self.k(GUEST_BASE))
        self.op("ST", "t1")
        self.brb(ok, trap)
        self.label(ok)
        self.op("LD", "t1")

    def bit_to_c(self, src: str, bit: int):
        """fc = bit ``bit`` of src."""
        self.op("LD", src)
        self.op("AND", self.k(1 << bit))
        self.op("ST", 1)
        self.op("LD", self.k(0))
        self.op("SBB", self.k(0))
        self.op("AND", self.k(1))
        self.op("ST", "fc")

    def gather(self, src: str, bits):
        """acc += sum(bit_k(src) * w) over (k, w) pairs."""
        for k, w in bits:
            self.op("LD", src)
            self.op("AND", self.k(1 << k))
            self.op("ST", 1)
            self.op("LD", self.k(0))
            self.op("SBB", self.k(0))
            self.op("AND", self.k(~w & 0xFFFF))
            self.op("ST", "t0")
            self.op("LD", "acc")
            self.op("SBB", "t0")
            self.op("ST", "acc")

    # -- guest operand helpers
    def reg_site(self, table: str, idx: str, *sites: str):
        self.lookup(table, idx)
        self.patch(*sites)


def _handlers(g: _Gen):
    g.var("t0"), g.var("t1"), g.var("acc")
    g.comment("dremu: DynaRisc interpreter")
    g.label("start")
    g.jmp("fetch")

    # -------------------------------------------------------- next / fetch
    g.label("next4")
    g.clrb()
    g.op("LD", "pc")
    g.op("SBB", g.k(0xFFFE))
    g.op("ST", "pc")
    g.label("next2")
    g.clrb()
    g.op("LD", "pc")
    g.op("SBB", g.k(0xFFFE))
    g.op("ST", "pc")
    g.label("fetch")
    g.clrb()
    g.op("LD", "pc")
    g.op("SBB", g.k(0x7FFF))
    g.op("ST", "alo")
    g.brb("fetch_ok", "trap_pc")
    g.label("fetch_ok")
    g.clrb()
    g.op("LD", "pc")
    g.op("SBB", g.k(GUEST_BASE))
    g.patch("f_hi")
    g.label("f_hi")
    g.op("LD", 0)
    g.op("ST", "hi")
    g.op("LD", "alo")
    g.patch("f_lo")
    g.label("f_lo")
    g.op("LD", 0)
    g.op("ST", "lo")
    g.lookup("jt_op", "hi")
    g.op("ST", 0)

    # ------------------------------------------------------------- traps
    for name, cause in (("trap_pc", 1), ("trap_op", 2), ("trap_mem", 3), ("trap_arg", 4)):
        g.label(name)
        g.op("LD", g.k(TRAP_EXIT | cause))
        g.op("ST", 4)

    def alu_prologue(op, sites=("w",)):
        """a = R[rd], b = R[rs]; R[rd] is patched into the writeback sites."""
        g.label(f"h_{op.lower()}")
        g.reg_site("tab_rd", "hi", f"{op}_a", *[f"{op}_{s}" for s in sites])
        g.reg_site("tab_rs", "lo", f"{op}_b")
        g.label(f"{op}_a")
        g.op("LD", 0)
        g.op("ST", "a")
        g.label(f"{op}_b")
        g.op("LD", 0)
        g.op("ST", "b")

    def writeback(op, site="w"):
        """R holds the result."""
        g.label(f"{op}_{site}")
        g.op("ST", 0)
        g.op("ST", "fz")

    # ADC
    alu_prologue("ADC")
    g.clrb()
    g.op("LD", g.k(0xFFFF))
    g.op("SBB", "b")
    g.op("ST", "nb")
    g.op("LD", g.k(1))
    g.op("SBB", "fc")
    g.op("ST", 1)
    g.op("LD", "a")
    g.op("SBB", "nb")
    writeback("ADC")
    g.op("LD", g.k(1))
    g.op("SBB", g.k(0))
    g.op("ST", "fc")
    g.jmp("next2")

    # SBB / SUB / CMP
    for op in ("SBB", "SUB", "CMP"):
        alu_prologue(op, () if op == "CMP" else ("w",))
        if op == "SBB":
            g.op("LD", "fc")
            g.op("ST", 1)
        else:
            g.clrb()
        g.op("LD", "a")
        g.op("SBB", "b")
        if op == "CMP":
            g.op("ST", "fz")
        else:
            writeback(op)
        g.op("LD", g.k(0))
        g.op("SBB", g.k(0))
        g.op("AND", g.k(1))
        g.op("ST", "fc")
        g.jmp("next2")

    # MUL: 32-bit shift-and-add, unrolled
    alu_prologue("MUL")
    for v, val in (("pl", 0), ("ph", 0), ("ah", 0), ("nah", 0xFFFF)):
        g.copy(v, g.k(val))
    g.copy("al", "a")
    g.clrb()
    g.op("LD", g.k(0xFFFF))
    g.op("SBB", "a")
    g.op("ST", "nal")
    for k in range(16):
        g.op("LD", "b")
        g.op("AND", g.k(1 << k))
        g.op("ST", 1)
        g.op("LD", g.k(0))
        g.op("SBB", g.k(0))
        g.op("ST", "m")
        g.op("AND", "nal")
        g.op("ST", "t0")
        g.op("LD", "pl")
        g.op("SBB", "t0")
        g.op("ST", "pl")
        g.op("LD", "m")
        g.op("AND", "nah")
        g.op("ST", "t0")
        g.op("LD", "ph")
        g.op("SBB", "t0")
        g.op("ST", "ph")
        if k == 15:
            break
        if k in (7, 11):
            rest = g.fresh("mulrest")
            g.clrb()
            g.op("LD", "b")
            g.op("AND", g.k(~((2 << k) - 1) & 0xFFFF))
            g.op("ST", "t1")
            g.op("LD", g.k(0))
            g.op("SBB", "t1")
            g.brb(rest, "mul_done")
            g.label(rest)
        g.op("LD", g.k(1))
        g.op("ST", 1)
        g.op("LD", "al")
        g.op("SBB", "nal")
        g.op("ST", "al")
        g.op("LD", "ah")
        g.op("SBB", "nah")
        g.op("ST", "ah")
        g.clrb()
        g.op("LD", g.k(0xFFFF))
        g.op("SBB", "al")
        g.op("ST", "nal")
        g.op("LD", g.k(0xFFFF))
        g.op("SBB", "ah")
        g.op("ST", "nah")
    g.label("mul_done")
    g.clrb()
    g.op("LD", g.k(0))
    g.op("SBB", "ph")
    g.op("LD", g.k(0))
    g.op("SBB", g.k(0))
    g.op("AND", g.k(1))
    g.op("ST", "fc")
    g.op("LD", "pl")
    writeback("MUL")
    g.jmp("next2")

    # AND / OR / XOR (C unchanged)
    alu_prologue("AND")
    g.op("LD", "a")
    g.op("AND", "b")
    writeback("AND")
    g.jmp("next2")

    for op in ("OR", "XOR"):
        alu_prologue(op)
        g.clrb()
        g.op("LD", g.k(0xFFFF))
        g.op("SBB", "a")
        g.op("ST", "t0")
        g.op("LD", g.k(0xFFFF))
        g.op("SBB", "b")
        g.op("AND", "t0")
        g.op("ST", "t0")
        g.op("LD", g.k(0xFFFF))
        g.op("SBB", "t0")
        if op == "XOR":
            g.op("ST", "t1")
            g.op("LD", "a")
            g.op("AND", "b")
            g.op("ST", "t0")
            g.op("LD", "t1")
            g.op("SBB", "t0")
        writeback(op)
        g.jmp("next2")

    # shifts: dispatch on the count, unrolled bit gathers
    for op in ("LSL", "LSR", "ASR", "ROR"):
        alu_prologue(op, ("w", "w2"))
        g.op("LD", "b")
        g.op("AND", g.k(15))
        g.op("ST", "n")
        g.copy("acc", g.k(0))
        g.lookup(f"jt_{op.lower()}", "n")
        g.op("ST", 0)
        g.label(f"{op}_zero")       # count 0: value unchanged, C unchanged
        g.op("LD", "a")
        writeback(op)
        g.jmp("next2")
        g.label(f"{op}_fin")        # acc holds the result
        g.op("LD", "acc")
        writeback(op, "w2")
        g.jmp("next2")

    # gather segments end by jumping through ``sh_ret``
    for n in range(1, 16):
        g.label(f"lsr_{n}")
        g.gather("a", [(k, 1 << (k - n)) for k in range(n, 16)])
        g.op("LD", "sh_ret")
        g.op("ST", 0)
        g.label(f"lsl_{n}")
        g.gather("a", [(k, 1 << (k + n)) for k in range(0, 16 - n)])
        g.op("LD", "sh_ret")
        g.op("ST", 0)

    for n in range(1, 16):
        # LSL n
        g.label(f"do_lsl_{n}")
        g.copy("sh_ret", g.k(f"end_lsl_{n}"))
        g.jmp(f"lsl_{n}")
        g.label(f"end_lsl_{n}")
        g.bit_to_c("a", 16 - n)
        g.jmp("LSL_fin")
        # LSR n
        g.label(f"do_lsr_{n}")
        g.copy("sh_ret", g.k(f"end_lsr_{n}"))
        g.jmp(f"lsr_{n}")
        g.label(f"end_lsr_{n}")
        g.bit_to_c("a", n - 1)
        g.jmp("LSR_fin")
        # ASR n
        g.label(f"do_asr_{n}")
        g.copy("sh_ret", g.k(f"end_asr_{n}"))
        g.jmp(f"lsr_{n}")
        g.label(f"end_asr_{n}")
        g.gather("a", [(15, (0xFFFF << (16 - n)) & 0xFFFF)])
        g.bit_to_c("a", n - 1)
        g.jmp("ASR_fin")
        # ROR n = LSR n + LSL (16 - n)
        g.label(f"do_ror_{n}")
        g.copy("sh_ret", g.k(f"mid_ror_{n}"))
        g.jmp(f"lsr_{n}")
        g.label(f"mid_ror_{n}")
        g.copy("sh_ret", g.k(f"end_ror_{n}"))
        g.jmp(f"lsl_{16 - n}")
        g.label(f"end_ror_{n}")
        g.bit_to_c("a", n - 1)
        g.jmp("ROR_fin")

    for op in ("LSL", "LSR", "ASR", "ROR"):
        g.table(f"jt_{op.lower()}", [f"{op}_zero"] + [f"do_{op.lower()}_{n}" for n in range(1, 16)])

    # MOVE: second-level dispatch on class (and pointer-field validity)
    g.label("h_move")
    g.lookup("jt_move", "lo")
    g.op("ST", 0)
    g.label("mv_rr")
    g.reg_site("tab_rs", "lo", "mv_rr_s")
    g.reg_site("tab_rd", "hi", "mv_rr_d")
    g.label("mv_rr_s")
    g.op("LD", 0)
    g.label("mv_rr_d")
    g.op("ST", 0)
    g.jmp("next2")
    g.label("mv_rd")
    g.lookup("jt_dvalid", "hi")
    g.op("ST", 0)
    g.label("mv_rd_ok")
    g.reg_site("tab_rs", "lo", "mv_rd_s")
    g.reg_site("tab_dd", "hi", "mv_rd_d")
    g.label("mv_rd_s")
    g.op("LD", 0)
    g.label("mv_rd_d")
    g.op("ST", 0)
    g.jmp("next2")
    g.label("mv_dr")
    g.reg_site("tab_ds", "lo", "mv_dr_s")
    g.reg_site("tab_rd", "hi", "mv_dr_d")
    g.label("mv_dr_s")
    g.op("LD", 0)
    g.label("mv_dr_d")
    g.op("ST", 0)
    g.jmp("next2")

    # two-word instructions: check PC <= 0x7FFC, read the second word into imm
    def second_word(tag):
        ok = f"{tag}_pcok"
        g.clrb()
        g.op("LD", "pc")
        g.op("SBB", g.k(0x7FFD))
        g.brb(ok, "trap_pc")
        g.label(ok)

    def read_imm(tag):
        g.clrb()
        g.op("LD", "pc")
        g.op("SBB", g.k(0x7FFE))
        g.patch(f"{tag}_i2")
        g.op("SBB", g.k(0xFFFE))     # borrow is set after the first SBB: +1
        g.patch(f"{tag}_i3")
        g.label(f"{tag}_i2")
        g.op("LD", 0)
        g.op("ST", "t1")
        g.lookup("tab_nx256", "t1")
        g.op("ST", "t0")
        g.clrb()
        g.label(f"{tag}_i3")
        g.op("LD", 0)
        g.op("SBB", "t0")

    g.label("h_ldi")
    second_word("ldi")
    g.reg_site("tab_rd", "hi", "ldi_w")
    read_imm("ldi")
    g.label("ldi_w")
    g.op("ST", 0)
    g.jmp("next4")

    # LDM Rd,[Ds]
    g.label("h_ldm")
    g.lookup("jt_ldm", "lo")
    g.op("ST", 0)
    g.label("ldm_ok")
    g.reg_site("tab_ds", "lo", "ldm_p")
    g.label("ldm_p")
    g.op("LD", 0)
    g.op("ST", "ea")
    g.guest_addr("ea")
    g.patch("ldm_m")
    g.reg_site("tab_rd", "hi", "ldm_w")
    g.label("ldm_m")
    g.op("LD", 0)
    g.label("ldm_w")
    g.op("ST", 0)
    g.jmp("next2")

    # STM Rs,[Dd] (rd validity is resolved by jt_op)
    g.label("h_stm")
    g.reg_site("tab_dd", "hi", "stm_p")
    g.label("stm_p")
    g.op("LD", 0)
    g.op("ST", "ea")
    g.guest_addr("ea")
    g.patch("stm_m")
    g.reg_site("tab_rs", "lo", "stm_v")
    g.label("stm_v")
    g.op("LD", 0)
    g.op("AND", g.k(0xFF))
    g.label("stm_m")
    g.op("ST", 0)
    g.jmp("next2")

    # jumps
    for op in ("JUMP", "JZ", "JNZ", "JC", "JNC"):
        t = op.lower()
        g.label(f"h_{t}")
        second_word(t)
        g.lookup(f"jt_{t}", "lo")
        g.op("ST", 0)
        for mode in ("abs", "ind"):
            g.label(f"{t}_{mode}")
            taken = f"{t}_{mode}_go"
            if op in ("JZ", "JNZ"):
                g.clrb()
                g.op("LD", g.k(0))
                g.op("SBB", "fz")          # borrow = (fz != 0) = not Z
                g.brb(*((("next4", taken)) if op == "JZ" else (taken, "next4")))
            elif op in ("JC", "JNC"):
                g.op("LD", "fc")
                g.op("ST", 1)
                g.brb(*((taken, "next4") if op == "JC" else ("next4", taken)))
            g.label(taken)
            if mode == "abs":
                read_imm(f"{t}_{mode}")
            else:
                g.reg_site("tab_ds", "lo", f"{t}_dp")
                g.label(f"{t}_dp")
                g.op("LD", 0)
            g.op("ST", "pc")
            g.jmp("fetch")

    # SYS
    g.label("h_sys0")
    g.copy(5, "r1")
    g.copy(6, "r0")
    g.copy("r2", 2)
    g.jmp("next2")
    g.label("h_sys1")
    g.op("LD", "r2")
    g.op("ST", 3)
    g.jmp("next2")
    g.label("h_sys2")
    g.copy("r0", 7)
    g.copy("r1", 8)
    g.jmp("next2")
    g.label("h_halt")
    g.op("LD", "r0")
    g.op("ST", 4)


def _tables(g: _Gen):
    regs = [f"r{i}" for i in range(8)]
    dregs = [f"d{i}" for i in range(4)]
    jt = []
    for hi in range(256):
        op, rd = hi >> 3, hi & 7
        if op > 22:
            jt.append("trap_op")
        elif op == 15:
            jt.append("h_stm" if rd < 4 else "trap_arg")
        elif op == 21:
            jt.append(f"h_sys{rd}" if rd < 3 else "trap_arg")
        else:
            jt.append(f"h_{_OPS[op].lower()}")
    g.table("jt_op", jt)
    g.table("tab_rd", [regs[hi & 7] for hi in range(256)])
    g.table("tab_dd", [dregs[hi & 3] for hi in range(256)])
    g.table("jt_dvalid", ["mv_rd_ok" if hi & 7 < 4 else "trap_arg" for hi in range(256)])
    g.table("tab_rs", [regs[lo >> 5] for lo in range(256)])
    g.table("tab_ds", [dregs[(lo >> 5) & 3] for lo in range(256)])
    g.table("jt_move", [("mv_rr", "mv_rd", "mv_dr" if lo >> 5 < 4 else "trap_arg", "trap_arg")[(lo >> 3) & 3]
                        for lo in range(256)])
    g.table("jt_ldm", ["ldm_ok" if lo >> 5 < 4 else "trap_arg" for lo in range(256)])
    g.table("tab_nx256", [(-(v << 8)) & 0xFFFF for v in range(256)])
    for op in ("jump", "jz", "jnz", "jc", "jnc"):
        g.table(f"jt_{op}", [f"{op}_abs" if not (lo >> 2) & 1 else
                             (f"{op}_ind" if lo >> 5 < 4 else "trap_arg") for lo in range(256)])


def build() -> str:
    g = _Gen()
    _handlers(g)
    _tables(g)
    out = ["; dremu.vra: DynaRisc interpreter for the VeRisc machine (generated, do not edit)",
           f"; guest octet a lives in word 0x{GUEST_BASE:04X}+a; guest traps halt with 0x{TRAP_EXIT:04X}|cause"]
    out += g.code
    out.append("; ---- tables")
    for name, entries in g.tables:
        out.append(f"{name}:")
        for i in range(0, len(entries), 8):
            out.append("        .word " + ", ".join(entries[i:i + 8]))
    out.append("; ---- constants")
    for key, name in g.consts.items():
        out.append(f"{name}: .word {'0x' + key if name == 'k' + key else key}")
    out.append("; ---- guest registers, flags and scratch")
    names = [f"r{i}" for i in range(8)] + [f"d{i}" for i in range(4)] + ["fc"]
    names += ["hi", "lo", "alo", "a", "b", "nb", "n", "m", "ea", "pl", "ph", "al", "ah", "nal", "nah",
              "sh_ret"] + g.vars
    out.append("pc: .word 0x0100")
    out.append("fz: .word 1              ; Z starts clear")
    for name in dict.fromkeys(names):
        out.append(f"{name}: .word 0")
    return "\n".join(out) + "\n"
