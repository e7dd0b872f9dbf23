"""Tiny macro layer for writing DynaRisc guest programs from Python."""

from __future__ import annotations


class Src:
    """Accumulates DynaRisc source lines; helpers expand common idioms.

    Helpers use R7 and the pointer register ``d`` (D0 unless given) as scratch.
    """

    def __init__(self):
        self.lines: list[str] = []

    def __call__(self, *lines: str):
        for ln in lines:
            self.lines.append(ln if ln.endswith(":") or ln.startswith(";") else "        " + ln)

    def ptr(self, addr, d="D0"):
        self(f"LDI R7, #{addr}", f"MOVE {d}, R7")

    def ld16(self, r, addr, d="D0"):
        """r = 16-bit variable stored high octet first."""
        self.ptr(addr, d)
        self(f"LDM {r}, [{d}]", "LDI R7, #8", f"LSL {r}, R7")
        self.ptr(addr + 1, d)
        self(f"LDM R7, [{d}]", f"OR {r}, R7")

    def st16(self, r, addr, tmp, d="D0"):
        """Store r as a 16-bit variable; ``tmp`` is clobbered (may equal r)."""
        self.ptr(addr + 1, d)
        self(f"STM {r}, [{d}]", f"MOVE {tmp}, {r}", "LDI R7, #8", f"LSR {tmp}, R7")
        self.ptr(addr, d)
        self(f"STM {tmp}, [{d}]")

    def ldb(self, r, addr, idx=None, d="D0"):
        """r = octet at addr (+ idx register)."""
        self.addr(addr, idx, d)
        self(f"LDM {r}, [{d}]")

    def stb(self, r, addr, idx=None, d="D0"):
        self.addr(addr, idx, d)
        self(f"STM {r}, [{d}]")

    def addr(self, addr, idx, d):
        if idx is None:
            self.ptr(addr, d)
        else:
            self(f"LDI R7, #{addr}", "CMP R7, R7", f"ADC R7, {idx}", f"MOVE {d}, R7")

    def add_const(self, r, value):
        self("CMP R7, R7", f"LDI R7, #{value & 0xFFFF}", f"ADC {r}, R7")

    def sub_const(self, r, value):
        self(f"LDI R7, #{value & 0xFFFF}", f"SUB {r}, R7")

    def call(self, label, ret):
        self(f"LDI R7, #{ret}", "MOVE D3, R7", f"JUMP {label}", f"{ret}:")

    def call_d2(self, label, ret):
        """Call a routine that returns through D2."""
        self(f"LDI R7, #{ret}", "MOVE D2, R7", f"JUMP {label}", f"{ret}:")

    def read_byte(self, off):
        """R2 = input octet at constant offset ``off`` (0 past the end)."""
        self(f"LDI R0, #{off & 0xFFFF}", f"LDI R1, #{off >> 16}", "SYS 0")

    def eof_zero(self, tag):
        """Map the end-of-input marker in R2 to 0."""
        self("LDI R7, #0xFFFF", "CMP R2, R7", f"JNZ {tag}", "SUB R2, R2", f"{tag}:")

    def exit(self, code):
        self(f"LDI R0, #{code}", "HALT")
