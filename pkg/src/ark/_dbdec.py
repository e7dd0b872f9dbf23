"""Generator for dbdec.dra, the ULDB container decoder written in DynaRisc.

Register plan inside the token loop: R3:R4 = range (low, high), R5:R6 =
code (low, high); R0-R2 and R7 are scratch. D0 is the working pointer, D3
the link register of leaf routines, D1/D2 are scratch in ``decbit`` and hold
the copy state while a match is expanded.

16-bit memory variables are stored high octet first.
"""

from __future__ import annotations

from ._dra import Src as _Src

PROBS = 0x1000            # 8702 probabilities, 2 octets each
LIT_ADDR = PROBS + 2 * 1
LEN_ADDR = PROBS + 2 * 256
DIST_ADDR = PROBS + 2 * 511
PROBS_END = PROBS + 2 * 8702
CRCT = 0x5400             # 256 entries x 4 octets, little-endian
VARS = 0x5800
WIN = 0x6000              # 8 KiB history window

V = {name: VARS + 2 * i for i, name in enumerate(
    ["cur_lo", "cur_hi", "rem_lo", "rem_hi", "have", "wpos", "mlen", "mdist"])}
CRC = VARS + 0x20         # running CRC, 4 octets little-endian
EXP = VARS + 0x24         # stored CRC, 4 octets little-endian

EXIT_OK, EXIT_FORMAT, EXIT_CRC, EXIT_MALFORMED = 0, 1, 2, 3


def _tree(s: _Src, tag: str, first: int, k: int, end: int):
    """Bit-tree decode; D0 walks the probability addresses. Result in R1."""
    s(f"LDI R0, #{first}", "MOVE D0, R0", f"{tag}:")
    s.call("decbit", f"{tag}_r")
    s("MOVE R1, D0", "CMP R1, R1", "ADC R1, R1", "ADC R1, R0", "ADC R1, R0",
      f"LDI R7, #{k}", "SUB R1, R7", "MOVE D0, R1",
      f"LDI R7, #{end}", "CMP R1, R7", f"JC {tag}",
      "SUB R1, R7", "LDI R7, #1", "LSR R1, R7")


def _load_prob(s: _Src, r: str, tmp: str):
    """r = probability at D0 (D1 = D0 + 1 afterwards)."""
    s(f"LDM {r}, [D0]", "LDI R7, #8", f"LSL {r}, R7",
      f"MOVE {tmp}, D0", "LDI R7, #1", "CMP R7, R7", f"ADC {tmp}, R7", f"MOVE D1, {tmp}",
      f"LDM {tmp}, [D1]", f"OR {r}, {tmp}")


def build() -> str:
    s = _Src()
    s("; dbdec.dra: ULDB container decoder (generated, do not edit)",
      "; input: container octets via SYS 0; output: original octets via SYS 1",
      f"; exit codes: {EXIT_OK} ok, {EXIT_FORMAT} bad header, {EXIT_CRC} CRC mismatch, "
      f"{EXIT_MALFORMED} malformed stream")

    # ---------------------------------------------------------------- header
    s("SYS 2", "LDI R7, #0", "CMP R1, R7", "JNZ hdr_len_ok",
      "LDI R7, #13", "CMP R0, R7", "JC bad_header", "hdr_len_ok:")
    for i, ch in enumerate(b"ULDB\x01"):
        s.read_byte(i)
        s(f"LDI R7, #{ch}", "CMP R2, R7", "JNZ bad_header")
    # length -> rem (lo word from octets 5,6; hi word from 7,8)
    for word, (lo_off, name) in enumerate(((5, "rem_lo"), (7, "rem_hi"))):
        s.read_byte(lo_off + 1)
        s("MOVE R3, R2", "LDI R7, #8", "LSL R3, R7")
        s.read_byte(lo_off)
        s("OR R3, R2")
        s.st16("R3", V[name], "R4")
    for i in range(4):
        s.read_byte(9 + i)
        s.ptr(EXP + i)
        s("STM R2, [D0]")
        s.ptr(CRC + i)
        s("LDI R2, #0xFF", "STM R2, [D0]")

    # ---------------------------------------------------------- model init
    s("LDI R0, #8", "SUB R1, R1", "LDI R2, #1", f"LDI R3, #{PROBS}", f"LDI R4, #{PROBS_END}",
      "init_p:", "MOVE D0, R3", "STM R0, [D0]", "CMP R7, R7", "ADC R3, R2", "MOVE D0, R3",
      "STM R1, [D0]", "CMP R7, R7", "ADC R3, R2", "CMP R3, R4", "JNZ init_p")

    # ------------------------------------------------- CRC table (bitwise)
    # R0 = index, R1:R2 = crc (low, high), R3 = bit counter, R4 = 1
    s("SUB R0, R0", "LDI R4, #1", f"LDI R5, #{CRCT}",
      "crc_i:", "MOVE R1, R0", "SUB R2, R2", "LDI R3, #8",
      "crc_b:", "MOVE R6, R1", "AND R6, R4",
      "LSR R2, R4", "JNC crc_nc", "LSR R1, R4", "LDI R7, #0x8000", "OR R1, R7", "JUMP crc_x",
      "crc_nc:", "LSR R1, R4",
      "crc_x:", "SUB R7, R7", "CMP R6, R7", "JZ crc_n",
      "LDI R7, #0x8320", "XOR R1, R7", "LDI R7, #0xEDB8", "XOR R2, R7",
      "crc_n:", "SUB R3, R4", "JNZ crc_b")
    # store little-endian at R5, advance
    s("MOVE D0, R5", "STM R1, [D0]", "CMP R7, R7", "ADC R5, R4",
      "MOVE R6, R1", "LDI R7, #8", "LSR R6, R7", "MOVE D0, R5", "STM R6, [D0]", "CMP R7, R7", "ADC R5, R4",
      "MOVE D0, R5", "STM R2, [D0]", "CMP R7, R7", "ADC R5, R4",
      "MOVE R6, R2", "LDI R7, #8", "LSR R6, R7", "MOVE D0, R5", "STM R6, [D0]", "CMP R7, R7", "ADC R5, R4",
      "CMP R7, R7", "ADC R0, R4", "LDI R7, #256", "CMP R0, R7", "JNZ crc_i")

    # ------------------------------------------------- range decoder init
    s("LDI R3, #0xFFFF", "LDI R4, #0xFFFF")
    for reg, off in (("R6", 13), ("R5", 15)):
        s.read_byte(off)
        s.eof_zero(f"eof_{off}")
        s(f"MOVE {reg}, R2", "LDI R7, #8", f"LSL {reg}, R7")
        s.read_byte(off + 1)
        s.eof_zero(f"eof_{off + 1}")
        s(f"OR {reg}, R2")
    s("LDI R0, #17")
    s.st16("R0", V["cur_lo"], "R1")
    s("SUB R0, R0")
    s.st16("R0", V["cur_hi"], "R1")
    s.st16("R0", V["have"], "R1")
    s(f"LDI R0, #{WIN}")
    s.st16("R0", V["wpos"], "R1")

    # ------------------------------------------------------------ token loop
    s("loop:")
    s.ld16("R0", V["rem_lo"])
    s.ld16("R1", V["rem_hi"])
    s("OR R0, R1", "JZ finish")
    s(f"LDI R0, #{PROBS}", "MOVE D0, R0")
    s.call("decbit", "tok_r")
    s("SUB R7, R7", "CMP R0, R7", "JNZ match")
    _tree(s, "lit", LIT_ADDR, PROBS, LIT_ADDR + 2 * 255)
    s("MOVE R2, R1")
    s.call("emit", "lit_e")
    s("LDI R0, #1")
    s.call("consume", "lit_c")
    s("JUMP loop")

    s("match:")
    _tree(s, "len", LEN_ADDR, PROBS + 2 * 256 - 2, LEN_ADDR + 2 * 255)
    s("CMP R7, R7", "LDI R7, #3", "ADC R1, R7")
    s.st16("R1", V["mlen"], "R2")
    _tree(s, "dist", DIST_ADDR, PROBS + 2 * 511 - 2, DIST_ADDR + 2 * 8191)
    s("LDI R7, #1", "CMP R7, R7", "ADC R1, R7")
    s.st16("R1", V["mdist"], "R2")
    # dist <= have
    s.ld16("R0", V["have"])
    s.ld16("R1", V["mdist"])
    s("CMP R0, R1", "JC malformed")
    # len <= rem
    s.ld16("R0", V["rem_hi"])
    s("SUB R7, R7", "CMP R0, R7", "JNZ len_ok")
    s.ld16("R0", V["rem_lo"])
    s.ld16("R1", V["mlen"])
    s("CMP R0, R1", "JC malformed", "len_ok:")
    # D2 = source address, D1 = count
    s.ld16("R0", V["wpos"])
    s.ld16("R1", V["mdist"])
    s("SUB R0, R1", "LDI R7, #0x1FFF", "AND R0, R7", f"LDI R7, #{WIN}", "OR R0, R7", "MOVE D2, R0")
    s.ld16("R0", V["mlen"])
    s("MOVE D1, R0",
      "copy:", "LDM R2, [D2]")
    s.call("emit", "copy_e")
    s("MOVE R0, D2", "LDI R7, #1", "CMP R7, R7", "ADC R0, R7", "LDI R7, #0x1FFF", "AND R0, R7",
      f"LDI R7, #{WIN}", "OR R0, R7", "MOVE D2, R0",
      "MOVE R0, D1", "LDI R7, #1", "SUB R0, R7", "MOVE D1, R0", "JNZ copy")
    s.ld16("R0", V["mlen"])
    s.call("consume", "mat_c")
    s("JUMP loop")

    # ----------------------------------------------------------- finish
    s("finish:")
    for i in range(4):
        s.ptr(CRC + i)
        s("LDM R0, [D0]", "LDI R7, #0xFF", "XOR R0, R7")
        s.ptr(EXP + i)
        s("LDM R1, [D0]", "CMP R0, R1", "JNZ bad_crc")
    s.exit(EXIT_OK)
    s("bad_header:")
    s.exit(EXIT_FORMAT)
    s("bad_crc:")
    s.exit(EXIT_CRC)
    s("malformed:")
    s.exit(EXIT_MALFORMED)

    # ------------------------------------------ consume: rem -= R0, have += R0
    s("consume:")
    s("MOVE R2, R0")
    s.ld16("R0", V["rem_lo"])
    s.ld16("R1", V["rem_hi"])
    s("SUB R0, R2", "LDI R7, #0", "SBB R1, R7")
    s.st16("R0", V["rem_lo"], "R0")
    s.st16("R1", V["rem_hi"], "R1")
    s.ld16("R0", V["have"])
    s("CMP R7, R7", "ADC R0, R2", "LDI R7, #0x4000", "CMP R0, R7", "JC have_ok", "MOVE R0, R7", "have_ok:")
    s.st16("R0", V["have"], "R1")
    s("JUMP [D3]")

    # ------------------------------------------------- emit: output R2
    s("emit:", "SYS 1")
    s.ld16("R0", V["wpos"])
    s("MOVE D0, R0", "STM R2, [D0]", "LDI R7, #1", "CMP R7, R7", "ADC R0, R7",
      "LDI R7, #0x1FFF", "AND R0, R7", f"LDI R7, #{WIN}", "OR R0, R7")
    s.st16("R0", V["wpos"], "R1")
    # CRC: idx = c0 ^ b; crc = (crc >> 8) ^ T[idx]
    s.ptr(CRC)
    s("LDM R0, [D0]", "XOR R0, R2", "LDI R7, #0xFF", "AND R0, R7",
      "CMP R7, R7", "ADC R0, R0", "ADC R0, R0", f"LDI R7, #{CRCT}", "ADC R0, R7", "MOVE R1, R0")
    for i in range(3):
        s("MOVE D0, R1", "LDM R0, [D0]")
        s.ptr(CRC + i + 1)
        s("LDM R2, [D0]", "XOR R0, R2")
        s.ptr(CRC + i)
        s("STM R0, [D0]", "LDI R7, #1", "CMP R7, R7", "ADC R1, R7")
    s("MOVE D0, R1", "LDM R0, [D0]")
    s.ptr(CRC + 3)
    s("STM R0, [D0]", "JUMP [D3]")

    # ------------------------------------------- decbit: D0 = prob address
    s("decbit:")
    _load_prob(s, "R0", "R1")
    # R2:R1 = range >> 12
    s("MOVE R1, R4", "LDI R7, #4", "LSL R1, R7", "MOVE R2, R3", "LDI R7, #12", "LSR R2, R7",
      "OR R1, R2", "MOVE R2, R4", "LSR R2, R7")
    # bound = (range >> 12) * p into R6:R5 (code parked in D1/D2)
    s("MOVE D1, R5", "MOVE D2, R6", "SUB R5, R5", "SUB R6, R6", "LDI R7, #1",
      "mul:", "LSR R0, R7", "JNC mul_s", "CMP R7, R7", "ADC R5, R1", "ADC R6, R2",
      "mul_s:", "OR R0, R0", "JZ mul_d", "CMP R7, R7", "ADC R1, R1", "ADC R2, R2", "JUMP mul",
      "mul_d:", "MOVE R1, D1", "MOVE R2, D2", "SUB R1, R5", "SBB R2, R6", "JC bit0")
    # bit 1: code -= bound, range -= bound, p -= p >> 5
    s("SUB R3, R5", "SBB R4, R6", "MOVE R5, R1", "MOVE R6, R2")
    _load_prob(s, "R1", "R0")
    s("MOVE R2, R1", "LDI R7, #5", "LSR R2, R7", "SUB R1, R2", "LDI R0, #1", "JUMP bit_st")
    # bit 0: range = bound, p += (4096 - p) >> 5
    s("bit0:", "MOVE R3, R5", "MOVE R4, R6", "MOVE R5, D1", "MOVE R6, D2")
    _load_prob(s, "R1", "R0")
    s("LDI R2, #4096", "SUB R2, R1", "LDI R7, #5", "LSR R2, R7", "CMP R7, R7", "ADC R1, R2",
      "SUB R0, R0")
    s("bit_st:", "STM R1, [D1]", "LDI R7, #8", "LSR R1, R7", "STM R1, [D0]", "MOVE D1, R0")
    # normalize while range < 2^24
    s("norm:", "LDI R7, #0x100", "CMP R4, R7", "JNC norm_d",
      "LDI R7, #8", "LSL R4, R7", "MOVE R2, R3", "LSR R2, R7", "OR R4, R2", "LSL R3, R7",
      "LSL R6, R7", "MOVE R2, R5", "LSR R2, R7", "OR R6, R2", "LSL R5, R7")
    # D2 keeps the probability address while D0 is borrowed
    s("MOVE R0, D0", "MOVE D2, R0")
    s.ld16("R0", V["cur_lo"])
    s.ld16("R1", V["cur_hi"])
    s("SYS 0")
    s.eof_zero("eof_norm")
    s("OR R5, R2", "LDI R7, #1", "CMP R7, R7", "ADC R0, R7", "LDI R7, #0", "ADC R1, R7")
    s.st16("R0", V["cur_lo"], "R2")
    s.st16("R1", V["cur_hi"], "R2")
    s("MOVE R0, D2", "MOVE D0, R0", "JUMP norm",
      "norm_d:", "MOVE R0, D1", "JUMP [D3]")
    return "\n".join(s.lines) + "\n"
