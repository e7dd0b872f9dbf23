"""Generator for mocdec.dra, the emblem decoder written in DynaRisc.

Input is a GuestScanBundle ("ULSC", u16 count, per image u32 offset, u16
width, u16 height, then 8-bit pixels). For every image the guest emits a
u32 little-endian payload length followed by the payload, or 0xFFFFFFFF
when the image does not decode.

Scope: axis-aligned renders (translation and integer cell size). The frame
corner is found by scanning the centre row and column; the top frame edge
gives G * cell_px and the frame thickness at mid-width gives 6 * cell_px.
Cells are read at their centres with a fixed threshold of 128, bits are
recovered by hard differential-Manchester decoding, and each RS(255,223)
codeword is decoded errors-only (Berlekamp-Massey, Chien, Forney). Emblems
whose codewords do not fit the buffer are walked in batches; such images
are decoded twice so that nothing is written before every batch succeeded.
"""

from __future__ import annotations

from . import ecc
from .mocoder import HEADER_BLOCK, PROFILES
from ._dra import Src

EXP = 0x2000              # 512 entries; code must end below
LOG = 0x2200              # 256 entries
SYN = 0x2300              # 32 syndromes
LAM = 0x2320              # error locator, 34 coefficients
BPOLY = 0x2360            # BM correction polynomial
TPOLY = 0x23A0            # BM scratch polynomial
OMG = 0x23E0              # error evaluator, 32 coefficients
HDR = 0x2400              # 80 header octets
VOTE = 0x2460             # voted header
VARS = 0x2500
BUF = 0x2600
BMAX = (0x8000 - BUF) // ecc.N

_NAMES = ["w", "h", "offl", "offh", "x0", "y0", "cp", "g", "i", "n", "nb", "j0", "bn",
          "s", "jj", "ii", "plen", "rem", "rowl", "rowh", "rstl", "rsth", "xs", "xo",
          "dx", "ndx", "img", "cnt", "phase", "dirl", "runr", "cw", "b", "t0", "t1"]
V = {name: VARS + 2 * k for k, name in enumerate(_NAMES)}
# single-octet RS scratch
RS_R, RS_L, RS_DEG, RS_NROOT, RS_K, RS_XL, RS_J = (VARS + 0x80 + k for k in range(7))

EXIT_OK, EXIT_FORMAT = 0, 1


def _profiles():
    out = []
    for geom in sorted(PROFILES.values(), key=lambda g: g.grid_side):
        out.append((geom.grid_side, geom.interior, geom.n_codewords))
    return out


def _mulpow(s: Src, rv: str, rk: str, tag: str):
    """rv = rv * alpha^rk (rk holds an exponent 0..254); R7, D0 scratch."""
    s(f"OR {rv}, {rv}", f"JZ {tag}")
    s.ldb(rv, LOG, rv)
    s("CMP R7, R7", f"ADC {rv}, {rk}")
    s.ldb(rv, EXP, rv)
    s(f"{tag}:")


def _scan(s: Src):
    """scan: R5:R6 = start offset, D1:D2 = step, R4 = limit, D0 = 1 to seek a
    dark pixel or 0 to seek a light one. Returns the step count in R3."""
    s("scan:", "SUB R3, R3",
      "scan_l:", "CMP R3, R4", "JZ scan_d",
      "MOVE R0, R5", "MOVE R1, R6", "SYS 0", "LDI R7, #128", "CMP R2, R7",
      "LDI R0, #0", "LDI R7, #0", "ADC R0, R7", "MOVE R1, D0", "CMP R0, R1", "JZ scan_d",
      "MOVE R7, D1", "CMP R0, R0", "ADC R5, R7", "MOVE R7, D2", "ADC R6, R7",
      "LDI R7, #1", "CMP R7, R7", "ADC R3, R7", "JUMP scan_l",
      "scan_d:", "JUMP [D3]")


def _mul32(s: Src):
    """mul32: R1:R0 = R0 * R1 (unsigned 16x16); clobbers R2-R4, R7."""
    s("mul32:", "SUB R2, R2", "SUB R3, R3", "SUB R4, R4",
      "m32_l:", "OR R1, R1", "JZ m32_d", "LDI R7, #1", "LSR R1, R7", "JNC m32_s",
      "CMP R7, R7", "ADC R3, R0", "ADC R4, R2",
      "m32_s:", "CMP R7, R7", "ADC R0, R0", "ADC R2, R2", "JUMP m32_l",
      "m32_d:", "MOVE R0, R3", "MOVE R1, R4", "JUMP [D3]")


def _gfmul(s: Src):
    """gfmul: R0 = R0 * R1 in GF(256); clobbers R7, D0; link D2."""
    s("gfmul:", "OR R0, R0", "JZ gfm_z", "OR R1, R1", "JZ gfm_0")
    s.ldb("R0", LOG, "R0")
    s.addr(LOG, "R1", "D0")
    s("LDM R7, [D0]", "CMP R1, R1", "ADC R0, R7")
    s.ldb("R0", EXP, "R0")
    s("gfm_z:", "JUMP [D2]",
      "gfm_0:", "SUB R0, R0", "JUMP [D2]")


def _gfcall(s: Src, ret: str):
    s(f"LDI R7, #{ret}", "MOVE D2, R7", "JUMP gfmul", f"{ret}:")


def _syndromes(s: Src):
    """synd: SYN[j] = cw(alpha^j); R0 = OR of all syndromes. Link D2."""
    s("synd:", "SUB R3, R3", "SUB R6, R6",
      "syn_j:", "SUB R4, R4")
    s.ld16("R0", V["cw"])
    s("MOVE D1, R0", "LDI R5, #255",
      "syn_i:")
    _mulpow(s, "R4", "R3", "syn_m")
    s("LDM R7, [D1]", "XOR R4, R7",
      "MOVE R7, D1", "LDI R0, #1", "CMP R0, R0", "ADC R7, R0", "MOVE D1, R7",
      "LDI R7, #1", "SUB R5, R7", "JNZ syn_i")
    s.stb("R4", SYN, "R3")
    s("OR R6, R4", "LDI R7, #1", "CMP R7, R7", "ADC R3, R7", "LDI R7, #32", "CMP R3, R7", "JNZ syn_j",
      "MOVE R0, R6", "JUMP [D2]")


def _shift_b(s: Src, tag: str):
    """BPOLY <- x * BPOLY."""
    s("LDI R6, #33", f"{tag}:")
    s("MOVE R2, R6", "LDI R7, #1", "SUB R2, R7")
    s.ldb("R0", BPOLY, "R2")
    s.stb("R0", BPOLY, "R6")
    s("MOVE R6, R2", "OR R6, R6", f"JNZ {tag}", "SUB R0, R0")
    s.stb("R0", BPOLY)


def _rsdec(s: Src):
    """rsdec: decode the codeword at V[cw] in place; R0 = 0 ok, 1 failure.
    Link D3."""
    s("rsdec:")
    s.call_d2("synd", "rs_s1")
    s("OR R0, R0", "JNZ rs_go", "JUMP [D3]", "rs_go:")
    # lam = b = 1, L = 0
    s("SUB R0, R0", "LDI R6, #34", "rs_clr:", "LDI R7, #1", "SUB R6, R7")
    s.stb("R0", LAM, "R6")
    s.stb("R0", BPOLY, "R6")
    s("OR R6, R6", "JNZ rs_clr", "LDI R0, #1")
    s.stb("R0", LAM)
    s.stb("R0", BPOLY)
    s("SUB R0, R0")
    s.stb("R0", RS_L)
    s("LDI R3, #1")
    s.stb("R3", RS_R)
    # ---- Berlekamp-Massey, r = 1..32
    s("bm_r:", "SUB R5, R5", "SUB R6, R6")
    s("bm_d:")                              # delta += lam[j] * S[r-1-j], j = 0..L
    s.ldb("R3", RS_R)
    s("LDI R7, #1", "SUB R3, R7", "SUB R3, R6", "JC bm_dn")
    s.ldb("R1", SYN, "R3")
    s.ldb("R0", LAM, "R6")
    _gfcall(s, "bm_d1")
    s("XOR R5, R0",
      "bm_dn:")
    s.ldb("R4", RS_L)
    s("CMP R6, R4", "JZ bm_dd", "LDI R7, #1", "CMP R7, R7", "ADC R6, R7", "JUMP bm_d", "bm_dd:")
    s("OR R5, R5", "JNZ bm_nz")
    _shift_b(s, "bm_sh0")
    s("JUMP bm_next", "bm_nz:")
    # t = lam ^ delta * x * b
    s.ldb("R0", LAM)
    s.stb("R0", TPOLY)
    s("LDI R6, #1", "bm_t:", "MOVE R2, R6", "LDI R7, #1", "SUB R2, R7")
    s.ldb("R0", BPOLY, "R2")
    s("MOVE R1, R5")
    _gfcall(s, "bm_t1")
    s.ldb("R1", LAM, "R6")
    s("XOR R0, R1")
    s.stb("R0", TPOLY, "R6")
    s("LDI R7, #1", "CMP R7, R7", "ADC R6, R7", "LDI R7, #34", "CMP R6, R7", "JNZ bm_t")
    # 2L <= r-1 ?
    s.ldb("R0", RS_L)
    s("CMP R7, R7", "ADC R0, R0")
    s.ldb("R1", RS_R)
    s("LDI R7, #1", "SUB R1, R7", "CMP R1, R0", "JC bm_keep")
    # b = lam / delta ; L = r - L
    s.ldb("R2", LOG, "R5")
    s("LDI R7, #255", "SUB R7, R2", "MOVE R2, R7")
    s.ldb("R2", EXP, "R2")
    s("SUB R6, R6", "bm_b:")
    s.ldb("R0", LAM, "R6")
    s("MOVE R1, R2")
    _gfcall(s, "bm_b1")
    s.stb("R0", BPOLY, "R6")
    s("LDI R7, #1", "CMP R7, R7", "ADC R6, R7", "LDI R7, #34", "CMP R6, R7", "JNZ bm_b")
    s.ldb("R0", RS_R)
    s.ldb("R1", RS_L)
    s("SUB R0, R1")
    s.stb("R0", RS_L)
    s("JUMP bm_copy", "bm_keep:")
    _shift_b(s, "bm_sh1")
    s("bm_copy:", "SUB R6, R6", "bm_c:")
    s.ldb("R0", TPOLY, "R6")
    s.stb("R0", LAM, "R6")
    s("LDI R7, #1", "CMP R7, R7", "ADC R6, R7", "LDI R7, #34", "CMP R6, R7", "JNZ bm_c")
    s("bm_next:")
    s.ldb("R3", RS_R)
    s("LDI R7, #1", "CMP R7, R7", "ADC R3, R7")
    s.stb("R3", RS_R)
    s("LDI R7, #33", "CMP R3, R7", "JNZ bm_r")
    # ---- degree must equal L and L <= 16
    s("LDI R6, #34", "rs_deg:", "LDI R7, #1", "SUB R6, R7")
    s.ldb("R0", LAM, "R6")
    s("OR R0, R0", "JZ rs_deg")
    s.stb("R6", RS_DEG)
    s.ldb("R0", RS_L)
    s("CMP R0, R6", "JNZ rs_fail", "LDI R7, #17", "CMP R6, R7", "JNC rs_fail")
    # ---- omega[i] = sum_{j <= min(i, deg)} S[i-j] lam[j]
    s("SUB R3, R3", "om_i:", "SUB R4, R4", "SUB R6, R6",
      "om_j:", "MOVE R2, R3", "SUB R2, R6", "JC om_w")
    s.ldb("R1", SYN, "R2")
    s.ldb("R0", LAM, "R6")
    _gfcall(s, "om_m")
    s("XOR R4, R0", "LDI R7, #1", "CMP R7, R7", "ADC R6, R7")
    s.ldb("R0", RS_DEG)
    s("CMP R0, R6", "JNC om_j",
      "om_w:")
    s.stb("R4", OMG, "R3")
    s("LDI R7, #1", "CMP R7, R7", "ADC R3, R7", "LDI R7, #32", "CMP R3, R7", "JNZ om_i")
    # ---- Chien search with Forney correction
    s("SUB R0, R0")
    s.stb("R0", RS_NROOT)
    s("SUB R3, R3", "ch_k:", "SUB R4, R4")
    s.ldb("R5", RS_DEG)
    s("ch_j:")
    _mulpow(s, "R4", "R3", "ch_m")
    s.ldb("R7", LAM, "R5")
    s("XOR R4, R7", "OR R5, R5", "JZ ch_v", "LDI R7, #1", "SUB R5, R7", "JUMP ch_j",
      "ch_v:", "OR R4, R4", "JNZ ch_next")
    # root alpha^k: xl = (255 - k) % 255, position 254 - xl
    s.stb("R3", RS_K)
    s("LDI R0, #255", "SUB R0, R3", "LDI R7, #255", "CMP R0, R7", "JNZ ch_xl", "SUB R0, R0", "ch_xl:")
    s.stb("R0", RS_XL)
    s.ldb("R0", RS_NROOT)
    s("LDI R7, #1", "CMP R7, R7", "ADC R0, R7")
    s.stb("R0", RS_NROOT)
    s.ldb("R1", RS_DEG)
    s("CMP R1, R0", "JC rs_fail")
    # num = omega(x^-1) * x
    s("SUB R4, R4", "LDI R5, #32", "fo_n:", "LDI R7, #1", "SUB R5, R7")
    _mulpow(s, "R4", "R3", "fo_nm")
    s.ldb("R7", OMG, "R5")
    s("XOR R4, R7", "OR R5, R5", "JNZ fo_n")
    s.ldb("R1", RS_XL)
    _mulpow(s, "R4", "R1", "fo_nx")
    # den = sum over odd j of lam[j] x^-(j-1); x^-2 = alpha^(2k mod 255)
    s("MOVE R2, R3", "CMP R7, R7", "ADC R2, R3", "LDI R7, #255", "CMP R2, R7", "JC fo_k2", "SUB R2, R7", "fo_k2:",
      "SUB R6, R6")
    s.ldb("R5", RS_DEG)
    s("LDI R7, #1", "MOVE R0, R5", "AND R0, R7", "JNZ fo_d", "SUB R5, R7",
      "fo_d:")
    _mulpow(s, "R6", "R2", "fo_dm")
    s.ldb("R7", LAM, "R5")
    s("XOR R6, R7", "LDI R7, #1", "CMP R5, R7", "JZ fo_dd", "LDI R7, #2", "SUB R5, R7", "JUMP fo_d",
      "fo_dd:", "OR R6, R6", "JZ rs_fail")
    # mag = num / den
    s("OR R4, R4", "JZ fo_app")
    s.ldb("R4", LOG, "R4")
    s.ldb("R6", LOG, "R6")
    s("LDI R7, #255", "CMP R7, R7", "LDI R7, #255", "ADC R4, R7", "SUB R4, R6")
    s.ldb("R4", EXP, "R4")
    s("fo_app:")
    s.ldb("R1", RS_XL)
    s("LDI R0, #254", "SUB R0, R1")
    s.ld16("R1", V["cw"])
    s("CMP R7, R7", "ADC R0, R1", "MOVE D1, R0", "LDM R1, [D1]", "XOR R1, R4", "STM R1, [D1]")
    s.ldb("R3", RS_K)
    s("ch_next:", "LDI R7, #1", "CMP R7, R7", "ADC R3, R7", "LDI R7, #255", "CMP R3, R7", "JNZ ch_k")
    s.ldb("R0", RS_NROOT)
    s.ldb("R1", RS_DEG)
    s("CMP R0, R1", "JNZ rs_fail")
    s.call_d2("synd", "rs_s2")
    s("OR R0, R0", "JNZ rs_fail", "JUMP [D3]",
      "rs_fail:", "LDI R0, #1", "JUMP [D3]")


def _header(s: Src):
    """hdrchk: vote the 5 header copies into VOTE, check CRC and length.
    R0 = 0 ok, 1 failure. Link D3."""
    s("hdrchk:", "SUB R3, R3",
      "hv_j:", "SUB R6, R6", "SUB R4, R4",
      "hv_k:", "MOVE R2, R3", "CMP R7, R7", "ADC R2, R4")
    s.ldb("R1", HDR, "R2")
    s("SUB R2, R2", "SUB R5, R5",
      "hv_m:", "MOVE R0, R3", "CMP R7, R7", "ADC R0, R5")
    s.ldb("R0", HDR, "R0")
    s("CMP R0, R1", "JNZ hv_mn", "LDI R7, #1", "CMP R7, R7", "ADC R2, R7",
      "hv_mn:", "LDI R7, #16", "CMP R7, R7", "LDI R7, #16", "ADC R5, R7", "LDI R7, #80", "CMP R5, R7", "JNZ hv_m",
      "CMP R6, R2", "JNC hv_kn", "MOVE R6, R2", "MOVE D1, R1",
      "hv_kn:", "CMP R7, R7", "LDI R7, #16", "ADC R4, R7", "LDI R7, #80", "CMP R4, R7", "JNZ hv_k",
      "MOVE R0, D1")
    s.stb("R0", VOTE, "R3")
    s("LDI R7, #1", "CMP R7, R7", "ADC R3, R7", "LDI R7, #16", "CMP R3, R7", "JNZ hv_j")
    # CRC32 of the first 12 voted octets
    s("LDI R1, #0xFFFF", "LDI R2, #0xFFFF", "SUB R3, R3", "LDI R6, #1",
      "hc_b:")
    s.ldb("R0", VOTE, "R3")
    s("XOR R1, R0", "LDI R4, #8",
      "hc_i:", "MOVE R5, R1", "AND R5, R6",
      "LSR R2, R6", "JNC hc_nc", "LSR R1, R6", "LDI R7, #0x8000", "OR R1, R7", "JUMP hc_x",
      "hc_nc:", "LSR R1, R6",
      "hc_x:", "OR R5, R5", "JZ hc_n", "LDI R7, #0x8320", "XOR R1, R7", "LDI R7, #0xEDB8", "XOR R2, R7",
      "hc_n:", "SUB R4, R6", "JNZ hc_i",
      "CMP R7, R7", "ADC R3, R6", "LDI R7, #12", "CMP R3, R7", "JNZ hc_b",
      "LDI R7, #0xFFFF", "XOR R1, R7", "XOR R2, R7")
    for k, (reg, shift) in enumerate((("R1", 0), ("R1", 8), ("R2", 0), ("R2", 8))):
        s(f"MOVE R0, {reg}", f"LDI R7, #{shift}", "LSR R0, R7", "LDI R7, #0xFF", "AND R0, R7")
        s.ldb("R4", VOTE + 12 + k)
        s("CMP R0, R4", "JNZ hc_bad")
    # payload length <= 223 * n
    s.ldb("R0", VOTE + 9)
    s("LDI R7, #8", "LSL R0, R7")
    s.ldb("R1", VOTE + 8)
    s("OR R0, R1")
    s.st16("R0", V["plen"], "R1")
    s.ld16("R1", V["n"])
    s(f"LDI R7, #{ecc.K}", "MUL R1, R7", "CMP R1, R0", "JC hc_bad",
      "SUB R0, R0", "JUMP [D3]",
      "hc_bad:", "LDI R0, #1", "JUMP [D3]")


def _walk(s: Src):
    """walk: demodulate the stream into HDR and the codeword buffer for
    codewords j0 .. j0+bn-1. Link D3 is saved in V[t1]."""
    s("walk:", "MOVE R0, D3")
    s.st16("R0", V["t1"], "R1")
    s("SUB R0, R0")
    s.st16("R0", V["s"], "R1")
    s.st16("R0", V["jj"], "R1")
    s.st16("R0", V["ii"], "R1")
    s.stb("R0", V["dirl"])
    s.ld16("R0", V["rowl"])
    s("MOVE D1, R0")
    s.ld16("R0", V["rowh"])
    s("MOVE D2, R0")
    s.ld16("R0", V["dx"])
    s("MOVE D0, R0")
    s.ld16("R3", V["xs"], "D3")
    s.ld16("R4", V["i"], "D3")
    s("LDI R7, #1", "LSR R4, R7", "SUB R5, R5", "LDI R6, #1",
      "wk_bit:",
      "MOVE R0, D1", "CMP R7, R7", "ADC R0, R3", "MOVE R1, D2", "LDI R7, #0", "ADC R1, R7",
      "SYS 0", "LDI R7, #128", "CMP R2, R7", "LDI R0, #0", "LDI R7, #0", "ADC R0, R7",
      "MOVE R1, R0", "XOR R1, R5", "MOVE R5, R0", "CMP R7, R7", "ADC R6, R6", "ADC R6, R1",
      "MOVE R7, D0", "CMP R0, R0", "ADC R3, R7",
      "LDI R7, #1", "SUB R4, R7", "JNZ wk_row")
    # next row: rowbase += rowstep, reverse direction
    s.ld16("R0", V["rstl"], "D3")
    s.ld16("R1", V["rsth"], "D3")
    s("MOVE R2, D1", "CMP R7, R7", "ADC R2, R0", "MOVE D1, R2",
      "MOVE R2, D2", "ADC R2, R1", "MOVE D2, R2")
    s.ldb("R0", V["dirl"], d="D3")
    s("LDI R7, #1", "XOR R0, R7")
    s.stb("R0", V["dirl"], d="D3")
    s("OR R0, R0", "JZ wk_even")
    s.ld16("R3", V["xo"], "D3")
    s.ld16("R0", V["ndx"], "D3")
    s("JUMP wk_dir", "wk_even:")
    s.ld16("R3", V["xs"], "D3")
    s.ld16("R0", V["dx"], "D3")
    s("wk_dir:", "MOVE D0, R0")
    s.ld16("R4", V["i"], "D3")
    s("LDI R7, #1", "LSR R4, R7",
      "wk_row:", "LDI R7, #256", "CMP R6, R7", "JC wk_bit")
    # a complete octet
    s("LDI R7, #0xFF", "AND R6, R7")
    s.ld16("R0", V["s"], "D3")
    s(f"LDI R7, #{HEADER_BLOCK}", "CMP R0, R7", "JNC wk_body")
    s.stb("R6", HDR, "R0", "D3")
    s("JUMP wk_adv", "wk_body:")
    s.ld16("R0", V["jj"], "D3")
    s.ld16("R1", V["j0"], "D3")
    s("SUB R0, R1")
    s.ld16("R1", V["bn"], "D3")
    s("CMP R0, R1", "JNC wk_skip", f"LDI R7, #{ecc.N}", "MUL R0, R7")
    s.ld16("R1", V["ii"], "D3")
    s("CMP R7, R7", "ADC R0, R1")
    s.stb("R6", BUF, "R0", "D3")
    s("wk_skip:")
    s.ld16("R0", V["jj"], "D3")
    s("LDI R7, #1", "CMP R7, R7", "ADC R0, R7")
    s.ld16("R1", V["n"], "D3")
    s("CMP R0, R1", "JNZ wk_jj")
    s.ld16("R0", V["ii"], "D3")
    s("LDI R7, #1", "CMP R7, R7", "ADC R0, R7")
    s.st16("R0", V["ii"], "R0", "D3")
    s("SUB R0, R0", "wk_jj:")
    s.st16("R0", V["jj"], "R0", "D3")
    s("wk_adv:")
    s.ld16("R0", V["s"], "D3")
    s("LDI R7, #1", "CMP R7, R7", "ADC R0, R7", "MOVE R1, R0")
    s.st16("R0", V["s"], "R0", "D3")
    s.ld16("R0", V["nb"], "D3")
    s("LDI R6, #1", "CMP R1, R0", "JNZ wk_bit")
    s.ld16("R0", V["t1"])
    s("MOVE D3, R0", "JUMP [D3]")


def build() -> str:
    s = Src()
    s("; mocdec.dra: emblem decoder for axis-aligned scans (generated, do not edit)",
      "; input: GuestScanBundle via SYS 0; output: per image u32 LE length + payload",
      f"; exit codes: {EXIT_OK} ok, {EXIT_FORMAT} bad bundle")
    s("JUMP start")
    _scan(s)
    _mul32(s)
    _gfmul(s)
    _syndromes(s)
    _rsdec(s)
    _header(s)
    _walk(s)

    s("start:")
    # GF tables
    s("LDI R0, #1", "SUB R3, R3", "LDI R4, #0x11D",
      "gf_l:")
    s.stb("R0", EXP, "R3")
    s("LDI R7, #255", "CMP R3, R7", "JNC gf_nolog")
    s.stb("R3", LOG, "R0")
    s("gf_nolog:", "CMP R7, R7", "ADC R0, R0", "LDI R7, #256", "CMP R0, R7", "JC gf_nr", "XOR R0, R4",
      "gf_nr:", "LDI R7, #1", "CMP R7, R7", "ADC R3, R7", "LDI R7, #510", "CMP R3, R7", "JNZ gf_l")
    # bundle header
    for k, ch in enumerate(b"ULSC"):
        s.read_byte(k)
        s(f"LDI R7, #{ch}", "CMP R2, R7", "JNZ bad_bundle")
    s.read_byte(5)
    s("MOVE R3, R2", "LDI R7, #8", "LSL R3, R7")
    s.read_byte(4)
    s("LDI R7, #0xFFFF", "CMP R2, R7", "JZ bad_bundle", "OR R3, R2")
    s.st16("R3", V["cnt"], "R0")
    s("SUB R0, R0")
    s.st16("R0", V["img"], "R1")

    s("next_img:")
    s.ld16("R0", V["img"])
    s.ld16("R1", V["cnt"])
    s("CMP R0, R1", "JNZ img_go")
    s.exit(EXIT_OK)
    s("img_go:")
    # directory entry at 6 + 8 * img (32-bit offset)
    s("LDI R1, #8")
    s.call("mul32", "dir_m")
    s("LDI R7, #6", "CMP R7, R7", "LDI R7, #6", "ADC R0, R7", "LDI R7, #0", "ADC R1, R7",
      "MOVE D1, R0", "MOVE D2, R1")
    for k, name in enumerate(("offl", "offh", "w", "h")):
        for half in (1, 0):
            s("MOVE R0, D1", "MOVE R1, D2", f"LDI R7, #{2 * k + half}", "CMP R3, R3", "ADC R0, R7",
              "LDI R7, #0", "ADC R1, R7", "SYS 0", "LDI R7, #0xFF", "AND R2, R7")
            if half:
                s("MOVE R3, R2", "LDI R7, #8", "LSL R3, R7")
            else:
                s("OR R3, R2")
        s.st16("R3", V[name], "R4")

    # ---- locate: x0 on the centre row
    s.ld16("R0", V["h"])
    s("LDI R7, #1", "LSR R0, R7")
    s.ld16("R1", V["w"])
    s.call("mul32", "loc_m1")
    s.ld16("R5", V["offl"])
    s.ld16("R6", V["offh"])
    s("CMP R7, R7", "ADC R5, R0", "ADC R6, R1",
      "LDI R0, #1", "MOVE D1, R0", "SUB R0, R0", "MOVE D2, R0", "LDI R0, #1", "MOVE D0, R0")
    s.ld16("R4", V["w"])
    s("LDI R7, #1", "MOVE D0, R7")
    s.call("scan", "loc_s1")
    s("CMP R3, R4", "JZ img_fail")
    s.st16("R3", V["x0"], "R0")
    # y0 on the centre column
    s.ld16("R5", V["w"])
    s("LDI R7, #1", "LSR R5, R7")
    s.ld16("R0", V["offl"])
    s.ld16("R6", V["offh"])
    s("CMP R7, R7", "ADC R5, R0", "LDI R7, #0", "ADC R6, R7")
    s.ld16("R0", V["w"])
    s("MOVE D1, R0", "SUB R0, R0", "MOVE D2, R0", "LDI R0, #1", "MOVE D0, R0")
    s.ld16("R4", V["h"])
    s("LDI R7, #1", "MOVE D0, R7")
    s.call("scan", "loc_s2")
    s("CMP R3, R4", "JZ img_fail")
    s.st16("R3", V["y0"], "R0")
    # top edge run from (x0, y0): G * cp
    s.ld16("R0", V["y0"])
    s.ld16("R1", V["w"])
    s.call("mul32", "loc_m2")
    s.ld16("R5", V["offl"])
    s.ld16("R6", V["offh"])
    s("CMP R7, R7", "ADC R5, R0", "ADC R6, R1")
    s.ld16("R0", V["x0"])
    s("CMP R7, R7", "ADC R5, R0", "LDI R7, #0", "ADC R6, R7")
    s.st16("R5", V["t0"], "R0")
    s("MOVE R0, R6")
    s.st16("R0", V["t1"], "R0")
    s("LDI R0, #1", "MOVE D1, R0", "SUB R0, R0", "MOVE D2, R0", "MOVE D0, R0")
    s.ld16("R4", V["w"])
    s.ld16("R0", V["x0"])
    s("SUB R4, R0")
    s("LDI R7, #0", "MOVE D0, R7")
    s.call("scan", "loc_s3")
    s.st16("R3", V["runr"], "R0")
    # frame thickness at mid-width: 6 * cp
    s.ld16("R5", V["t0"])
    s.ld16("R6", V["t1"])
    s.ld16("R0", V["runr"])
    s("LDI R7, #1", "LSR R0, R7", "CMP R7, R7", "ADC R5, R0", "LDI R7, #0", "ADC R6, R7")
    s.ld16("R0", V["w"])
    s("MOVE D1, R0", "SUB R0, R0", "MOVE D2, R0", "MOVE D0, R0")
    s.ld16("R4", V["h"])
    s.ld16("R0", V["y0"])
    s("SUB R4, R0")
    s("LDI R7, #0", "MOVE D0, R7")
    s.call("scan", "loc_s4")
    # cp = T / 6 exactly
    s("SUB R0, R0", "SUB R1, R1",
      "cp_l:", "CMP R0, R3", "JNC cp_d", "LDI R7, #6", "CMP R7, R7", "LDI R7, #6", "ADC R0, R7",
      "LDI R7, #1", "CMP R7, R7", "ADC R1, R7", "JUMP cp_l",
      "cp_d:", "CMP R0, R3", "JNZ img_fail", "LDI R7, #2", "CMP R1, R7", "JC img_fail")
    s.st16("R1", V["cp"], "R0")
    # grid side from the profile table
    s.ld16("R2", V["runr"])
    for k, (g, inner, n) in enumerate(_profiles()):
        s.ld16("R1", V["cp"])
        s(f"LDI R0, #{g}", "MUL R0, R1", f"JC prof_{k}", "CMP R0, R2", f"JNZ prof_{k}",
          f"LDI R0, #{g}", f"LDI R1, #{inner}", f"LDI R3, #{n}", "JUMP prof_ok", f"prof_{k}:")
    s("JUMP img_fail", "prof_ok:")
    s.st16("R0", V["g"], "R4")
    s.st16("R1", V["i"], "R4")
    s.st16("R3", V["n"], "R4")
    s(f"LDI R7, #{ecc.N}", "MUL R3, R7", f"LDI R7, #{HEADER_BLOCK}", "CMP R7, R7",
      f"LDI R7, #{HEADER_BLOCK}", "ADC R3, R7")
    s.st16("R3", V["nb"], "R4")
    # sampling geometry: first interior cell centre
    s.ld16("R1", V["cp"])
    s("LDI R0, #14", "MUL R0, R1", "MOVE R2, R1", "LDI R7, #1", "LSR R2, R7", "CMP R7, R7", "ADC R0, R2",
      "MOVE R5, R0")                              # R5 = 14 cp + cp/2
    s.ld16("R0", V["x0"])
    s("CMP R7, R7", "ADC R0, R5")
    s.st16("R0", V["xs"], "R2")
    s.ld16("R0", V["xs"])
    s.ld16("R1", V["i"])
    s("LDI R7, #1", "SUB R1, R7")
    s.ld16("R2", V["cp"])
    s("MUL R1, R2", "CMP R7, R7", "ADC R0, R1")
    s.st16("R0", V["xo"], "R2")
    s.ld16("R0", V["cp"])
    s("CMP R7, R7", "ADC R0, R0")
    s.st16("R0", V["dx"], "R2")
    s.ld16("R1", V["dx"])
    s("SUB R0, R0", "SUB R0, R1")
    s.st16("R0", V["ndx"], "R2")
    s.ld16("R0", V["y0"])
    s("CMP R7, R7", "ADC R0, R5")
    s.ld16("R1", V["w"])
    s.call("mul32", "geo_m1")
    s.ld16("R2", V["offl"])
    s("CMP R7, R7", "ADC R0, R2")
    s.ld16("R2", V["offh"])
    s("ADC R1, R2")
    s.st16("R0", V["rowl"], "R2")
    s.st16("R1", V["rowh"], "R2")
    s.ld16("R0", V["cp"])
    s.ld16("R1", V["w"])
    s.call("mul32", "geo_m2")
    s.st16("R0", V["rstl"], "R2")
    s.st16("R1", V["rsth"], "R2")
    # phase 1 writes output; emblems needing several batches run phase 0 first
    s.ld16("R0", V["n"])
    s("SUB R1, R1", f"LDI R7, #{BMAX + 1}", "CMP R0, R7", "JC ph_set", "LDI R1, #0xFFFF", "ph_set:")
    s("LDI R7, #1", "CMP R7, R7", "ADC R1, R7")
    s.st16("R1", V["phase"], "R0")

    s("phase_go:", "SUB R0, R0")
    s.st16("R0", V["j0"], "R1")
    s("batch:")
    s.ld16("R0", V["n"])
    s.ld16("R1", V["j0"])
    s("SUB R0, R1", f"LDI R7, #{BMAX}", "CMP R0, R7", "JC bn_ok", "MOVE R0, R7", "bn_ok:")
    s.st16("R0", V["bn"], "R1")
    s.call("walk", "b_walk")
    s.ld16("R0", V["j0"])
    s("OR R0, R0", "JNZ b_rs")
    s.call("hdrchk", "b_hdr")
    s("OR R0, R0", "JNZ img_fail")
    s("b_rs:", "SUB R0, R0")
    s.st16("R0", V["b"], "R1")
    s("rs_loop:")
    s.ld16("R0", V["b"])
    s(f"LDI R7, #{ecc.N}", "MUL R0, R7", f"LDI R7, #{BUF}", "CMP R7, R7", f"LDI R7, #{BUF}", "ADC R0, R7")
    s.st16("R0", V["cw"], "R1")
    s.call("rsdec", "b_rsd")
    s("OR R0, R0", "JNZ img_fail")
    s.ld16("R0", V["b"])
    s("LDI R7, #1", "CMP R7, R7", "ADC R0, R7", "MOVE R2, R0")
    s.st16("R0", V["b"], "R1")
    s.ld16("R1", V["bn"])
    s("CMP R2, R1", "JNZ rs_loop")
    # emit when in phase 1
    s.ld16("R0", V["phase"])
    s("OR R0, R0", "JZ b_next")
    s.ld16("R0", V["j0"])
    s("OR R0, R0", "JNZ em_body")
    s.ld16("R0", V["plen"])
    s.st16("R0", V["rem"], "R1")
    s.ld16("R2", V["plen"])
    s("SYS 1", "LDI R7, #8", "LSR R2, R7", "SYS 1", "SUB R2, R2", "SYS 1", "SYS 1")
    s("em_body:", "SUB R5, R5")                   # R5 = codeword within batch
    s("em_cw:", "MOVE R0, R5", f"LDI R7, #{ecc.N}", "MUL R0, R7", f"LDI R7, #{BUF}", "CMP R7, R7",
      f"LDI R7, #{BUF}", "ADC R0, R7", "MOVE D1, R0", f"LDI R4, #{ecc.K}")
    s.ld16("R3", V["rem"])
    s("em_b:", "OR R3, R3", "JZ em_done", "OR R4, R4", "JZ em_cwn",
      "LDM R2, [D1]", "SYS 1", "MOVE R0, D1", "LDI R7, #1", "CMP R7, R7", "ADC R0, R7", "MOVE D1, R0",
      "LDI R7, #1", "SUB R3, R7", "SUB R4, R7", "JUMP em_b",
      "em_cwn:")
    s.st16("R3", V["rem"], "R0")
    s("LDI R7, #1", "CMP R7, R7", "ADC R5, R7")
    s.ld16("R0", V["bn"])
    s("CMP R5, R0", "JNZ em_cw", "JUMP b_next",
      "em_done:")
    s.st16("R3", V["rem"], "R0")
    s("b_next:")
    s.ld16("R0", V["j0"])
    s.ld16("R1", V["bn"])
    s("CMP R7, R7", "ADC R0, R1")
    s.st16("R0", V["j0"], "R2")
    s.ld16("R1", V["n"])
    s("CMP R0, R1", "JNZ batch")
    s.ld16("R0", V["phase"])
    s("OR R0, R0", "JNZ img_done", "LDI R0, #1")
    s.st16("R0", V["phase"], "R1")
    s("JUMP phase_go")

    s("img_fail:", "LDI R2, #0xFF", "SYS 1", "SYS 1", "SYS 1", "SYS 1")
    s("img_done:")
    s.ld16("R0", V["img"])
    s("LDI R7, #1", "CMP R7, R7", "ADC R0, R7")
    s.st16("R0", V["img"], "R1")
    s("JUMP next_img")
    s("bad_bundle:")
    s.exit(EXIT_FORMAT)
    s("code_end:")
    return "\n".join(s.lines) + "\n"
