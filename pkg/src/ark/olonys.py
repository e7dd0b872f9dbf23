"""ULE layer: A-P letters, the Bootstrap document, guest binaries and nested runs.

Guest programs are committed as assembly sources under ``assets/``:

* ``dremu.vra``   the DynaRisc emulator written in VeRisc
* ``mocdec.dra``  the emblem decoder written in DynaRisc
* ``dbdec.dra``   the ULDB decompressor written in DynaRisc

The sources are produced by the generator modules (``_dremu``, ``_mocdec``,
``_dbdec``) and ``regenerate_assets`` rewrites them; tests check they are
current. Binaries are assembled from the committed sources.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from . import dbcoder, mocoder
from .bitcore import crc32
from .dynarisc import (LOAD_ADDRESS, MEM_SIZE, TRAP_CODES, TRAP_NAMES as DR_TRAP_NAMES,
                       DynaRiscProgram, dr_assemble, dr_run)
from .errors import ArkError, BootstrapError, FormatError, LettersError, TrapError
from .verisc import VeRiscImage, vr_assemble, vr_memory, vr_run
from ._dremu import GUEST_BASE, TRAP_EXIT

DREMU, MOCDEC, DBDEC = "dremu", "mocoder-dec", "dbcoder-dec"
GUEST_IDS = (DREMU, MOCDEC, DBDEC)
_SOURCES = {DREMU: "dremu.vra", MOCDEC: "mocdec.dra", DBDEC: "dbdec.dra"}

LETTERS_PER_LINE = 64
MAX_COLUMNS = 78
PSEUDOCODE_ASSET = "verisc_pseudocode.txt"
BOOTSTRAP_VERSION = 1

BUNDLE_MAGIC = b"ULSC"
FAILED_RECORD = 0xFFFFFFFF


# ------------------------------------------------------------ letters ----

def letters_encode(data: bytes, width: int = LETTERS_PER_LINE) -> str:
    """Octet -> two letters, high nibble first; nibble v -> chr(ord('A') + 15 - v)."""
    letters = "".join(chr(80 - (b >> 4)) + chr(80 - (b & 15)) for b in bytes(data))
    return "\n".join(letters[i:i + width] for i in range(0, len(letters), width))


def letters_decode(text: str) -> bytes:
    digits = []
    for pos, ch in enumerate(text):
        if ch in " \t\r\n":
            continue
        if not "A" <= ch <= "P":
            raise LettersError(pos, f"foreign character {ch!r}")
        digits.append(80 - ord(ch))
    if len(digits) % 2:
        raise LettersError(len(text), "odd number of letters")
    return bytes(16 * digits[i] + digits[i + 1] for i in range(0, len(digits), 2))


# ------------------------------------------------------------- guests ----

@dataclass(frozen=True)
class GuestBinary:
    id: str
    data: bytes

    @property
    def crc32(self) -> int:
        return crc32(self.data)

    def program(self) -> DynaRiscProgram:
        if self.id == DREMU:
            raise ValueError("dremu is a VeRisc image")
        return DynaRiscProgram.from_binary(self.data)

    def image(self) -> VeRiscImage:
        if self.id != DREMU:
            raise ValueError(f"{self.id} is a DynaRisc image")
        return VeRiscImage.from_bytes(self.data)


def asset_text(name: str) -> str:
    return resources.files("ark").joinpath("assets", name).read_text()


def guest_source(guest_id: str) -> str:
    return asset_text(_SOURCES[guest_id])


def generated_sources() -> dict[str, str]:
    """Asset file name -> freshly generated source text."""
    from . import _dbdec, _dremu, _mocdec
    return {"dremu.vra": _dremu.build(), "mocdec.dra": _mocdec.build(), "dbdec.dra": _dbdec.build()}


def regenerate_assets() -> list[str]:
    """Rewrite the generated guest sources in the package assets directory."""
    base = resources.files("ark").joinpath("assets")
    written = []
    for name, text in generated_sources().items():
        path = base.joinpath(name)
        if not path.is_file() or path.read_text() != text:
            with resources.as_file(path) as p:
                p.write_text(text)
            written.append(name)
    return written


def build_guest(guest_id: str) -> GuestBinary:
    src = guest_source(guest_id)
    if guest_id == DREMU:
        return GuestBinary(guest_id, vr_assemble(src).to_bytes())
    prog = dr_assemble(src, LOAD_ADDRESS)
    return GuestBinary(guest_id, bytes(prog.image))


_CACHE: dict[str, GuestBinary] = {}


def guests() -> dict[str, GuestBinary]:
    """All guest binaries, assembled once per process."""
    for gid in GUEST_IDS:
        if gid not in _CACHE:
            _CACHE[gid] = build_guest(gid)
    return dict(_CACHE)


# ---------------------------------------------------------- bootstrap ----

MARKERS = (
    "==== SECTION 1: PREAMBLE ====",
    "==== SECTION 2: VERISC MACHINE AND INTERPRETER ====",
    "==== SECTION 3: LETTER BLOCK A (DYNARISC EMULATOR, VERISC IMAGE) ====",
    "==== SECTION 4: LETTER BLOCK B (EMBLEM DECODER, DYNARISC IMAGE) ====",
    "==== SECTION 5: CHECK VALUES ====",
    "==== END OF BOOTSTRAP ====",
)
SECTION_NAMES = ("preamble", "pseudocode", "block A", "block B", "check values")

_PREAMBLE = f"""\
ULE BOOTSTRAP, FORMAT VERSION {BOOTSTRAP_VERSION}

This document restores the data stored in the emblem images that come
with it. It needs nothing but a computer that can run a small program
written by the reader. Section 2 defines VeRisc, a machine with four
instructions, and gives its interpreter in pseudocode. Section 3 holds,
as letters, a VeRisc program that emulates the DynaRisc processor.
Section 4 holds, as letters, a DynaRisc program that decodes emblem
images. Section 5 holds check values for both letter blocks. Section 2
ends with the restoration steps.
"""


def pseudocode() -> str:
    return asset_text(PSEUDOCODE_ASSET)


def _crc_letters(data: bytes) -> str:
    return letters_encode(struct.pack(">I", crc32(data)))


def bootstrap_generate(dremu: GuestBinary, mocoder_dec: GuestBinary) -> str:
    if dremu.id != DREMU or mocoder_dec.id != MOCDEC:
        raise ValueError("bootstrap needs the dremu and mocoder-dec binaries")
    parts = [
        MARKERS[0], _PREAMBLE.rstrip("\n"), "",
        MARKERS[1], pseudocode().rstrip("\n"), "",
        MARKERS[2], f"{len(dremu.data)} OCTETS", letters_encode(dremu.data), "",
        MARKERS[3], f"{len(mocoder_dec.data)} OCTETS", letters_encode(mocoder_dec.data), "",
        MARKERS[4],
        f"BLOCK A CRC32 {_crc_letters(dremu.data)}",
        f"BLOCK B CRC32 {_crc_letters(mocoder_dec.data)}",
        MARKERS[5],
    ]
    doc = "\n".join(parts) + "\n"
    for n, line in enumerate(doc.splitlines(), 1):
        if len(line) > MAX_COLUMNS:
            raise ValueError(f"bootstrap line {n} is {len(line)} columns wide")
    return doc


def _sections(doc: str) -> list[list[str]]:
    lines = doc.splitlines()
    positions = []
    for k, marker in enumerate(MARKERS):
        try:
            pos = lines.index(marker)
        except ValueError:
            name = SECTION_NAMES[k] if k < len(SECTION_NAMES) else "end"
            raise BootstrapError(name, "marker line missing") from None
        if positions and pos < positions[-1]:
            raise BootstrapError(SECTION_NAMES[k] if k < len(SECTION_NAMES) else "end",
                                 "sections out of order")
        positions.append(pos)
    return [lines[positions[k] + 1:positions[k + 1]] for k in range(len(MARKERS) - 1)]


def _block(lines: list[str], section: str) -> bytes:
    body = [ln for ln in lines if ln.strip()]
    if not body or not body[0].endswith(" OCTETS"):
        raise BootstrapError(section, "octet count line missing")
    try:
        count = int(body[0].split()[0])
        data = letters_decode("\n".join(body[1:]))
    except (ValueError, LettersError) as exc:
        raise BootstrapError(section, f"bad letter block ({exc})") from None
    if len(data) != count:
        raise BootstrapError(section, f"expected {count} octets, found {len(data)}")
    return data


def bootstrap_parse(doc: str) -> tuple[GuestBinary, GuestBinary]:
    secs = _sections(doc)
    dremu = _block(secs[2], "block A")
    moc = _block(secs[3], "block B")
    checks = {}
    for ln in secs[4]:
        if ln.startswith("BLOCK ") and " CRC32 " in ln:
            key, _, letters = ln.partition(" CRC32 ")
            try:
                checks[key[6:].strip()] = struct.unpack(">I", letters_decode(letters))[0]
            except (LettersError, struct.error):
                raise BootstrapError("check values", f"unreadable check value line {ln!r}") from None
    for key, data, section in (("A", dremu, "block A"), ("B", moc, "block B")):
        if key not in checks:
            raise BootstrapError("check values", f"no check value for block {key}")
        if crc32(data) != checks[key]:
            raise BootstrapError(section, "CRC32 mismatch")
    return GuestBinary(DREMU, dremu), GuestBinary(MOCDEC, moc)


@dataclass
class BootstrapReport:
    lines: int
    max_columns: int
    pseudocode_lines: int
    pages: int
    crcs: dict[str, int]
    matches_build: bool

    def text(self) -> str:
        crcs = ", ".join(f"{k} {v:08x}" for k, v in self.crcs.items())
        return (f"bootstrap ok: {self.lines} lines ({self.pages} pages of 60 lines), "
                f"widest {self.max_columns} columns, pseudocode {self.pseudocode_lines} lines; "
                f"crc32 {crcs}; binaries match build: {self.matches_build}")


def bootstrap_verify(doc: str) -> BootstrapReport:
    dremu, moc = bootstrap_parse(doc)
    built = guests()
    lines = doc.splitlines()
    return BootstrapReport(
        lines=len(lines), max_columns=max(map(len, lines)),
        pseudocode_lines=len(_sections(doc)[1]), pages=-(-len(lines) // 60),
        crcs={DREMU: dremu.crc32, MOCDEC: moc.crc32},
        matches_build=dremu == built[DREMU] and moc == built[MOCDEC])


# -------------------------------------------------------- nested runs ----

@dataclass
class NestedResult:
    output: bytes
    exit_code: int
    step_count: int

    @property
    def guest_trap(self) -> str | None:
        """Name of the guest trap when dremu reported one."""
        if self.exit_code & 0xFF00 == TRAP_EXIT and (self.exit_code & 0xFF) in _TRAP_BY_CODE:
            return _TRAP_BY_CODE[self.exit_code & 0xFF]
        return None


_TRAP_BY_CODE = DR_TRAP_NAMES


def nested_memory(dremu: GuestBinary | VeRiscImage, guest: GuestBinary | bytes) -> np.ndarray:
    img = dremu.image() if isinstance(dremu, GuestBinary) else dremu
    data = guest.data if isinstance(guest, GuestBinary) else bytes(guest)
    if LOAD_ADDRESS + len(data) > MEM_SIZE:
        raise ValueError(f"guest image of {len(data)} octets does not fit 32 KiB")
    mem = vr_memory(img)
    base = GUEST_BASE + LOAD_ADDRESS
    mem[base:base + len(data)] = np.frombuffer(data, dtype=np.uint8)
    return mem


def nested_run(dremu: GuestBinary | VeRiscImage, guest: GuestBinary | bytes, data: bytes = b"",
               max_steps: int = 10 ** 12) -> NestedResult:
    """Run a DynaRisc guest inside dremu inside the VeRisc interpreter."""
    res = vr_run(nested_memory(dremu, guest), data, max_steps)
    return NestedResult(res.output, res.exit_code, res.step_count)


def native_run(guest: GuestBinary | bytes, data: bytes = b"", max_steps: int = 10 ** 10) -> NestedResult:
    """Run a guest on the native DynaRisc interpreter; traps map to dremu's exit codes."""
    blob = guest.data if isinstance(guest, GuestBinary) else bytes(guest)
    prog = DynaRiscProgram.from_binary(blob)
    try:
        r = dr_run(prog, data, max_steps)
    except TrapError as exc:
        return NestedResult(b"", TRAP_EXIT | TRAP_CODES[exc.cause], int(exc.state["step_count"]))
    return NestedResult(r.output, r.exit_code, r.step_count)


def step_overhead(guest: GuestBinary | bytes, data: bytes = b"") -> tuple[float, NestedResult, NestedResult]:
    """VeRisc steps per guest instruction for one run, plus both results."""
    native = native_run(guest, data)
    nested = nested_run(guests()[DREMU], guest, data)
    return nested.step_count / max(native.step_count, 1), native, nested


# ------------------------------------------------------- scan bundles ----

def make_scan_bundle(images: Sequence[np.ndarray]) -> bytes:
    """GuestScanBundle: "ULSC", u16 count, (u32 offset, u16 w, u16 h) each, pixels."""
    if len(images) > 0xFFFF:
        raise ValueError("too many images for one bundle")
    head = BUNDLE_MAGIC + struct.pack("<H", len(images))
    offset = len(head) + 8 * len(images)
    directory, pixels = [], []
    for img in images:
        img = np.ascontiguousarray(img, dtype=np.uint8)
        h, w = img.shape
        if w > 0xFFFF or h > 0xFFFF:
            raise ValueError("image side exceeds 65535 pixels")
        directory.append(struct.pack("<IHH", offset, w, h))
        pixels.append(img.tobytes())
        offset += img.size
    if offset > 0xFFFFFFFF:
        raise ValueError("bundle exceeds 4 GiB")
    return head + b"".join(directory) + b"".join(pixels)


def parse_scan_bundle(blob: bytes) -> list[np.ndarray]:
    if len(blob) < 6 or blob[:4] != BUNDLE_MAGIC:
        raise FormatError("not a GuestScanBundle")
    (count,) = struct.unpack_from("<H", blob, 4)
    out = []
    for k in range(count):
        off, w, h = struct.unpack_from("<IHH", blob, 6 + 8 * k)
        if off + w * h > len(blob):
            raise FormatError(f"image {k} runs past the end of the bundle")
        out.append(np.frombuffer(blob, np.uint8, w * h, off).reshape(h, w))
    return out


def split_guest_records(output: bytes, count: int) -> list[bytes | None]:
    """Split mocoder-dec output into payloads (None for undecodable images)."""
    out: list[bytes | None] = []
    pos = 0
    for _ in range(count):
        if pos + 4 > len(output):
            raise FormatError("guest output ends early")
        (n,) = struct.unpack_from("<I", output, pos)
        pos += 4
        if n == FAILED_RECORD:
            out.append(None)
            continue
        if pos + n > len(output):
            raise FormatError("guest payload runs past the end of its output")
        out.append(bytes(output[pos:pos + n]))
        pos += n
    if pos != len(output):
        raise FormatError("trailing octets after the last guest record")
    return out


# ---------------------------------------------------- contract checks ----

@dataclass
class ContractReport:
    guest_id: str
    items: int = 0
    mismatches: list[tuple[int, int]] = field(default_factory=list)   # (item, first offset)
    guest_steps: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def text(self) -> str:
        state = "ok" if self.ok else f"{len(self.mismatches)} divergent"
        return f"{self.guest_id}: {self.items} items, {state}, guest steps {sum(self.guest_steps)}"


def _first_difference(a: bytes, b: bytes) -> int:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    return min(len(a), len(b))


def native_mocoder_records(images: Iterable[np.ndarray], geometries=None) -> bytes:
    """The native-library equivalent of the mocoder-dec output for ``images``."""
    out = bytearray()
    geoms = geometries or sorted(mocoder.PROFILES.values(), key=lambda g: g.grid_side)
    for img in images:
        payload = None
        for geom in geoms:
            if img.shape[0] < geom.grid_side or img.shape[1] < geom.grid_side:
                continue
            try:
                _, payload, _ = mocoder.decode_image(img, geom)
                break
            except ArkError:
                continue
        if payload is None:
            out += struct.pack("<I", FAILED_RECORD)
        else:
            out += struct.pack("<I", len(payload)) + payload
    return bytes(out)


def guest_contract_check(guest_id: str, corpus: Iterable, nested: bool = False) -> ContractReport:
    """Differential check of a guest decoder against the native library.

    dbcoder-dec items are original data octets (compressed here); mocoder-dec
    items are lists of images (one bundle each).
    """
    gs = guests()
    report = ContractReport(guest_id)
    for k, item in enumerate(corpus):
        if guest_id == DBDEC:
            blob = dbcoder.compress(bytes(item))
            expected = dbcoder.decompress(blob)
        elif guest_id == MOCDEC:
            images = list(item)
            blob = make_scan_bundle(images)
            expected = native_mocoder_records(images)
        else:
            raise ValueError(f"no contract for {guest_id!r}")
        res = (nested_run(gs[DREMU], gs[guest_id], blob) if nested
               else native_run(gs[guest_id], blob))
        report.items += 1
        report.guest_steps.append(res.step_count)
        if res.exit_code != 0 or res.output != expected:
            report.mismatches.append((k, _first_difference(res.output, expected)))
    return report
