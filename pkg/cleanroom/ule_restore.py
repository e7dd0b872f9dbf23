"""Minimal VeRisc interpreter and restorer written from bootstrap.txt alone.

Quarantined: imports nothing from the ``ark`` package. Only numpy and numba
(for speed) are used. Usage:

    python cleanroom/ule_restore.py <emblem dir> [--bootstrap FILE] --out FILE
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np
from numba import njit

MARK_A = "==== SECTION 3:"
MARK_B = "==== SECTION 4:"
MARK_CHECK = "==== SECTION 5:"
MARK_END = "==== END OF BOOTSTRAP ===="


# ---- letters and CRC32, as described in sections 2 and 3 ----

def decode_letters(text: str) -> bytes:
    digits = [15 - (ord(ch) - ord("A")) for ch in text if ch not in " \n\r\t"]
    if any(not 0 <= d <= 15 for d in digits) or len(digits) % 2:
        raise ValueError("letter block is damaged")
    return bytes(16 * digits[i] + digits[i + 1] for i in range(0, len(digits), 2))


def crc32(octets: bytes) -> int:
    c = 0xFFFFFFFF
    for b in octets:
        c ^= b
        for _ in range(8):
            c = (c >> 1) ^ 0xEDB88320 if c & 1 else c >> 1
    return c ^ 0xFFFFFFFF


def _between(lines: list[str], start: str, stop: str) -> list[str]:
    i = next(k for k, ln in enumerate(lines) if ln.startswith(start))
    j = next(k for k, ln in enumerate(lines) if ln.startswith(stop))
    return lines[i + 1:j]


def read_bootstrap(text: str) -> tuple[bytes, bytes]:
    lines = text.splitlines()
    blocks = []
    for start, stop in ((MARK_A, MARK_B), (MARK_B, MARK_CHECK)):
        body = [ln for ln in _between(lines, start, stop) if ln.strip()]
        count = int(body[0].split()[0])          # "NNNN OCTETS"
        data = decode_letters("".join(body[1:]))
        if len(data) != count:
            raise ValueError("letter block has the wrong length")
        blocks.append(data)
    checks = [decode_letters(ln.split("CRC32")[1]) for ln in _between(lines, MARK_CHECK, MARK_END)
              if "CRC32" in ln]
    for data, check in zip(blocks, checks):
        if crc32(data) != int.from_bytes(check, "big"):
            raise ValueError("letter block fails its CRC32 check")
    return blocks[0], blocks[1]


# ---- the VeRisc machine, sections 4 and 5 ----

@njit(cache=True)
def _run(M, IN, OUT):
    R = 0
    B = 0
    PC = 16
    steps = 0
    n = 0
    size = IN.size
    while True:
        if PC < 16 or PC > 65534:
            return -1, steps, n
        OP = M[PC]
        A = M[PC + 1]
        if OP > 3:
            return -2, steps, n
        NEXT = PC + 2
        if OP == 1:
            # WRITE(A, R)
            if A >= 16 or A == 5 or A == 6:
                M[A] = R
            elif A == 0:
                NEXT = R
            elif A == 1:
                B = 1 if R > 0 else 0
            elif A == 3:
                if n == OUT.size:
                    return -3, steps, n          # caller grows OUT and retries
                OUT[n] = R & 255
                n += 1
            elif A == 4:
                return R, steps + 1, n
        else:
            # v := READ(A)
            if A >= 16 or A == 5 or A == 6:
                v = M[A]
            elif A == 0:
                v = PC + 2
            elif A == 1:
                v = B
            elif A == 2:
                C = M[5] * 65536 + M[6]
                if C < size:
                    v = IN[C]
                    C += 1
                    M[5] = C // 65536
                    M[6] = C & 0xFFFF
                else:
                    v = 0xFFFF
            elif A == 7:
                v = size & 0xFFFF
            elif A == 8:
                v = size // 65536
            else:
                v = 0
            if OP == 0:
                R = v
            elif OP == 2:
                t = R - v - B
                if t < 0:
                    B = 1
                    t += 65536
                else:
                    B = 0
                R = t
            else:
                R = R & v
        PC = NEXT
        steps += 1


def run(image: bytes, program: bytes, data: bytes) -> tuple[bytes, int, int]:
    """RUN block A with a DynaRisc program placed at 0x8000 + 0x0100."""
    words = np.frombuffer(image, dtype="<u2")
    M0 = np.zeros(65536, dtype=np.int64)
    M0[16:16 + words.size] = words
    M0[0x8100:0x8100 + len(program)] = np.frombuffer(program, dtype=np.uint8)
    IN = np.frombuffer(data, dtype=np.uint8)
    size = 1 << 16
    while True:
        M = M0.copy()
        OUT = np.zeros(size, dtype=np.uint8)
        code, steps, n = _run(M, IN, OUT)
        if code != -3:
            break
        size *= 4
    if code < 0:
        raise RuntimeError("VeRisc machine stopped: " + ("bad PC" if code == -1 else "bad opcode"))
    return OUT[:n].tobytes(), int(code), int(steps)


# ---- restoration, section 8 ----

NAME = re.compile(r"emblem_(\d{5})_(\d{2})_(data|system|parity)\.pgm$")


def read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(raw, np.uint8, w * h, pos).reshape(h, w)


def bundle(images: list[np.ndarray]) -> bytes:
    head = b"ULSC" + len(images).to_bytes(2, "little")
    offset = len(head) + 8 * len(images)
    entries = b""
    for img in images:
        h, w = img.shape
        entries += offset.to_bytes(4, "little") + w.to_bytes(2, "little") + h.to_bytes(2, "little")
        offset += w * h
    return head + entries + b"".join(img.tobytes() for img in images)


def payloads(out: bytes, count: int) -> list[bytes | None]:
    res, pos = [], 0
    for _ in range(count):
        L = int.from_bytes(out[pos:pos + 4], "little")
        pos += 4
        if L == 0xFFFFFFFF:
            res.append(None)
        else:
            res.append(out[pos:pos + L])
            pos += L
    return res


def restore(folder: Path, bootstrap: Path) -> tuple[bytes, dict]:
    block_a, block_b = read_bootstrap(bootstrap.read_text())
    files = []
    for p in sorted(folder.iterdir()):
        m = NAME.search(p.name)
        if m:
            files.append((int(m.group(1)), int(m.group(2)), m.group(3), p))
    files.sort()
    out, code, steps1 = run(block_a, block_b, bundle([read_pgm(f[3]) for f in files]))
    if code != 0:
        raise RuntimeError(f"emblem decoder exit code {code}")
    decoded = payloads(out, len(files))
    system: dict[int, list] = {}
    data = []
    for (group, index, kind, path), pay in zip(files, decoded):
        if kind == "parity":
            continue
        if pay is None:
            raise RuntimeError(f"{path.name} did not decode; parity rebuild is not implemented here")
        if kind == "system" and group >= 32768:
            system.setdefault(group, []).append(pay)
        elif kind == "data" and group < 32768:
            data.append(pay)
    decompressor = b"".join(system[min(system)])
    archive = b"".join(data)
    if not archive:
        return b"", {"steps": [steps1]}
    result, code, steps2 = run(block_a, decompressor, archive)
    if code != 0:
        raise RuntimeError(f"decompressor exit code {code}")
    return result, {"steps": [steps1, steps2]}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("folder", type=Path)
    ap.add_argument("--bootstrap", type=Path)
    ap.add_argument("--out", type=Path, required=True)
    a = ap.parse_args(argv)
    data, info = restore(a.folder, a.bootstrap or a.folder / "bootstrap.txt")
    a.out.write_bytes(data)
    print(f"restored {len(data)} octets, VeRisc steps {sum(info['steps'])}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
