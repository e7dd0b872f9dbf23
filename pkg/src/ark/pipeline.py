"""Archive and restore orchestration.

archive: compress -> split into emblem payloads -> outer groups of <= 17 data
payloads plus 3 parity -> emblem PGMs, plus one system group carrying the
decompressor guest, bootstrap.txt and manifest.json.

restore: decode every image (natively, or through the nested emulator) ->
regroup by (group_id, index) -> outer recovery -> decompress -> CRC check.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import dbcoder, ecc, mocoder, olonys
from .bitcore import crc32
from .errors import (ArkError, CorruptionError, FormatError, MalformedStreamError,
                     UnrecoverableGroupError)
from .mocoder import TYPE_DATA, TYPE_NAMES, TYPE_PARITY, TYPE_SYSTEM, EmblemGeometry, EmblemHeader

FORMAT_VERSION = 1
SYSTEM_GROUP = 0x8000
SYSTEM_PROFILE = "test"
MANIFEST_NAME = "manifest.json"
BOOTSTRAP_NAME = "bootstrap.txt"
EMBLEM_NAME = re.compile(r"emblem_(\d{5})_(\d{2})_(data|system|parity)\.pgm$")
_TYPE_BY_NAME = {v: k for k, v in TYPE_NAMES.items()}


def default_workers() -> int:
    # one a4 decode peaks near 1 GB, so the pool is kept small
    return max(1, min(os.cpu_count() or 1, 4))


def emblem_filename(h: EmblemHeader) -> str:
    return f"emblem_{h.group_id:05d}_{h.index_in_group:02d}_{h.type_name}.pgm"


# ------------------------------------------------------------ manifest ----

@dataclass
class EmblemRecord:
    file: str
    type: str
    group_id: int
    index: int
    payload_length: int
    payload_crc32: int
    profile: str


@dataclass
class GroupRecord:
    group_id: int
    k: int
    parity: int


@dataclass
class ArchiveManifest:
    profile: str
    input_name: str
    input_length: int
    input_crc32: int
    compressed_length: int
    emblems: list[EmblemRecord] = field(default_factory=list)
    groups: list[GroupRecord] = field(default_factory=list)
    bootstrap: str = BOOTSTRAP_NAME
    guests: dict[str, int] = field(default_factory=dict)
    system_profile: str = SYSTEM_PROFILE
    format_version: int = FORMAT_VERSION
    reproducible: bool = True

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ArchiveManifest":
        raw = json.loads(text)
        raw["emblems"] = [EmblemRecord(**e) for e in raw.get("emblems", [])]
        raw["groups"] = [GroupRecord(**g) for g in raw.get("groups", [])]
        return cls(**raw)

    def count(self, kind: str) -> int:
        return sum(e.type == kind for e in self.emblems)


def verify_manifest(folder: str | Path, manifest: ArchiveManifest | None = None) -> list[str]:
    """Problems found between the manifest and the files (empty when consistent)."""
    folder = Path(folder)
    if manifest is None:
        manifest = ArchiveManifest.from_json((folder / MANIFEST_NAME).read_text())
    problems = []
    for rec in manifest.emblems:
        path = folder / rec.file
        if not path.exists():
            problems.append(f"{rec.file}: missing")
            continue
        try:
            h, payload, _ = mocoder.decode_image(mocoder.read_pgm(path), mocoder.get_profile(rec.profile))
        except (ArkError, ValueError) as exc:
            problems.append(f"{rec.file}: does not decode ({exc})")
            continue
        if (TYPE_NAMES.get(h.emblem_type), h.group_id, h.index_in_group, h.payload_length) != (
                rec.type, rec.group_id, rec.index, rec.payload_length):
            problems.append(f"{rec.file}: header disagrees with manifest")
        elif crc32(payload) != rec.payload_crc32:
            problems.append(f"{rec.file}: payload crc32 disagrees with manifest")
    return problems


# ------------------------------------------------------------- archive ----

def split_payloads(stream: bytes, capacity: int) -> list[bytes]:
    if not stream:
        return [b""]
    return [stream[i:i + capacity] for i in range(0, len(stream), capacity)]


def plan_groups(payloads: list[bytes], first_group: int = 0) -> list[ecc.OuterGroup]:
    """Chunk payloads into groups of <= 17 and add 3 parity payloads each.

    The parity is computed over members zero-padded to the group's widest
    payload; only the archive's last data payload is ever shorter.
    """
    groups = []
    for g, start in enumerate(range(0, len(payloads), ecc.OUTER_MAX_DATA)):
        data = payloads[start:start + ecc.OUTER_MAX_DATA]
        width = max(len(p) for p in data)
        parity = ecc.outer_encode([p.ljust(width, b"\0") for p in data])
        groups.append(ecc.OuterGroup(list(data), parity, first_group + g))
    return groups


def _group_headers(group: ecc.OuterGroup, member_type: int, total: int) -> list[EmblemHeader]:
    return [EmblemHeader(member_type if i < group.k else TYPE_PARITY, group.group_id, i,
                         group.k, total, len(p))
            for i, p in enumerate(group.members)]


def archive(input_path: str | Path, profile: str, out_dir: str | Path,
            workers: int | None = None) -> ArchiveManifest:
    input_path, out_dir = Path(input_path), Path(out_dir)
    data = input_path.read_bytes()
    geom = mocoder.get_profile(profile)
    sys_geom = mocoder.get_profile(SYSTEM_PROFILE)
    gs = olonys.guests()

    stream = dbcoder.compress(data) if data else b""
    data_groups = plan_groups(split_payloads(stream, geom.user_capacity))
    sys_groups = plan_groups(split_payloads(gs[olonys.DBDEC].data, sys_geom.user_capacity),
                             SYSTEM_GROUP)
    total = sum(len(g.members) for g in data_groups + sys_groups)

    jobs = []
    for groups, gtype, gm in ((data_groups, TYPE_DATA, geom), (sys_groups, TYPE_SYSTEM, sys_geom)):
        for g in groups:
            jobs += [(h, p, gm) for h, p in zip(_group_headers(g, gtype, total), g.members)]

    out_dir.mkdir(parents=True, exist_ok=True)
    for stale in out_dir.glob("emblem_*.pgm"):
        if EMBLEM_NAME.search(stale.name):
            stale.unlink()

    def write(job):
        h, p, gm = job
        mocoder.write_pgm(out_dir / emblem_filename(h), mocoder.encode_image(p, h, gm))

    with ThreadPoolExecutor(workers or default_workers()) as pool:
        list(pool.map(write, jobs))

    (out_dir / BOOTSTRAP_NAME).write_text(olonys.bootstrap_generate(gs[olonys.DREMU], gs[olonys.MOCDEC]))
    manifest = ArchiveManifest(
        profile=profile, input_name=input_path.name, input_length=len(data),
        input_crc32=crc32(data), compressed_length=len(stream),
        emblems=[EmblemRecord(emblem_filename(h), h.type_name, h.group_id, h.index_in_group,
                              len(p), crc32(p), gm.name) for h, p, gm in jobs],
        groups=[GroupRecord(g.group_id, g.k, len(g.parity_payloads)) for g in data_groups + sys_groups],
        guests={gid: g.crc32 for gid, g in gs.items()},
    )
    (out_dir / MANIFEST_NAME).write_text(manifest.to_json())
    return manifest


# ------------------------------------------------------------- restore ----

@dataclass
class EmblemResult:
    file: str
    status: str                     # ok | failed | skipped
    type: str | None = None
    group_id: int | None = None
    index: int | None = None
    corrected: int = 0
    erasures: int = 0
    message: str = ""


@dataclass
class RestoreReport:
    mode: str
    emblems: list[EmblemResult] = field(default_factory=list)
    recovered: list[tuple[int, int]] = field(default_factory=list)   # (group, index) via outer code
    length: int = 0
    crc32: int = 0
    guest_steps: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    def text(self) -> str:
        lines = [f"restore ({self.mode}): {self.length} octets, crc32 {self.crc32:08x}"]
        for e in self.emblems:
            where = "" if e.group_id is None else f" group {e.group_id} index {e.index} {e.type}"
            extra = f" corrected {e.corrected} erasures {e.erasures}" if e.status == "ok" else f" {e.message}"
            lines.append(f"  {e.file}: {e.status}{where}{extra}")
        for g, i in self.recovered:
            lines.append(f"  recovered via outer code: group {g} index {i}")
        if self.guest_steps:
            lines.append(f"  VeRisc steps: {' + '.join(map(str, self.guest_steps))}")
        return "\n".join(lines)


def _image_files(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir() if p.suffix.lower() == ".pgm" and p.is_file())


def _geometries_for(shape: tuple[int, int]) -> list[EmblemGeometry]:
    side = max(shape)
    return sorted(mocoder.PROFILES.values(), key=lambda g: abs(g.image_side - side))


def decode_any(img: np.ndarray) -> tuple[EmblemHeader, bytes, mocoder.DecodeStats, EmblemGeometry]:
    """Decode with the profile whose rendered size is closest first."""
    last: Exception | None = None
    for geom in _geometries_for(img.shape):
        if min(img.shape) < geom.grid_side:
            continue
        try:
            h, p, st = mocoder.decode_image(img, geom)
            return h, p, st, geom
        except (ArkError, ValueError, np.linalg.LinAlgError) as exc:
            last = exc
    raise last or FormatError("image too small for any profile")


Member = tuple[int, int, int, int, bytes]     # type, group, index, k, payload


def _decode_native(files: list[Path], workers: int | None) -> tuple[list[EmblemResult], list[Member]]:
    def one(path: Path):
        try:
            img = mocoder.read_pgm(path)
        except (ValueError, OSError) as exc:
            return EmblemResult(path.name, "skipped", message=str(exc)), None
        try:
            h, p, st, _ = decode_any(img)
        except (ArkError, ValueError, np.linalg.LinAlgError) as exc:
            return EmblemResult(path.name, "failed", message=str(exc)), None
        res = EmblemResult(path.name, "ok", h.type_name, h.group_id, h.index_in_group,
                           st.corrected, st.erasures)
        return res, (h.emblem_type, h.group_id, h.index_in_group, h.group_data_count, p)

    with ThreadPoolExecutor(workers or default_workers()) as pool:
        done = list(pool.map(one, files))
    return [r for r, _ in done], [m for _, m in done if m is not None]


def _names_k(named: list[tuple[int, int, str]]) -> dict[int, int]:
    """Group size k from file names: the lowest parity index, else the data count."""
    ks: dict[int, int] = {}
    for group, index, kind in named:
        if kind == "parity":
            ks[group] = min(ks.get(group, index), index)
    for group, index, kind in named:
        if kind != "parity" and group not in ks:
            ks[group] = 1 + max(i for g, i, t in named if g == group and t != "parity")
    return ks


def _decode_emulated(files: list[Path], bootstrap: str, report: RestoreReport,
                     batch: int = 8) -> tuple[list[EmblemResult], list[Member]]:
    dremu, moc = olonys.bootstrap_parse(bootstrap)
    named, results = [], []
    for path in files:
        m = EMBLEM_NAME.search(path.name)
        if not m:
            results.append(EmblemResult(path.name, "skipped", message="not an emblem file name"))
            continue
        named.append((int(m.group(1)), int(m.group(2)), m.group(3), path))
    ks = _names_k([n[:3] for n in named])
    members: list[Member] = []
    for start in range(0, len(named), batch):
        chunk = named[start:start + batch]
        imgs = [mocoder.read_pgm(n[3]) for n in chunk]
        res = olonys.nested_run(dremu, moc, olonys.make_scan_bundle(imgs))
        report.guest_steps.append(res.step_count)
        if res.exit_code != 0:
            raise FormatError(f"emblem decoder guest exited with code 0x{res.exit_code:04X}")
        for (group, index, kind, path), pay in zip(chunk, olonys.split_guest_records(res.output, len(chunk))):
            if pay is None:
                results.append(EmblemResult(path.name, "failed", kind, group, index,
                                            message="guest could not decode"))
                continue
            results.append(EmblemResult(path.name, "ok", kind, group, index))
            members.append((_TYPE_BY_NAME[kind], group, index, ks[group], pay))
    return results, members


def _assemble(members: list[Member], report: RestoreReport) -> tuple[bytes, bytes]:
    """Outer-recover every group; return (compressed stream, system payload)."""
    groups: dict[int, dict[int, tuple[int, bytes]]] = {}
    sizes: dict[int, list[int]] = {}
    for etype, gid, idx, k, pay in members:
        groups.setdefault(gid, {})[idx] = (etype, pay)
        sizes.setdefault(gid, []).append(k)
    data_ids = sorted(g for g in groups if g < SYSTEM_GROUP)
    if data_ids and data_ids != list(range(data_ids[-1] + 1)):
        missing = sorted(set(range(data_ids[-1] + 1)) - set(data_ids))
        raise UnrecoverableGroupError(f"group {missing[0]} lost entirely", missing[0])
    out: dict[int, list[bytes]] = {}
    for gid, present in sorted(groups.items()):
        k = max(set(sizes[gid]), key=sizes[gid].count)
        have = {i: p for i, (_, p) in present.items() if i < k + ecc.OUTER_PARITY}
        if all(i in have for i in range(k)):
            out[gid] = [have[i] for i in range(k)]
            continue
        width = max(len(p) for p in have.values())
        full = ecc.outer_recover({i: p.ljust(width, b"\0") for i, p in have.items()}, k, gid)
        report.recovered += [(gid, i) for i in range(k) if i not in have]
        out[gid] = [have.get(i, full[i]) for i in range(k)]
    stream = b"".join(b"".join(out[g]) for g in data_ids)
    sys_ids = sorted(g for g in groups if g >= SYSTEM_GROUP)
    system = b"".join(out[sys_ids[0]]) if sys_ids else b""
    return stream, system


def _decompress_emulated(stream: bytes, system: bytes, bootstrap: str, report: RestoreReport) -> bytes:
    dremu, _ = olonys.bootstrap_parse(bootstrap)
    res = olonys.nested_run(dremu, system, stream)
    report.guest_steps.append(res.step_count)
    if res.exit_code == 2:
        raise CorruptionError("decompressor guest reports a CRC mismatch")
    if res.exit_code == 1:
        raise FormatError("decompressor guest rejects the container header")
    if res.exit_code != 0:
        raise MalformedStreamError(f"decompressor guest exited with code 0x{res.exit_code:04X}")
    return res.output


def restore(folder: str | Path, mode: str = "native", workers: int | None = None,
            files: Iterable[Path] | None = None) -> tuple[bytes, RestoreReport]:
    folder = Path(folder)
    if mode not in ("native", "emulated"):
        raise ValueError(f"unknown restore mode {mode!r}")
    paths = sorted(files) if files is not None else _image_files(folder)
    report = RestoreReport(mode)
    if mode == "native":
        report.emblems, members = _decode_native(paths, workers)
    else:
        bootstrap = (folder / BOOTSTRAP_NAME).read_text()
        report.emblems, members = _decode_emulated(paths, bootstrap, report)
    if not any(m[1] < SYSTEM_GROUP for m in members):
        raise UnrecoverableGroupError("no data emblem decoded", 0)
    stream, system = _assemble(members, report)
    if not stream:
        data = b""
    elif mode == "native":
        data = dbcoder.decompress(stream)
    else:
        if not system:
            raise UnrecoverableGroupError("no system emblem decoded", SYSTEM_GROUP)
        data = _decompress_emulated(stream, system, bootstrap, report)
    report.length, report.crc32 = len(data), crc32(data)
    return data, report
