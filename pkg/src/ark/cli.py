"""Command-line interface: ``ark <command> ...``.

Exit codes: 0 success, 1 usage or I/O error, 2 decode failure, 3 unrecoverable data.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import mocoder, olonys, pipeline, scansim
from .dynarisc import DynaRiscProgram, dr_assemble
from .errors import ArkError, CorruptionError, UnrecoverableGroupError
from .verisc import VeRiscImage, vr_assemble

EXIT_OK, EXIT_USAGE, EXIT_DECODE, EXIT_UNRECOVERABLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _cmd_archive(a) -> int:
    m = pipeline.archive(a.file, a.profile, a.out, a.workers)
    print(f"{len(m.emblems)} emblems ({m.count('data')} data, {m.count('parity')} parity, "
          f"{m.count('system')} system) from {m.input_length} octets "
          f"({m.compressed_length} compressed) in {a.out}")
    return EXIT_OK


def _cmd_restore(a) -> int:
    data, report = pipeline.restore(a.dir, a.mode, a.workers)
    Path(a.out).write_bytes(data)
    print(report.text())
    if a.report:
        Path(a.report).write_text(report.to_json())
    return EXIT_OK


def _cmd_distort(a) -> int:
    if a.preset:
        p = scansim.DistortionParams.from_json(a.preset)
    else:
        p = scansim.DistortionParams(rotation=a.rotation, scale=a.scale, blur_sigma=a.blur,
                                     dust_coverage=a.dust, noise_std=a.noise, seed=a.seed)
    mocoder.write_pgm(a.output, scansim.distort(mocoder.read_pgm(a.input), p))
    return EXIT_OK


def _load_binary(path: Path, arch: str):
    text_suffix = {"dynarisc": ".dra", "verisc": ".vra"}[arch]
    if path.suffix == text_suffix:
        src = path.read_text()
        return dr_assemble(src) if arch == "dynarisc" else vr_assemble(src)
    raw = path.read_bytes()
    return DynaRiscProgram.from_binary(raw) if arch == "dynarisc" else VeRiscImage.from_bytes(raw)


def _cmd_emulate(a) -> int:
    from .dynarisc import dr_run
    from .verisc import vr_run
    prog = _load_binary(Path(a.image), a.arch)
    data = Path(a.input).read_bytes() if a.input else sys.stdin.buffer.read()
    run = dr_run if a.arch == "dynarisc" else vr_run
    res = run(prog, data, a.max_steps)
    sys.stdout.buffer.write(res.output)
    sys.stdout.flush()
    print(f"exit {res.exit_code} after {res.step_count} steps", file=sys.stderr)
    return EXIT_OK


def _cmd_asm(a) -> int:
    src = Path(a.src).read_text()
    blob = bytes(dr_assemble(src).image) if a.arch == "dynarisc" else vr_assemble(src).to_bytes()
    Path(a.output).write_bytes(blob)
    print(f"{len(blob)} octets written to {a.output}")
    return EXIT_OK


def _cmd_bootstrap(a) -> int:
    if a.action == "generate":
        gs = olonys.guests()
        doc = olonys.bootstrap_generate(gs[olonys.DREMU], gs[olonys.MOCDEC])
        if a.out:
            Path(a.out).write_text(doc)
        else:
            sys.stdout.write(doc)
        return EXIT_OK
    if not a.doc:
        raise _UsageError("bootstrap parse/verify needs a document path")
    doc = Path(a.doc).read_text()
    if a.action == "parse":
        dremu, moc = olonys.bootstrap_parse(doc)
        out = Path(a.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        (out / "dremu.bin").write_bytes(dremu.data)
        (out / "mocoder-dec.bin").write_bytes(moc.data)
        print(f"dremu {len(dremu.data)} octets crc32 {dremu.crc32:08x}; "
              f"mocoder-dec {len(moc.data)} octets crc32 {moc.crc32:08x}")
        return EXIT_OK
    print(olonys.bootstrap_verify(doc).text())
    return EXIT_OK


def _cmd_inspect(a) -> int:
    h, payload, stats, geom = pipeline.decode_any(mocoder.read_pgm(a.emblem))
    print(f"profile {geom.name}  type {h.type_name}  group {h.group_id}  index {h.index_in_group}  "
          f"k {h.group_data_count}  total {h.total_emblems}  payload {h.payload_length} octets")
    print(f"corrected {stats.corrected}  erasures {stats.erasures}  failed codewords {len(stats.failed)}")
    return EXIT_OK


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ark", description="Emblem archival toolkit with an emulated restore path.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("archive", help="compress a file into emblem images")
    p.add_argument("file")
    p.add_argument("--profile", choices=("test", "a4"), default="a4")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_archive)

    p = sub.add_parser("restore", help="restore a file from emblem images")
    p.add_argument("dir")
    p.add_argument("--mode", choices=("native", "emulated"), default="native")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="also write the report as JSON")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_restore)

    p = sub.add_parser("distort", help="simulate print/scan degradation of a PGM")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--rotation", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--blur", type=float, default=0.0)
    p.add_argument("--dust", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", help="JSON file of distortion parameters")
    p.set_defaults(func=_cmd_distort)

    p = sub.add_parser("emulate", help="run a DynaRisc or VeRisc program")
    p.add_argument("--arch", choices=("dynarisc", "verisc"), required=True)
    p.add_argument("image", help="binary image, or .dra/.vra source")
    p.add_argument("--input", help="input file (default: stdin)")
    p.add_argument("--max-steps", type=int, default=10 ** 10)
    p.set_defaults(func=_cmd_emulate)

    p = sub.add_parser("asm", help="assemble DynaRisc or VeRisc source")
    p.add_argument("--arch", choices=("dynarisc", "verisc"), required=True)
    p.add_argument("src")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_asm)

    p = sub.add_parser("bootstrap", help="generate, parse or verify bootstrap.txt")
    p.add_argument("action", choices=("generate", "parse", "verify"))
    p.add_argument("doc", nargs="?", help="document to parse or verify")
    p.add_argument("--out", help="output file (generate) or directory (parse)")
    p.set_defaults(func=_cmd_bootstrap)

    p = sub.add_parser("inspect", help="decode one emblem and print its header")
    p.add_argument("emblem")
    p.set_defaults(func=_cmd_inspect)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"ark: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UnrecoverableGroupError, CorruptionError) as exc:
        print(f"ark: unrecoverable: {exc}", file=sys.stderr)
        return EXIT_UNRECOVERABLE
    except ArkError as exc:
        print(f"ark: decode failure: {exc}", file=sys.stderr)
        return EXIT_DECODE
    except (OSError, ValueError) as exc:
        print(f"ark: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
