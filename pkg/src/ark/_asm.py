"""Line-oriented assembler plumbing shared by the DynaRisc and VeRisc assemblers.

Both grammars use ``;`` comments, ``name:`` labels, ``.equ`` constants and
integer expressions built from numbers, symbols, ``+``/``-`` and ``'c'``
character literals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import AssemblyError

_LABEL = re.compile(r"^([A-Za-z_.$][\w.$]*)\s*:")
_IDENT = re.compile(r"^[A-Za-z_.$][\w.$]*$")
_TERM = re.compile(r"\s*([+-]?)\s*('(?:\\.|[^'])'|[A-Za-z_.$][\w.$]*|0[xX][0-9a-fA-F]+|0[bB][01]+|\d+)\s*")


@dataclass
class SourceLine:
    number: int
    labels: list[str]
    op: str          # upper-cased mnemonic or directive, "" for label-only lines
    args: str        # raw operand text


def strip_comment(text: str) -> str:
    out = []
    quote = None
    for ch in text:
        if quote:
            out.append(ch)
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            out.append(ch)
        elif ch == ";":
            break
        else:
            out.append(ch)
    return "".join(out).strip()


def split_lines(source: str) -> list[SourceLine]:
    lines = []
    for number, raw in enumerate(source.splitlines(), start=1):
        text = strip_comment(raw)
        labels = []
        while True:
            m = _LABEL.match(text)
            if not m:
                break
            labels.append(m.group(1))
            text = text[m.end():].strip()
        if not text and not labels:
            continue
        op, _, args = text.partition(" ")
        if "\t" in op:
            op, _, rest = op.partition("\t")
            args = rest + " " + args
        lines.append(SourceLine(number, labels, op.upper(), args.strip()))
    return lines


def split_args(args: str) -> list[str]:
    """Split on commas outside quotes."""
    parts, cur, quote = [], [], None
    for ch in args:
        if quote:
            cur.append(ch)
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            cur.append(ch)
        elif ch == ",":
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail or parts:
        parts.append(tail)
    return parts


def _char_value(lit: str) -> int:
    body = lit[1:-1]
    if body.startswith("\\"):
        return {"n": 10, "t": 9, "r": 13, "0": 0, "\\": 92, "'": 39}[body[1]]
    return ord(body)


def evaluate(expr: str, symbols: dict[str, int] | None, line: int) -> int:
    """Evaluate an expression; ``symbols=None`` means first pass (unknowns read as 0)."""
    text = expr.strip()
    if not text:
        raise AssemblyError(line, "missing operand")
    pos, total = 0, 0
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise AssemblyError(line, f"bad expression {expr!r}")
        sign, tok = m.groups()
        if tok.startswith("'"):
            val = _char_value(tok)
        elif tok[0].isdigit():
            val = int(tok, 0)
        elif symbols is None:
            val = 0
        elif tok in symbols:
            val = symbols[tok]
        else:
            raise AssemblyError(line, f"undefined symbol {tok!r}")
        if pos > 0 and not sign:
            raise AssemblyError(line, f"bad expression {expr!r}")
        total += -val if sign == "-" else val
        pos = m.end()
    return total


def parse_string(arg: str, line: int) -> bytes:
    arg = arg.strip()
    if len(arg) < 2 or arg[0] != '"' or arg[-1] != '"':
        raise AssemblyError(line, "expected a double-quoted string")
    try:
        return arg[1:-1].encode("latin-1").decode("unicode_escape").encode("latin-1")
    except (UnicodeDecodeError, UnicodeEncodeError) as exc:
        raise AssemblyError(line, f"bad string literal: {exc}") from None


def define(symbols: dict[str, int], name: str, value: int, line: int) -> None:
    if not _IDENT.match(name):
        raise AssemblyError(line, f"bad symbol name {name!r}")
    if name in symbols:
        raise AssemblyError(line, f"duplicate label {name!r}")
    symbols[name] = value
