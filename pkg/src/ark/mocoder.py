"""Emblem layout codec: payload octets <-> cell matrices <-> grayscale rasters.

Emblem anatomy (cells, G per side)::

    F-cell black frame
      S-cell sync ring: 8x8 blocks alternating clockwise, black at corners,
      with the first top block after the top-left corner replaced by a
      2x2 checker of 4x4 sub-blocks (orientation mark)
        I x I interior, I = G - 2F - 2S, carrying the modulated stream

The stream is an 80-octet header block (16-octet header repeated 5 times)
followed by column-interleaved RS(255,223) codewords. Bits are modulated
two cells per bit along a serpentine path (even rows left to right, odd rows
right to left): the level always flips mid-bit, and a flip at the start of a
bit encodes 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage, optimize, special

from . import ecc
from .bitcore import crc32
from .errors import CapacityError, EmblemDecodeError, HeaderError, LocateError

WHITE = 0
BLACK = 1

HEADER_SIZE = 16
HEADER_COPIES = 5
HEADER_BLOCK = HEADER_SIZE * HEADER_COPIES
HEADER_VERSION = 1

TYPE_DATA = 0
TYPE_SYSTEM = 1
TYPE_PARITY = 2
TYPE_NAMES = {TYPE_DATA: "data", TYPE_SYSTEM: "system", TYPE_PARITY: "parity"}


# ----------------------------------------------------------- geometry ----

@dataclass(frozen=True)
class EmblemGeometry:
    grid_side: int
    frame: int = 6
    ring: int = 8
    quiet: int = 8
    cell_px: int = 4
    name: str = ""

    def __post_init__(self):
        if self.interior <= 0 or self.interior % 2:
            raise ValueError(f"grid side {self.grid_side} leaves no even interior")

    @property
    def interior(self) -> int:
        return self.grid_side - 2 * self.frame - 2 * self.ring

    @property
    def origin(self) -> int:
        """Grid index of the first interior row/column."""
        return self.frame + self.ring

    @property
    def data_cells(self) -> int:
        return self.interior ** 2

    @property
    def raw_bytes(self) -> int:
        return self.data_cells // 16

    @property
    def n_codewords(self) -> int:
        return (self.raw_bytes - HEADER_BLOCK) // ecc.N

    @property
    def user_capacity(self) -> int:
        return ecc.K * self.n_codewords

    @property
    def image_side(self) -> int:
        return (self.grid_side + 2 * self.quiet) * self.cell_px


PROFILES = {
    "test": EmblemGeometry(256, name="test"),
    "mid": EmblemGeometry(512, name="mid"),
    "a4": EmblemGeometry(1024, name="a4"),
}


def get_profile(name: str) -> EmblemGeometry:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


def template(geom: EmblemGeometry) -> np.ndarray:
    """Fixed pattern cells: 0/1 for frame, ring and mark; -1 for the interior."""
    g, f, s = geom.grid_side, geom.frame, geom.ring
    t = np.full((g, g), -1, dtype=np.int8)
    t[:f, :] = BLACK
    t[-f:, :] = BLACK
    t[:, :f] = BLACK
    t[:, -f:] = BLACK
    span = g - 2 * f
    v, u = np.mgrid[0:span, 0:span]
    top, bottom = v < s, v >= span - s
    left, right = u < s, u >= span - s
    ring = top | bottom | left | right
    d = np.zeros_like(u)
    d = np.where(top, u - s, d)
    d = np.where(right, v - s, d)
    d = np.where(bottom, (span - s - 1) - u, d)
    d = np.where(left, (span - s - 1) - v, d)
    val = ((d // 8) % 2 == 1).astype(np.int8)
    corners = (top | bottom) & (left | right)
    val[corners] = BLACK
    # orientation mark: first top block, 2x2 checker of 4x4 sub-blocks
    mark = top & (u >= s) & (u < 2 * s)
    sub = ((v // 4) + ((u - s) // 4)) % 2
    val = np.where(mark, sub, val).astype(np.int8)
    inner = t[f:g - f, f:g - f]
    inner[ring] = val[ring]
    return t


def mark_mask(geom: EmblemGeometry) -> np.ndarray:
    m = np.zeros((geom.grid_side, geom.grid_side), dtype=bool)
    f, s = geom.frame, geom.ring
    m[f:f + s, f + s:f + 2 * s] = True
    return m


def serpentine(geom: EmblemGeometry) -> tuple[np.ndarray, np.ndarray]:
    """(rows, cols) grid indices of interior cells in modulation order."""
    n = geom.interior
    r, c = np.divmod(np.arange(n * n), n)
    c = np.where(r % 2 == 1, n - 1 - c, c)
    return r + geom.origin, c + geom.origin


# ------------------------------------------------------------- header ----

@dataclass(frozen=True)
class EmblemHeader:
    emblem_type: int = TYPE_DATA
    group_id: int = 0
    index_in_group: int = 0
    group_data_count: int = 1
    total_emblems: int = 1
    payload_length: int = 0
    version: int = HEADER_VERSION

    _FMT = "<BBHBBHH2x"

    def pack(self) -> bytes:
        body = struct.pack(self._FMT, self.version, self.emblem_type, self.group_id,
                           self.index_in_group, self.group_data_count,
                           self.total_emblems, self.payload_length)
        return body + struct.pack("<I", crc32(body))

    @classmethod
    def unpack(cls, raw: bytes) -> "EmblemHeader":
        if len(raw) != HEADER_SIZE:
            raise HeaderError(f"header must be {HEADER_SIZE} octets")
        body = raw[:12]
        (stored,) = struct.unpack_from("<I", raw, 12)
        if crc32(body) != stored:
            raise HeaderError("header CRC mismatch")
        ver, typ, gid, idx, k, total, plen = struct.unpack(cls._FMT, body)
        return cls(typ, gid, idx, k, total, plen, ver)

    @property
    def type_name(self) -> str:
        return TYPE_NAMES.get(self.emblem_type, str(self.emblem_type))


def header_block(h: EmblemHeader) -> bytes:
    return h.pack() * HEADER_COPIES


def vote_header(block: bytes) -> EmblemHeader:
    """Per-octet plurality vote over the 5 copies (ties go to the earliest)."""
    copies = [block[i * HEADER_SIZE:(i + 1) * HEADER_SIZE] for i in range(HEADER_COPIES)]
    out = bytearray()
    for j in range(HEADER_SIZE):
        column = [c[j] for c in copies]
        out.append(max(column, key=lambda b: (column.count(b), -column.index(b))))
    return EmblemHeader.unpack(bytes(out))


# ---------------------------------------------------------- modulation ----

def dm2d_encode(bits: Sequence[int], initial_level: int = BLACK) -> np.ndarray:
    """Two cells per bit; mid-bit flip always, start flip encodes 0."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size == 0:
        return np.zeros(0, dtype=np.uint8)
    # each bit flips the level twice for 0 and once for 1 (mid-bit only)
    flips = np.where(bits == 0, 1, 0)
    level_a = (initial_level + np.cumsum(flips) + np.arange(bits.size)) % 2
    cells = np.empty(2 * bits.size, dtype=np.uint8)
    cells[0::2] = level_a
    cells[1::2] = 1 - level_a
    return cells


def dm2d_decode(cells: Sequence[int], confidence: Sequence[float] | None = None,
                initial_level: int = BLACK, conf_floor: float = 0.15
                ) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(bits, erasure_flags)``.

    The first level of each pair is estimated from both of its cells (the
    second is always the opposite level), weighting each by its confidence;
    a bit is then 1 when that level did not change from the previous pair.
    A bit is flagged when the clock flip of its pair is missing or a cell
    of the pair is below ``conf_floor``. Since the bit also depends on the
    preceding pair, a doubtful preceding pair flags it as well.
    """
    cells = np.asarray(cells, dtype=np.int64)
    if cells.size % 2:
        raise ValueError("DM cell sequence must have even length")
    if confidence is None:
        conf = np.ones(cells.size)
    else:
        conf = np.asarray(confidence, dtype=np.float64)
    a, b = cells[0::2], cells[1::2]
    ca, cb = conf[0::2], conf[1::2]
    evidence = (2 * a - 1) * ca - (2 * b - 1) * cb
    first = np.where(evidence == 0, a, evidence > 0).astype(np.int64)
    before = np.concatenate([[1 - initial_level], first[:-1]])
    bits = (first != before).astype(np.uint8)
    doubtful = (a == b) | (np.minimum(ca, cb) < conf_floor)
    erased = doubtful | np.concatenate([[False], doubtful[:-1]])
    return bits, erased


# ---------------------------------------------------------- encode side ----

@dataclass
class CellMatrix:
    cells: np.ndarray
    confidence: np.ndarray | None = None

    @property
    def side(self) -> int:
        return self.cells.shape[0]


def _interleave(codewords: np.ndarray) -> np.ndarray:
    # stream[i*n + j] = codeword j, byte i
    return codewords.T.reshape(-1)


def emblem_encode(payload: bytes, header: EmblemHeader, geom: EmblemGeometry) -> CellMatrix:
    payload = bytes(payload)
    if len(payload) > geom.user_capacity:
        raise CapacityError(
            f"payload of {len(payload)} octets exceeds {geom.name or geom.grid_side} "
            f"capacity {geom.user_capacity}")
    n = geom.n_codewords
    msgs = np.zeros(n * ecc.K, dtype=np.uint8)
    msgs[:len(payload)] = np.frombuffer(payload, dtype=np.uint8)
    cws = ecc.rs_encode_blocks(msgs.reshape(n, ecc.K))
    stream = np.concatenate([np.frombuffer(header_block(header), dtype=np.uint8),
                             _interleave(cws)])
    bits = np.unpackbits(stream, bitorder="big")
    pad = geom.data_cells // 2 - bits.size
    bits = np.concatenate([bits, np.arange(pad) % 2 == 0]).astype(np.uint8)
    cells = template(geom).astype(np.uint8)
    rows, cols = serpentine(geom)
    cells[rows, cols] = dm2d_encode(bits)
    return CellMatrix(cells)


def emblem_render(cells: CellMatrix | np.ndarray, geom: EmblemGeometry,
                  cell_px: int | None = None) -> np.ndarray:
    """Black cells -> 0, white -> 255, with a white quiet zone."""
    m = cells.cells if isinstance(cells, CellMatrix) else np.asarray(cells)
    px = cell_px or geom.cell_px
    if px < 2:
        raise ValueError("cell_px must be at least 2")
    q = geom.quiet
    full = np.zeros((m.shape[0] + 2 * q, m.shape[1] + 2 * q), dtype=np.uint8)
    full[q:q + m.shape[0], q:q + m.shape[1]] = m
    img = np.where(full == BLACK, 0, 255).astype(np.uint8)
    return np.repeat(np.repeat(img, px, axis=0), px, axis=1)


# ------------------------------------------------------------ scan side ----

def binarize(img: np.ndarray, window: int = 33, bias: float = 4.0
             ) -> tuple[np.ndarray, np.ndarray]:
    """Local-mean threshold. Returns (black mask, confidence in [0, 1]).

    Where the window is flat (pixel within ``bias`` of the local mean) the
    local threshold carries no information, so the pixel is classified
    against mid-gray instead; large uniform regions keep their true level.
    """
    p = np.asarray(img, dtype=np.float64)
    mean = ndimage.uniform_filter(p, size=window, mode="nearest")
    thr = mean - bias
    black = p < thr
    flat = np.abs(p - mean) <= bias
    black = np.where(flat, p < 128, black)
    conf = np.minimum(1.0, np.abs(p - thr) / 128.0)
    return black, conf


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.asarray(rows, dtype=np.float64))
    h = vt[-1].reshape(3, 3)
    return h / h[2, 2]


def apply_homography(h: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    return (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w, (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w


def _fit_line(pts: np.ndarray) -> tuple[np.ndarray, float]:
    """Robust total-least-squares line: returns (unit normal n, c) with n.p = c."""
    keep = np.ones(len(pts), dtype=bool)
    for _ in range(3):
        sel = pts[keep]
        centre = sel.mean(axis=0)
        _, _, vt = np.linalg.svd(sel - centre)
        normal = vt[-1]
        c = normal @ centre
        resid = np.abs(pts @ normal - c)
        tol = max(1.0, 2.5 * np.median(resid[keep]))
        nxt = resid <= tol
        if nxt.sum() < 8 or np.array_equal(nxt, keep):
            break
        keep = nxt
    return normal, float(c)


def _intersect(l1, l2) -> np.ndarray:
    a = np.array([l1[0], l2[0]])
    return np.linalg.solve(a, np.array([l1[1], l2[1]]))


@dataclass
class LocateResult:
    homography: np.ndarray
    corners: np.ndarray  # image corners matched to cell corners (0,0),(G,0),(G,G),(0,G)
    ring_score: float
    mark_score: float


def _frame_corners(img: np.ndarray, black: np.ndarray, geom: EmblemGeometry) -> np.ndarray:
    """Sub-pixel outer frame corners in image order TL, TR, BR, BL (clockwise)."""
    labels, count = ndimage.label(black)
    if count == 0:
        raise LocateError("no_frame", "no dark region in image")
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    found = None
    for lab in np.argsort(sizes)[::-1][:3]:
        if sizes[lab] == 0:
            break
        sl = ndimage.find_objects((labels == lab).astype(np.int32))[0]
        comp = labels[sl] == lab
        filled = ndimage.binary_fill_holes(comp)
        if filled.sum() > 1.5 * comp.sum():
            found = (sl, filled)
            break
    if found is None:
        raise LocateError("no_frame", "no dark component enclosing a hole")
    (sy, sx), filled = found
    ys, xs = np.nonzero(filled)
    xs = xs + sx.start + 0.5
    ys = ys + sy.start + 0.5
    s1, s2 = xs + ys, xs - ys
    rough = np.array([
        [xs[np.argmin(s1)], ys[np.argmin(s1)]],   # TL
        [xs[np.argmax(s2)], ys[np.argmax(s2)]],   # TR
        [xs[np.argmax(s1)], ys[np.argmax(s1)]],   # BR
        [xs[np.argmin(s2)], ys[np.argmin(s2)]],   # BL
    ])
    side = np.mean([np.linalg.norm(rough[i] - rough[(i + 1) % 4]) for i in range(4)])
    if side < geom.grid_side * 1.5:
        raise LocateError("no_frame", f"dark region too small ({side:.0f} px)")
    cell = side / geom.grid_side

    smooth = ndimage.gaussian_filter(np.asarray(img, dtype=np.float64), 1.0)
    inside = filled & ndimage.binary_erosion(black[sy, sx], iterations=2)
    dark = np.median(smooth[sy, sx][inside]) if inside.any() else 0.0
    margin = max(4, int(3 * cell))
    y0, y1 = max(0, sy.start - margin), min(img.shape[0], sy.stop + margin)
    x0, x1 = max(0, sx.start - margin), min(img.shape[1], sx.stop + margin)
    around = np.ones((y1 - y0, x1 - x0), dtype=bool)
    around[sy.start - y0:sy.stop - y0, sx.start - x0:sx.stop - x0] = False
    light = np.median(smooth[y0:y1, x0:x1][around]) if around.any() else 255.0
    mid = (dark + light) / 2

    centre = rough.mean(axis=0)
    lines = []
    ts = np.arange(-2.5 * cell, 2.5 * cell, 0.25)
    for i in range(4):
        p, q = rough[i], rough[(i + 1) % 4]
        direction = (q - p) / np.linalg.norm(q - p)
        normal = np.array([direction[1], -direction[0]])
        if normal @ ((p + q) / 2 - centre) < 0:
            normal = -normal
        fr = np.linspace(0.08, 0.92, 160)
        base = p[None, :] + fr[:, None] * (q - p)[None, :]
        px = base[:, 0:1] + ts[None, :] * normal[0]
        py = base[:, 1:2] + ts[None, :] * normal[1]
        prof = ndimage.map_coordinates(smooth, [py.ravel() - 0.5, px.ravel() - 0.5],
                                       order=1, mode="nearest").reshape(px.shape)
        pts = []
        for k in range(len(fr)):
            t = _rising_cross(prof[k], ts, mid, 0.0)
            if t is None:
                continue
            pts.append(base[k] + t * normal)
        if len(pts) < 16:
            raise LocateError("no_frame", "frame edge not found")
        lines.append(_fit_line(np.array(pts)))
    return np.array([_intersect(lines[(i - 1) % 4], lines[i]) for i in range(4)])


def _rising_cross(row: np.ndarray, ts: np.ndarray, level: float, near: float) -> float | None:
    cross = np.nonzero((row[:-1] < level) & (row[1:] >= level))[0]
    if cross.size == 0:
        return None
    j = cross[np.argmin(np.abs(ts[cross] - near))]
    frac = (level - row[j]) / (row[j + 1] - row[j])
    return float(ts[j] + frac * (ts[j + 1] - ts[j]))


def _sample_cells(black: np.ndarray, conf: np.ndarray, h: np.ndarray,
                  rows: np.ndarray, cols: np.ndarray, spread: float = 0.25
                  ) -> tuple[np.ndarray, np.ndarray]:
    offs = np.array([-spread, 0.0, spread])
    oy, ox = np.meshgrid(offs, offs, indexing="ij")
    cx = cols[:, None] + 0.5 + ox.ravel()[None, :]
    cy = rows[:, None] + 0.5 + oy.ravel()[None, :]
    x, y = apply_homography(h, cx, cy)
    ix, iy = np.floor(x).astype(np.int64), np.floor(y).astype(np.int64)
    ok = (ix >= 0) & (iy >= 0) & (ix < black.shape[1]) & (iy < black.shape[0])
    ixc, iyc = np.clip(ix, 0, black.shape[1] - 1), np.clip(iy, 0, black.shape[0] - 1)
    vals = black[iyc, ixc] & ok
    sconf = np.where(ok, conf[iyc, ixc], 0.0)
    nblack = vals.sum(axis=1)
    nsub = vals.shape[1]
    value = (2 * nblack > nsub).astype(np.uint8)
    agree = np.maximum(nblack, nsub - nblack) / nsub
    return value, sconf.mean(axis=1) * agree


def emblem_locate(img: np.ndarray, geom: EmblemGeometry, binary=None,
                  min_ring: float = 0.75, min_mark: float = 0.75) -> LocateResult:
    """Find the emblem and return its cell->pixel mapping."""
    img = np.asarray(img)
    black, conf = binary if binary is not None else binarize(img)
    corners = _frame_corners(img, black, geom)
    g = geom.grid_side
    cell_corners = np.array([[0, 0], [g, 0], [g, g], [0, g]], dtype=np.float64)
    tmpl = template(geom)
    mark = mark_mask(geom)
    fixed = tmpl >= 0
    ring_sel = fixed & ~mark
    # only ring cells (frame is uniformly black and says nothing about pose)
    f = geom.frame
    ring_sel[:f, :] = ring_sel[-f:, :] = ring_sel[:, :f] = ring_sel[:, -f:] = False
    rr, rc = np.nonzero(ring_sel)
    mr, mc = np.nonzero(mark)
    mark_truth = tmpl[mr, mc]

    candidates = []
    for mirror in (False, True):
        for rot in range(4):
            order = [((rot - i) if mirror else (i + rot)) % 4 for i in range(4)]
            h = _dlt(cell_corners[order], corners)
            v, _ = _sample_cells(black, conf, h, rr, rc)
            ring_score = float(np.mean(v == tmpl[rr, rc]))
            candidates.append((ring_score, mirror, rot, h))
    best_ring = max(c[0] for c in candidates)
    if best_ring < min_ring:
        raise LocateError("ring", f"sync ring validation failed (best agreement {best_ring:.2f})")
    # ring fixes the mirror; the mark decides between the four rotations
    scored = []
    for ring_score, mirror, rot, h in candidates:
        if ring_score < best_ring - 0.1:
            continue
        v, _ = _sample_cells(black, conf, h, mr, mc)
        scored.append((float(np.mean(v == mark_truth)), ring_score, h, corners))
    scored.sort(key=lambda s: s[0], reverse=True)
    best = scored[0]
    if best[0] < min_mark or (len(scored) > 1 and scored[1][0] > best[0] - 0.2):
        raise LocateError("orientation", f"orientation mark ambiguous (score {best[0]:.2f})")
    h = best[2]
    img_corners = np.stack(apply_homography(h, cell_corners[:, 0], cell_corners[:, 1]), axis=1)
    return LocateResult(h, img_corners, best[1], best[0])


def emblem_sample(black: np.ndarray, conf: np.ndarray, h: np.ndarray,
                  geom: EmblemGeometry, spread: float = 0.25) -> CellMatrix:
    g = geom.grid_side
    rows, cols = np.divmod(np.arange(g * g), g)
    value, c = _sample_cells(black, conf, h, rows, cols, spread)
    return CellMatrix(value.reshape(g, g), c.reshape(g, g))


# ------------------------------------------------------------ equalizer ----
# Heavy blur (sigma above ~0.4 cell) smears isolated cells below any fixed
# threshold. The equalizer works on gray levels sampled at cell centres:
# it fits the blur width and the black/white levels on the cells whose
# values are known (frame, ring, quiet zone), then removes the blur
# contribution of neighbouring cells by soft interference cancellation,
# forcing the two cells of every modulation pair to opposite levels.

_EQ_RADIUS = 2


def _cell_kernel(sigma: float, offs: np.ndarray) -> np.ndarray:
    """Weight of each neighbouring cell in the averaged centre samples."""
    d = np.arange(-_EQ_RADIUS, _EQ_RADIUS + 1)
    k = np.zeros((d.size, d.size))
    for oy in offs:
        wy = special.ndtr((d + 0.5 - oy) / sigma) - special.ndtr((d - 0.5 - oy) / sigma)
        for ox in offs:
            wx = special.ndtr((d + 0.5 - ox) / sigma) - special.ndtr((d - 0.5 - ox) / sigma)
            k += np.outer(wy, wx)
    return k / offs.size ** 2


def _level_fit(y, known_x, sel, sigma, offs):
    pred = ndimage.correlate(known_x, _cell_kernel(sigma, offs), mode="nearest")
    a = np.stack([np.ones(int(sel.sum())), pred[sel]], axis=1)
    sol, *_ = np.linalg.lstsq(a, y[sel], rcond=None)
    return sol, float(np.sum((a @ sol - y[sel]) ** 2))


def emblem_equalize(img: np.ndarray, h: np.ndarray, geom: EmblemGeometry,
                    spread: float = 0.15, iters: int = 16) -> tuple[CellMatrix, float]:
    """Soft cell estimates under blur. Returns the matrix and the fitted blur
    sigma in cell units."""
    g = geom.grid_side
    pad = _EQ_RADIUS + 1
    idx = np.arange(-pad, g + pad) + 0.5
    cy, cx = np.meshgrid(idx, idx, indexing="ij")
    offs = np.array([-spread, 0.0, spread])
    src = np.asarray(img, dtype=np.float64)
    y = np.zeros(cx.shape)
    inside = np.ones(cx.shape, dtype=bool)
    for oy in offs:
        for ox in offs:
            px, py = apply_homography(h, cx + ox, cy + oy)
            inside &= (px >= 0) & (py >= 0) & (px < src.shape[1]) & (py < src.shape[0])
            y += ndimage.map_coordinates(src, [py - 0.5, px - 0.5], order=1, mode="nearest")
    y /= offs.size ** 2

    full = np.zeros(cx.shape, dtype=np.int64)  # quiet zone is white
    full[pad:pad + g, pad:pad + g] = template(geom)
    known = full >= 0
    x = np.where(known, full, 0.5).astype(np.float64)
    calib = ndimage.minimum_filter(known.astype(np.uint8), size=2 * _EQ_RADIUS + 1,
                                   mode="nearest").astype(bool) & inside
    fit = optimize.minimize_scalar(lambda s: _level_fit(y, x, calib, s, offs)[1],
                                   bounds=(0.05, 1.2), method="bounded",
                                   options={"xatol": 0.005})
    sigma = float(fit.x)
    (alpha, beta), _ = _level_fit(y, x, calib, sigma, offs)
    k = _cell_kernel(sigma, offs)
    k0 = k[_EQ_RADIUS, _EQ_RADIUS]
    k[_EQ_RADIUS, _EQ_RADIUS] = 0.0
    u = (y - alpha) / beta if beta != 0 else np.zeros_like(y)

    rows, cols = serpentine(geom)
    ra, ca = rows[0::2] + pad, cols[0::2] + pad
    rb, cb = rows[1::2] + pad, cols[1::2] + pad
    for it in range(iters):
        soft = (u - ndimage.correlate(x, k, mode="nearest")) / k0
        first = np.clip((soft[ra, ca] - soft[rb, cb] + 1.0) / 2.0, 0.0, 1.0)
        # damped updates keep the parallel cancellation from oscillating
        x[ra, ca] = first if it == iters - 1 else 0.5 * (x[ra, ca] + first)
        x[rb, cb] = 1.0 - x[ra, ca]
    soft = ((u - ndimage.correlate(x, k, mode="nearest")) / k0)[pad:pad + g, pad:pad + g]
    conf = np.clip(np.abs(soft - 0.5) * 2.0, 0.0, 1.0)
    conf[~inside[pad:pad + g, pad:pad + g]] = 0.0
    return CellMatrix((soft > 0.5).astype(np.uint8), conf), sigma


# ---------------------------------------------------------- decode side ----

@dataclass
class DecodeStats:
    corrected: int = 0
    erasures: int = 0
    failed: list[int] = field(default_factory=list)


def emblem_decode(cm: CellMatrix, geom: EmblemGeometry, conf_floor: float = 0.15
                  ) -> tuple[EmblemHeader, bytes, DecodeStats]:
    if cm.side != geom.grid_side:
        raise ValueError(f"cell matrix side {cm.side} does not match geometry {geom.grid_side}")
    rows, cols = serpentine(geom)
    cells = cm.cells[rows, cols]
    conf = None if cm.confidence is None else cm.confidence[rows, cols]
    bits, erased = dm2d_decode(cells, conf, conf_floor=conf_floor)
    n = geom.n_codewords
    nbytes = HEADER_BLOCK + n * ecc.N
    octets = np.packbits(bits[:nbytes * 8], bitorder="big")
    byte_erased = erased[:nbytes * 8].reshape(nbytes, 8).any(axis=1)

    header = vote_header(octets[:HEADER_BLOCK].tobytes())
    if header.payload_length > geom.user_capacity:
        raise HeaderError(f"payload length {header.payload_length} exceeds capacity")

    body = octets[HEADER_BLOCK:].reshape(ecc.N, n).T
    emask = byte_erased[HEADER_BLOCK:].reshape(ecc.N, n).T.copy()
    # more erasures than parity symbols cannot be decoded as flagged; fall
    # back to treating those octets as plain (possibly wrong) symbols
    over = emask.sum(axis=1) > ecc.NSYM
    emask[over] = False
    msgs, status = ecc.rs_decode_blocks(body, emask)
    stats = DecodeStats(
        corrected=int(status[status > 0].sum()),
        erasures=int(byte_erased[HEADER_BLOCK:].sum()),
        failed=[int(i) for i in np.nonzero(status < 0)[0]],
    )
    if stats.failed:
        raise EmblemDecodeError(
            f"{len(stats.failed)} of {n} codewords unrecoverable", stats.failed, header)
    return header, msgs.reshape(-1)[:header.payload_length].tobytes(), stats


@dataclass
class ScanParams:
    """Tunable constants of the scan-side chain."""

    window: int = 33
    bias: float = 4.0
    conf_floor: float = 0.15
    spread: float = 0.2
    equalize: bool = True        # fall back to the equalizing sampler on failure
    eq_spread: float = 0.15
    eq_iters: int = 16
    eq_conf_floor: float = 0.02


def decode_image(img: np.ndarray, geom: EmblemGeometry, params: ScanParams | None = None
                 ) -> tuple[EmblemHeader, bytes, DecodeStats]:
    """binarize -> locate -> sample -> decode, retrying with the equalizing
    sampler when the thresholded cells do not decode."""
    p = params or ScanParams()
    black, conf = binarize(img, p.window, p.bias)
    loc = emblem_locate(img, geom, binary=(black, conf))
    cm = emblem_sample(black, conf, loc.homography, geom, p.spread)
    try:
        return emblem_decode(cm, geom, p.conf_floor)
    except (HeaderError, EmblemDecodeError):
        if not p.equalize:
            raise
    cm, _ = emblem_equalize(img, loc.homography, geom, p.eq_spread, p.eq_iters)
    return emblem_decode(cm, geom, p.eq_conf_floor)


def encode_image(payload: bytes, header: EmblemHeader, geom: EmblemGeometry) -> np.ndarray:
    return emblem_render(emblem_encode(payload, header, geom), geom)


# ---------------------------------------------------------------- PGM ----

def write_pgm(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode a binary PGM (P5, maxval 255); '#' comments are allowed."""
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace before the raster
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM (P5)")
    w, h, maxval = (int(x) for x in fields[1:])
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise ValueError("truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def read_pgm(path: str | Path) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())
