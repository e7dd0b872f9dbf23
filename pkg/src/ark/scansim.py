"""Synthetic write/scan degradation for emblem rasters.

Stages run in a fixed order: affine resampling onto a white canvas, Gaussian
blur, contrast/brightness, dust (dark blobs, plus bright specks at half the
coverage), then additive noise. The output depends only on the input and the
parameters (including ``seed``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy import ndimage


@dataclass
class DistortionParams:
    rotation: float = 0.0          # degrees, counter-clockwise
    scale: float = 1.0
    translation: tuple[float, float] = (0.0, 0.0)
    blur_sigma: float = 0.0        # pixels
    noise_std: float = 0.0         # gray levels
    dust_coverage: float = 0.0     # fraction of the canvas area
    dust_blob_radius: tuple[float, float] = (1.5, 6.0)
    brightness: float = 0.0
    contrast: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not 0.0 <= self.dust_coverage <= 0.05:
            raise ValueError("dust_coverage must lie in [0, 0.05]")
        self.translation = tuple(float(v) for v in self.translation)
        self.dust_blob_radius = tuple(float(v) for v in self.dust_blob_radius)

    @classmethod
    def from_dict(cls, d: dict) -> "DistortionParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown distortion parameters: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "DistortionParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["translation"] = list(self.translation)
        d["dust_blob_radius"] = list(self.dust_blob_radius)
        return d

    @property
    def is_identity(self) -> bool:
        return (self.rotation % 360 == 0 and self.scale == 1.0 and self.translation == (0.0, 0.0)
                and self.blur_sigma == 0 and self.noise_std == 0 and self.dust_coverage == 0
                and self.brightness == 0 and self.contrast == 1.0)


def envelope_params(rng: np.random.Generator, cell_px: float, seed: int,
                    rotation: float = 1.5, scale: tuple[float, float] = (0.9, 1.1),
                    blur_cells: float = 0.6, dust: float = 0.003, noise: float = 8.0
                    ) -> DistortionParams:
    """Draw one parameter set uniformly from the acceptance envelope."""
    return DistortionParams(
        rotation=float(rng.uniform(-rotation, rotation)),
        scale=float(rng.uniform(*scale)),
        translation=(float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5))),
        blur_sigma=float(rng.uniform(0, blur_cells * cell_px)),
        noise_std=float(rng.uniform(0, noise)),
        dust_coverage=float(rng.uniform(0, dust)),
        seed=seed,
    )


def _forward(shape: tuple[int, int], p: DistortionParams):
    """Linear part, centre and canvas origin of the affine stage."""
    h, w = shape
    theta = math.radians(p.rotation)
    # about the image centre: rotate (counter-clockwise on screen) and scale, then translate
    a = p.scale * np.array([[math.cos(theta), math.sin(theta)],
                            [-math.sin(theta), math.cos(theta)]])
    corners = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=np.float64)
    centre = np.array([w / 2, h / 2])
    mapped = (corners - centre) @ a.T + centre + np.array(p.translation)
    lo = np.minimum(np.floor(mapped.min(axis=0)), 0)
    hi = np.maximum(np.ceil(mapped.max(axis=0)), [w, h])
    return a, centre, lo, hi


def transform_points(points: np.ndarray, shape: tuple[int, int], p: DistortionParams) -> np.ndarray:
    """Where continuous input coordinates (x, y) land in the distorted raster."""
    if not _has_affine(p):
        return np.asarray(points, dtype=np.float64).copy()
    a, centre, lo, _ = _forward(shape, p)
    pts = np.asarray(points, dtype=np.float64)
    return (pts - centre) @ a.T + centre + np.array(p.translation) - lo


def _has_affine(p: DistortionParams) -> bool:
    return bool(p.rotation % 360 or p.scale != 1.0 or p.translation != (0.0, 0.0))


def _affine(img: np.ndarray, p: DistortionParams) -> np.ndarray:
    a, centre, lo, hi = _forward(img.shape, p)
    out_w, out_h = int(hi[0] - lo[0]), int(hi[1] - lo[1])
    inv = np.linalg.inv(a)
    # output pixel centre (x, y) -> input continuous coordinate
    shift = centre + np.array(p.translation) - lo
    offset = centre - inv @ shift
    # ndimage works in (row, col) index space with pixel centres at integers
    m = np.array([[inv[1, 1], inv[1, 0]], [inv[0, 1], inv[0, 0]]])
    off_rc = np.array([offset[1], offset[0]]) + m @ np.array([0.5, 0.5]) - 0.5
    return ndimage.affine_transform(img.astype(np.float64), m, offset=off_rc,
                                    output_shape=(out_h, out_w), order=1,
                                    mode="constant", cval=255.0)


def _dust(img: np.ndarray, p: DistortionParams) -> np.ndarray:
    h, w = img.shape
    rmin, rmax = p.dust_blob_radius
    for stream, coverage, level in ((1, p.dust_coverage, 0.0), (2, p.dust_coverage / 2, 255.0)):
        # one generator per blob kind: more coverage only ever adds blobs
        rng = np.random.default_rng([p.seed, stream])
        target = coverage * h * w
        mask = np.zeros((h, w), dtype=bool)
        covered = 0
        while covered < target:
            ra, rb = rng.uniform(rmin, rmax, 2)
            cx, cy = rng.uniform(0, w), rng.uniform(0, h)
            ang = rng.uniform(0, math.pi)
            r = int(math.ceil(max(ra, rb))) + 1
            x0, x1 = max(0, int(cx) - r), min(w, int(cx) + r + 1)
            y0, y1 = max(0, int(cy) - r), min(h, int(cy) + r + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            yy, xx = np.mgrid[y0:y1, x0:x1]
            dx, dy = xx + 0.5 - cx, yy + 0.5 - cy
            u = dx * math.cos(ang) + dy * math.sin(ang)
            v = -dx * math.sin(ang) + dy * math.cos(ang)
            blob = (u / ra) ** 2 + (v / rb) ** 2 <= 1.0
            sub = mask[y0:y1, x0:x1]
            covered += int(np.count_nonzero(blob & ~sub))
            sub |= blob
        img = np.where(mask, level, img)
    return img


def distort(img: np.ndarray, p: DistortionParams) -> np.ndarray:
    """Apply the degradation chain; identity parameters return an identical copy."""
    img = np.asarray(img, dtype=np.uint8)
    if p.is_identity:
        return img.copy()
    out = img.astype(np.float64)
    if _has_affine(p):
        out = _affine(out, p)
    if p.blur_sigma > 0:
        out = ndimage.gaussian_filter(out, p.blur_sigma, mode="nearest")
    if p.contrast != 1.0 or p.brightness != 0:
        out = np.clip(out * p.contrast + p.brightness, 0, 255)
    if p.dust_coverage > 0:
        out = _dust(out, p)
    if p.noise_std > 0:
        out = out + np.random.default_rng([p.seed, 3]).normal(0.0, p.noise_std, out.shape)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
