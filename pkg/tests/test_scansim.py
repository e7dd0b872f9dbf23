from __future__ import annotations

import numpy as np
import pytest

from ark import mocoder as mc
from ark import scansim as ss

TEST = mc.PROFILES["test"]


@pytest.fixture(scope="module")
def emblem():
    p = np.random.default_rng(0).integers(0, 256, 2000, dtype=np.uint8).tobytes()
    return p, mc.encode_image(p, mc.EmblemHeader(payload_length=2000), TEST)


def test_identity(emblem):
    _, img = emblem
    assert np.array_equal(ss.distort(img, ss.DistortionParams()), img)


def test_rotation_90_decodes(emblem):
    p, img = emblem
    out = ss.distort(img, ss.DistortionParams(rotation=90))
    assert mc.decode_image(out, TEST)[1] == p


def test_determinism(emblem):
    _, img = emblem
    prm = ss.DistortionParams(rotation=0.7, scale=1.03, blur_sigma=1.0, noise_std=5,
                              dust_coverage=0.002, seed=42)
    a, b = ss.distort(img, prm), ss.distort(img, prm)
    assert np.array_equal(a, b)
    prm.seed = 43
    assert not np.array_equal(a, ss.distort(img, prm))


def test_canvas_contains_result():
    img = np.zeros((100, 100), dtype=np.uint8)
    out = ss.distort(img, ss.DistortionParams(rotation=45))
    assert out.shape[0] >= 141 and out.shape[1] >= 141
    assert out[0, 0] == 255


def test_transform_points_matches_image():
    img = np.full((200, 300), 255, dtype=np.uint8)
    img[50:54, 80:84] = 0  # a dark square centred on (82, 52)
    prm = ss.DistortionParams(rotation=20, scale=1.3, translation=(7, -3))
    out = ss.distort(img, prm)
    ys, xs = np.nonzero(out < 128)
    centre = ss.transform_points(np.array([[82.0, 52.0]]), img.shape, prm)[0]
    assert abs(xs.mean() + 0.5 - centre[0]) < 0.6 and abs(ys.mean() + 0.5 - centre[1]) < 0.6


def test_dust_coverage_and_levels():
    img = np.full((400, 400), 128, dtype=np.uint8)
    out = ss.distort(img, ss.DistortionParams(dust_coverage=0.01, seed=3))
    assert abs((out == 0).mean() - 0.01) < 0.002
    assert abs((out == 255).mean() - 0.005) < 0.002


def test_dust_is_monotone_superset():
    img = np.full((300, 300), 128, dtype=np.uint8)
    lo = ss.distort(img, ss.DistortionParams(dust_coverage=0.002, seed=5))
    hi = ss.distort(img, ss.DistortionParams(dust_coverage=0.004, seed=5))
    assert ((hi == 0) | ~(lo == 0)).all()


def test_contrast_brightness_clamped():
    img = np.array([[0, 100, 255]], dtype=np.uint8)
    out = ss.distort(img, ss.DistortionParams(contrast=2.0, brightness=-20))
    assert out.tolist() == [[0, 180, 255]]


def test_param_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        ss.DistortionParams(scale=0)
    with pytest.raises(ValueError):
        ss.DistortionParams(dust_coverage=0.2)
    prm = ss.DistortionParams(rotation=1.0, translation=(1, 2), seed=9)
    path = tmp_path / "p.json"
    import json
    path.write_text(json.dumps(prm.to_dict()))
    assert ss.DistortionParams.from_json(path) == prm
    with pytest.raises(ValueError):
        ss.DistortionParams.from_dict({"bogus": 1})


def test_monotone_severity(emblem):
    """More dust (same seed) never lowers the reported correction count."""
    p, img = emblem
    violations = 0
    for seed in range(10):
        counts = []
        for cov in (0.0, 0.001, 0.002, 0.003):
            prm = ss.DistortionParams(rotation=0.5, dust_coverage=cov, noise_std=2, seed=seed)
            _, pp, stats = mc.decode_image(ss.distort(img, prm), TEST)
            assert pp == p
            counts.append(stats.corrected)
        violations += sum(b < a for a, b in zip(counts, counts[1:]))
    assert violations == 0
