import json

import numpy as np
import pytest

import emoedit


def test_emotion_names():
    names = emoedit.emotion_names()
    assert len(names) == 7
    assert "happy" in names


def test_cv_and_lie():
    assert emoedit.coefficient_of_variation([1.0, 2.0, 3.0]) == pytest.approx(0.408248290463863, abs=1e-12)
    a = np.zeros((4, 4, 3), np.float32)
    steps = [a + k / 8.0 for k in range(9)]
    assert abs(emoedit.lie(steps)) < 1e-9


def test_frechet_unit_fits():
    x = np.array([[-1.5], [-0.5], [0.5], [1.5]]) * np.sqrt(3.0 / 5.0)
    assert emoedit.frechet_distance(x, x + 1.0) == pytest.approx(1.0, abs=1e-6)
    assert emoedit.frechet_distance(x, x) < 1e-6


def test_smoothing():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(20, 3))
    out = emoedit.smooth(s)
    expect = 0.25 * s[4] + 0.5 * s[5] + 0.25 * s[6]
    np.testing.assert_allclose(out[5], expect, atol=1e-14)
    assert emoedit.total_variation(out) <= emoedit.total_variation(s)
    with pytest.raises(emoedit.ConfigError):
        emoedit.smooth(s, [0.5, 0.6, 0.1])


def test_homography_round_trip():
    h = np.array([[1.1, 0.1, 5.0], [-0.05, 0.9, 3.0], [1e-4, 2e-4, 1.0]])
    src = np.random.default_rng(1).uniform(0, 100, size=(8, 2))
    dst = emoedit.apply_homography(h, src)
    est = emoedit.estimate_homography(src, dst)
    np.testing.assert_allclose(emoedit.apply_homography(est, src), dst, atol=1e-6)


def test_png_round_trip(tmp_path):
    img = np.linspace(0, 1, 5 * 6 * 3, dtype=np.float32).reshape(5, 6, 3)
    emoedit.save_png(img, tmp_path / "x.png")
    back = emoedit.load_png(tmp_path / "x.png")
    assert back.shape == (5, 6, 3)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6


def test_config(tmp_path):
    cfg = emoedit.default_config()
    assert cfg["edit"]["smoothing"] is True
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"edit": {"causal": True}}))
    assert emoedit.load_config(p)["edit"]["causal"] is True
    p.write_text(json.dumps({"edit": {"casual": True}}))
    with pytest.raises(emoedit.ConfigError):
        emoedit.load_config(p)
