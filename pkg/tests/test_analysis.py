import colorsys
import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from oracles import auc_pairs
from specklevar.analysis import (
    detect,
    pearson,
    reactiv,
    render_png,
    render_rgb_png,
    roc,
    stretch_to_u8,
)
from specklevar.stack import UNDEFINED, PreconditionError, ScalarMap, SpeckleStack


def _map(values, valid=None):
    return ScalarMap(np.atleast_2d(np.asarray(values, dtype=float)), "m", valid)


def test_detect_polarities():
    m = _map([0.0, 1.0, 2.0])
    assert detect(m, "high", 0.5).values.tolist() == [[0, 1, 1]]
    assert detect(m, "high_is_change", 0.5).values.tolist() == [[0, 1, 1]]
    assert detect(m, "low", 0.5).values.tolist() == [[1, 0, 0]]
    assert detect(m, "low_is_ps", 0.5).values.tolist() == [[1, 0, 0]]


def test_detect_below_min_and_undefined():
    m = _map([0.0, UNDEFINED, 2.0], valid=np.array([[True, False, True]]))
    assert detect(m, "high", -5.0).values.tolist() == [[1, 0, 1]]
    assert detect(m, "low", 5.0).values.tolist() == [[1, 0, 1]]


def test_detect_rejects_bad_args():
    with pytest.raises(PreconditionError):
        detect(_map([1.0]), "high", float("nan"))
    with pytest.raises(PreconditionError):
        detect(_map([1.0]), "sideways", 0.0)


def test_roc_perfect_map():
    truth = _map([0, 1, 0, 1, 1])
    curve = roc(truth, truth, "high")
    assert curve.auc == 1.0
    assert curve.fpr[0] == 0 and curve.tpr[0] == 0
    assert curve.fpr[-1] == 1 and curve.tpr[-1] == 1


def test_roc_matches_pair_count_oracle(rng):
    values = rng.integers(0, 6, size=(20, 20)).astype(float)  # many ties
    truth = (rng.random((20, 20)) < 0.3).astype(float)
    for polarity, sign in (("high", 1), ("low", -1)):
        curve = roc(_map(values), _map(truth), polarity)
        assert curve.auc == pytest.approx(auc_pairs(sign * values.ravel(), truth.ravel() > 0), abs=1e-12)
        assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
        assert len(curve.thresholds) == len(np.unique(values)) + 1


def test_roc_random_map_near_half(rng):
    values = rng.random((100, 100))
    truth = (rng.random((100, 100)) < 0.5).astype(float)
    assert roc(_map(values), _map(truth), "high").auc == pytest.approx(0.5, abs=0.05)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roc_inversion_symmetry(seed):
    rng = np.random.default_rng(seed)
    values = rng.random((8, 8))
    truth = np.zeros((8, 8))
    truth.flat[rng.choice(64, size=int(rng.integers(1, 63)), replace=False)] = 1
    a = roc(_map(values), _map(truth), "high").auc
    b = roc(_map(-values), _map(truth), "high").auc
    assert a + b == pytest.approx(1.0, abs=1e-9)
    assert roc(_map(values), _map(truth), "low").auc == pytest.approx(b, abs=1e-12)


def test_roc_ignores_undefined_pixels():
    values = _map([5.0, UNDEFINED, 1.0, 0.0], valid=np.array([[True, False, True, True]]))
    truth = _map([1, 1, 0, 0])
    assert roc(values, truth, "high").auc == 1.0


def test_roc_degenerate_truth():
    with pytest.raises(PreconditionError):
        roc(_map([1.0, 2.0]), _map([1, 1]), "high")
    with pytest.raises(PreconditionError):
        roc(_map([1.0, 2.0]), _map([[1], [0]]), "high")


def test_roc_outputs(tmp_path):
    curve = roc(_map([0.1, 0.9, 0.4]), _map([0, 1, 1]), "high")
    curve.write_csv(tmp_path / "r.csv")
    curve.write_json(tmp_path / "r.json")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["threshold", "fpr", "tpr"]
    assert [float(v) for v in rows[-1][1:]] == [1.0, 1.0]
    assert json.loads((tmp_path / "r.json").read_text())["auc"] == curve.auc == 1.0


def test_pearson_basic(rng):
    a = _map(rng.random((10, 10)))
    assert pearson(a, a) == pytest.approx(1.0, abs=1e-12)
    assert pearson(a, _map(-a.values + 7)) == pytest.approx(-1.0, abs=1e-12)
    assert pearson(a, _map(2 * a.values + 3)) == pytest.approx(1.0, abs=1e-12)


def test_pearson_symmetric_and_matches_numpy(rng):
    a = _map(rng.random((10, 10)))
    b = _map(rng.random((10, 10)) + a.values)
    assert pearson(a, b) == pytest.approx(pearson(b, a), abs=1e-15)
    assert pearson(a, b) == pytest.approx(np.corrcoef(a.values.ravel(), b.values.ravel())[0, 1], abs=1e-12)


def test_pearson_uses_jointly_valid(rng):
    a = rng.random((1, 6))
    b = a.copy()
    b[0, 0] = 100.0
    valid = np.ones((1, 6), bool)
    valid[0, 0] = False
    assert pearson(_map(a), _map(b, valid)) == pytest.approx(1.0)


def test_pearson_zero_variance():
    with pytest.raises(PreconditionError):
        pearson(_map([1.0, 1.0, 1.0]), _map([1.0, 2.0, 3.0]))


def _hsv(rgb):
    return np.array([colorsys.rgb_to_hsv(*px) for px in rgb.reshape(-1, 3)]).reshape(rgb.shape)


def test_reactiv_constant_pixel_is_achromatic(rng):
    data = rng.exponential(size=(10, 1, 5, 5))
    data[:, 0, 2, 2] = 3.0 * data.max()
    rgb = reactiv(SpeckleStack(data))
    assert np.allclose(rgb[2, 2], rgb[2, 2, 0])  # grey / white
    assert rgb[2, 2].min() == pytest.approx(1.0)


def test_reactiv_last_frame_spike_hue():
    n = 8
    data = np.ones((n, 1, 1, 3))
    data[0, 0, 0, 0] = 5.0
    data[n - 1, 0, 0, 1] = 5.0
    data[3, 0, 0, 2] = 5.0
    hsv = _hsv(reactiv(SpeckleStack(data)))
    assert hsv[0, 0, 0] == pytest.approx(0.0, abs=1e-9)
    assert hsv[0, 1, 0] == pytest.approx(300 / 360, abs=1e-9)
    assert hsv[0, 2, 0] == pytest.approx(3 / 7 * 300 / 360, abs=1e-9)
    assert hsv[0, 1, 0] == hsv[..., 0].max()


def test_reactiv_scale_invariance(rng):
    data = rng.exponential(size=(12, 1, 6, 6))
    a = reactiv(SpeckleStack(data))
    b = reactiv(SpeckleStack(2.0 * data))
    np.testing.assert_allclose(_hsv(a)[..., :2], _hsv(b)[..., :2], atol=1e-12)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_reactiv_saturation_is_capped_cv(rng):
    data = rng.exponential(size=(200, 1, 3, 3))
    hsv = _hsv(reactiv(SpeckleStack(data), cv_sat=2.0))
    x = data[:, 0]
    cv = x.std(axis=0) / x.mean(axis=0)
    np.testing.assert_allclose(hsv[..., 1], np.clip(cv / 2.0, 0, 1), atol=1e-9)


def test_reactiv_preconditions():
    with pytest.raises(PreconditionError):
        reactiv(SpeckleStack(np.ones((3, 2, 2, 2))))
    with pytest.raises(PreconditionError):
        reactiv(SpeckleStack(np.ones((1, 1, 2, 2))))


def test_minmax_stretch():
    m = _map(np.linspace(0.0, 1.0, 256))
    assert stretch_to_u8(m).ravel().tolist() == list(range(256))


def test_constant_map_is_mid_grey():
    assert np.all(stretch_to_u8(_map(np.full((3, 3), 4.2))) == 128)


def test_undefined_renders_black():
    m = _map([[0.0, 1.0, UNDEFINED]], valid=np.array([[True, True, False]]))
    assert stretch_to_u8(m).tolist() == [[0, 255, 0]]


def test_all_undefined_rejected():
    with pytest.raises(PreconditionError):
        stretch_to_u8(_map([UNDEFINED], valid=np.array([[False]])))


def test_percentile_stretch_clips_outliers(rng):
    values = rng.random((100, 100))
    outliers = rng.choice(values.size, size=100, replace=False)
    values.flat[outliers] = 1e6
    u8 = stretch_to_u8(_map(values), "p2_98")
    assert np.all(u8.flat[outliers] == 255)
    assert u8.min() == 0
    assert np.mean(u8 == 255) < 0.04


def test_png_files(tmp_path, rng):
    m = _map(rng.random((7, 9)))
    render_png(m, tmp_path / "a.png")
    render_png(m, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    img = Image.open(tmp_path / "a.png")
    assert img.mode == "L" and img.size == (9, 7)
    np.testing.assert_array_equal(np.asarray(img), stretch_to_u8(m))
    render_rgb_png(reactiv(SpeckleStack(rng.exponential(size=(4, 1, 7, 9)))), tmp_path / "c.png")
    img = Image.open(tmp_path / "c.png")
    assert img.mode == "RGB" and img.size == (9, 7)
