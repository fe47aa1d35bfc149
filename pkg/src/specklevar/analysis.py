"""Detection maps, ROC scoring, map correlation, REACTIV composites, PNG output."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb
from PIL import Image

from .stack import PreconditionError, ScalarMap, SpeckleStack

POLARITIES = ("high", "low")
STRETCHES = ("minmax", "p2_98")


def _polarity(polarity: str) -> str:
    aliases = {"high": "high", "high_is_change": "high", "low": "low", "low_is_ps": "low"}
    try:
        return aliases[polarity]
    except KeyError:
        raise PreconditionError(f"unknown polarity {polarity!r}") from None


def detect(smap: ScalarMap, polarity: str, threshold: float) -> ScalarMap:
    """Binary map: 1 where the value is above (``high``) or below (``low``) threshold."""
    if not np.isfinite(threshold):
        raise PreconditionError("threshold must be finite")
    if _polarity(polarity) == "high":
        hit = smap.values > threshold
    else:
        hit = smap.values < threshold
    return ScalarMap((hit & smap.valid).astype(np.float64), f"detect_{smap.name}")


@dataclass
class RocCurve:
    """Operating points ordered from the strictest threshold to the loosest.

    ``thresholds`` are map values; a pixel is called positive when its value
    is >= the threshold (``high``) or <= it (``low``).  The first point is
    the empty detection at threshold +/-inf.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    polarity: str = "high"

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["threshold", "fpr", "tpr"])
            for t, x, y in zip(self.thresholds, self.fpr, self.tpr):
                writer.writerow([repr(float(t)), repr(float(x)), repr(float(y))])

    def summary(self) -> dict:
        return {"auc": float(self.auc), "polarity": self.polarity, "points": int(len(self.fpr))}

    def write_json(self, path):
        with open(path, "w") as f:
            json.dump(self.summary(), f, indent=2)
            f.write("\n")


def roc(smap: ScalarMap, truth: ScalarMap, polarity: str) -> RocCurve:
    """ROC over all distinct map values; pixels undefined in ``smap`` are ignored.

    Equal values form a single operating point.
    """
    polarity = _polarity(polarity)
    if smap.shape != truth.shape:
        raise PreconditionError(f"map shape {smap.shape} != truth shape {truth.shape}")
    keep = smap.valid & truth.valid
    values = smap.values[keep]
    positive = truth.values[keep] > 0.5
    n_pos = int(positive.sum())
    n_neg = int(positive.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise PreconditionError("truth needs at least one positive and one negative pixel")

    score = values if polarity == "high" else -values
    order = np.argsort(-score, kind="stable")
    score = score[order]
    positive = positive[order]
    tp = np.cumsum(positive)
    fp = np.cumsum(~positive)
    # last index of each run of equal scores
    last = np.r_[np.nonzero(np.diff(score))[0], score.size - 1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    thresholds = np.r_[np.inf, score[last]]
    if polarity == "low":
        thresholds = -thresholds
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, fpr, tpr, auc, polarity)


def pearson(a: ScalarMap, b: ScalarMap) -> float:
    """Pearson correlation over pixels valid in both maps."""
    if a.shape != b.shape:
        raise PreconditionError(f"map shapes differ: {a.shape} vs {b.shape}")
    keep = a.valid & b.valid
    x = a.values[keep]
    y = b.values[keep]
    if x.size < 2:
        raise PreconditionError("fewer than two jointly valid pixels")
    x = x - x.mean()
    y = y - y.mean()
    sxx = float(np.dot(x, x))
    syy = float(np.dot(y, y))
    if sxx == 0.0 or syy == 0.0:
        raise PreconditionError("pearson correlation undefined for a zero-variance map")
    r = float(np.dot(x, y)) / np.sqrt(sxx * syy)
    return float(max(-1.0, min(1.0, r)))


def reactiv(stack: SpeckleStack, cv_sat: float = 1.0, hue_span: float = 300.0,
            value_percentile: float = 99.0) -> np.ndarray:
    """REACTIV change composite as an (H, W, 3) float RGB image in [0, 1].

    Hue is the time of the maximum (frame 0 at 0 degrees, the last frame at
    ``hue_span`` degrees), saturation the temporal CV divided by ``cv_sat``,
    value the temporal maximum divided by its ``value_percentile`` over the
    image.  Stable pixels come out grey or white.
    """
    if stack.kind != "real" or stack.n_chan != 1:
        raise PreconditionError("REACTIV needs a real single-channel stack")
    if stack.n_time < 2:
        raise PreconditionError("REACTIV needs at least 2 time steps")
    if not 0 < hue_span < 360:
        raise PreconditionError("hue_span must be in (0, 360)")
    x = stack.data[:, 0].astype(np.float64)
    n = x.shape[0]
    tmax = np.argmax(x, axis=0)
    peak = np.max(x, axis=0)
    mean = x.sum(axis=0) / n
    var = ((x - mean) ** 2).sum(axis=0) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(mean > 0, np.sqrt(var) / np.abs(mean), 0.0)
    ref = float(np.percentile(peak, value_percentile))
    value = np.clip(peak / ref, 0.0, 1.0) if ref > 0 else np.zeros_like(peak)
    hsv = np.stack(
        [
            tmax / (n - 1) * (hue_span / 360.0),
            np.clip(cv / cv_sat, 0.0, 1.0),
            value,
        ],
        axis=-1,
    )
    return hsv_to_rgb(hsv)


def stretch_to_u8(smap: ScalarMap, stretch: str = "minmax") -> np.ndarray:
    """Linear 8-bit stretch of the valid pixels; undefined pixels become 0."""
    if stretch not in STRETCHES:
        raise PreconditionError(f"unknown stretch {stretch!r}")
    vals = smap.values[smap.valid]
    if vals.size == 0:
        raise PreconditionError("map has no valid pixel to render")
    if stretch == "minmax":
        lo, hi = float(vals.min()), float(vals.max())
    else:
        lo, hi = (float(v) for v in np.percentile(vals, [2.0, 98.0]))
    if hi <= lo:
        out = np.full(smap.shape, 128, dtype=np.uint8)
    else:
        scaled = (smap.values - lo) / (hi - lo)
        out = np.floor(np.clip(scaled, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    out[~smap.valid] = 0
    return out


def render_png(smap: ScalarMap, path, stretch: str = "minmax"):
    Image.fromarray(stretch_to_u8(smap, stretch)).save(path, format="PNG")


def rgb_to_u8(rgb: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(rgb, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def render_rgb_png(rgb: np.ndarray, path):
    Image.fromarray(rgb_to_u8(rgb)).save(path, format="PNG")
