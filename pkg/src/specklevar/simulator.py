"""Synthetic polarimetric speckle time series with known ground truth.

Each pixel/channel field is a first-order autoregressive circular complex
Gaussian process::

    E[t+1] = rho * E[t] + sqrt(1 - rho**2) * w[t],   rho = exp(-1 / tau)

started from its stationary distribution.  Channels are mixed with a square
root of the channel correlation matrix and scaled by sqrt(channel power).
Permanent-scatterer pixels carry a constant strong field; change pixels have
their power multiplied by ``change_gain`` from ``change_frame`` onwards.

Random numbers come from a counter-based generator (Philox) keyed by the
seed and the image row; draws within a row follow a fixed (t, c, x) order,
so the output is identical for any number of worker threads.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .stack import PreconditionError, ScalarMap, SpeckleStack

PS_AMPLITUDE_FACTOR = 10.0


@dataclass
class Region:
    """Rectangular override ``[y0, y1) x [x0, x1)`` of the scene parameters."""

    rect: tuple[int, int, int, int]
    tau: float | None = None
    channel_power: list | None = None
    channel_corr: list | None = None


@dataclass
class Scenario:
    shape: tuple[int, int, int, int]
    tau: float = 1.0
    channel_power: list | None = None
    channel_corr: list | None = None
    regions: list = field(default_factory=list)
    ps_pixels: list = field(default_factory=list)
    change_pixels: list = field(default_factory=list)
    change_frame: int = 0
    change_gain: float = 1.0
    seed: int = 0
    channel_names: list | None = None
    clip_amplitude: float | None = None

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        if len(self.shape) != 4 or min(self.shape) < 1:
            raise PreconditionError(f"shape must be four positive integers, got {self.shape}")
        p = self.shape[1]
        if self.channel_power is None:
            self.channel_power = [1.0] * p
        if self.channel_corr is None:
            self.channel_corr = np.eye(p).tolist()
        self.regions = [r if isinstance(r, Region) else Region(**r) for r in self.regions]
        self.ps_pixels = [tuple(int(v) for v in px) for px in self.ps_pixels]
        self.change_pixels = [tuple(int(v) for v in px) for px in self.change_pixels]
        self.validate()

    @property
    def n_time(self):
        return self.shape[0]

    @property
    def n_chan(self):
        return self.shape[1]

    def validate(self):
        n, p, h, w = self.shape
        _check_params(self.tau, self.channel_power, self.channel_corr, p)
        for r in self.regions:
            y0, y1, x0, x1 = r.rect
            if not (0 <= y0 < y1 <= h and 0 <= x0 < x1 <= w):
                raise PreconditionError(f"region {r.rect} outside {h}x{w} image")
            _check_params(
                self.tau if r.tau is None else r.tau,
                self.channel_power if r.channel_power is None else r.channel_power,
                self.channel_corr if r.channel_corr is None else r.channel_corr,
                p,
            )
        for y, x in self.ps_pixels + self.change_pixels:
            if not (0 <= y < h and 0 <= x < w):
                raise PreconditionError(f"mask pixel ({y}, {x}) outside {h}x{w} image")
        if set(self.ps_pixels) & set(self.change_pixels):
            raise PreconditionError("permanent-scatterer and change masks overlap")
        if self.change_pixels and not 0 <= self.change_frame < n:
            raise PreconditionError(f"change_frame {self.change_frame} not in [0, {n})")
        if self.change_gain <= 0:
            raise PreconditionError("change_gain must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise PreconditionError("seed must be an unsigned 64-bit integer")
        if self.channel_names is not None and len(self.channel_names) != p:
            raise PreconditionError("channel_names length must equal channel count")

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "tau": self.tau,
            "channel_power": list(self.channel_power),
            "channel_corr": [list(row) for row in self.channel_corr],
            "regions": [
                {
                    "rect": list(r.rect),
                    "tau": r.tau,
                    "channel_power": r.channel_power,
                    "channel_corr": r.channel_corr,
                }
                for r in self.regions
            ],
            "ps_pixels": [list(px) for px in self.ps_pixels],
            "change_pixels": [list(px) for px in self.change_pixels],
            "change_frame": self.change_frame,
            "change_gain": self.change_gain,
            "seed": int(self.seed),
            "channel_names": self.channel_names,
            "clip_amplitude": self.clip_amplitude,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        for key in ("ps_mask", "change_mask"):
            # dense 0/1 masks are accepted as an alternative to pixel lists
            if key in d:
                mask = np.asarray(d.pop(key))
                d[key.replace("mask", "pixels")] = np.argwhere(mask > 0).tolist()
        try:
            return cls(**d)
        except TypeError as e:
            raise PreconditionError(f"invalid scenario: {e}") from e

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _check_params(tau, power, corr, p):
    if not tau > 0:
        raise PreconditionError(f"tau must be positive, got {tau}")
    power = np.asarray(power, dtype=float)
    if power.shape != (p,) or np.any(power <= 0):
        raise PreconditionError(f"channel_power must be {p} positive values")
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (p, p):
        raise PreconditionError(f"channel_corr must be {p}x{p}")
    if not np.allclose(corr, corr.T, atol=1e-12) or not np.allclose(np.diag(corr), 1.0):
        raise PreconditionError("channel_corr must be symmetric with unit diagonal")
    if np.linalg.eigvalsh(corr)[0] < -1e-10:
        raise PreconditionError("channel_corr must be positive semi-definite")


def _sqrt_psd(corr):
    corr = np.asarray(corr, dtype=float)
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        lam, vec = np.linalg.eigh(corr)
        return vec * np.sqrt(np.maximum(lam, 0.0))


def _param_maps(sc: Scenario):
    """Per-pixel rho (H, W), mixing matrix (H, W, p, p) and power (H, W, p)."""
    n, p, h, w = sc.shape
    tau = np.full((h, w), float(sc.tau))
    power = np.broadcast_to(np.asarray(sc.channel_power, float), (h, w, p)).copy()
    mix = np.broadcast_to(_sqrt_psd(sc.channel_corr), (h, w, p, p)).copy()
    for r in sc.regions:
        y0, y1, x0, x1 = r.rect
        if r.tau is not None:
            tau[y0:y1, x0:x1] = r.tau
        if r.channel_power is not None:
            power[y0:y1, x0:x1] = np.asarray(r.channel_power, float)
        if r.channel_corr is not None:
            mix[y0:y1, x0:x1] = _sqrt_psd(r.channel_corr)
    return np.exp(-1.0 / tau), mix, power


def _row(sc: Scenario, y: int, rho, mix, power, ps_cols, change_cols):
    n, p, h, w = sc.shape
    gen = np.random.Generator(np.random.Philox(key=int(sc.seed) + (y << 64)))
    z = gen.standard_normal((n, p, w, 2))
    white = (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)
    a = rho[y]  # (w,)
    b = np.sqrt(1.0 - a * a)
    field = np.empty((n, p, w), dtype=np.complex128)
    field[0] = white[0]
    for t in range(1, n):
        field[t] = a * field[t - 1] + b * white[t]
    # channel mixing per pixel: out[t, i, x] = sum_j mix[y, x, i, j] * field[t, j, x]
    m = mix[y]
    out = np.zeros_like(field)
    for i in range(p):
        for j in range(p):
            out[:, i] += m[:, i, j] * field[:, j]
    out *= np.sqrt(power[y].T)
    if change_cols:
        out[sc.change_frame :, :, change_cols] *= np.sqrt(sc.change_gain)
    if ps_cols:
        amp = PS_AMPLITUDE_FACTOR * np.sqrt(np.mean(power[y, ps_cols], axis=1))
        out[:, :, ps_cols] = amp[None, None, :]
    if sc.clip_amplitude is not None:
        mag = np.abs(out)
        over = mag > sc.clip_amplitude
        out[over] *= sc.clip_amplitude / mag[over]
    return out.astype(np.complex64)


def simulate(sc: Scenario, threads: int | None = None) -> SpeckleStack:
    """Complex stack [N, p, H, W] for the scenario; deterministic in ``sc.seed``."""
    sc.validate()
    n, p, h, w = sc.shape
    rho, mix, power = _param_maps(sc)
    ps_rows = {}
    for y, x in sc.ps_pixels:
        ps_rows.setdefault(y, []).append(x)
    change_rows = {}
    for y, x in sc.change_pixels:
        change_rows.setdefault(y, []).append(x)

    def job(y):
        return _row(sc, y, rho, mix, power, sorted(ps_rows.get(y, [])),
                    sorted(change_rows.get(y, [])))

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(job, range(h)))
    else:
        rows = [job(y) for y in range(h)]
    data = np.stack(rows, axis=2)
    names = tuple(sc.channel_names) if sc.channel_names else _default_names(p)
    return SpeckleStack(data, names)


def _default_names(p):
    if p == 2:
        return ("co", "cross")
    return tuple(f"c{i}" for i in range(p))


def ground_truth(sc: Scenario) -> tuple[ScalarMap, ScalarMap]:
    """Binary (change, permanent scatterer) maps of the scenario."""
    _, _, h, w = sc.shape
    change = np.zeros((h, w))
    ps = np.zeros((h, w))
    for y, x in sc.change_pixels:
        change[y, x] = 1.0
    for y, x in sc.ps_pixels:
        ps[y, x] = 1.0
    return ScalarMap(change, "change_truth"), ScalarMap(ps, "ps_truth")
