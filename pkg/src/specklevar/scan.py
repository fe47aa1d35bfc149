"""Whole-image estimator maps, temporal or spatial (boxcar) estimation.

Work is split into fixed row chunks which are processed by a thread pool;
every pixel is computed with the same operation sequence whatever the
chunking, so the output does not depend on the number of threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backend
from .mcv import GAMMA_FLOOR, MU_FLOOR_REL, McvKind, mcv_batch, vmai_batch
from .stack import PreconditionError, ScalarMap, SpeckleStack

CHUNK_ROWS = 16


@dataclass(frozen=True)
class EstimationMode:
    """``temporal`` or ``spatial`` with an odd ``window`` (>= 3) on ``frame``."""

    kind: str = "temporal"
    window: int = 5
    frame: int = 0

    def __post_init__(self):
        if self.kind not in ("temporal", "spatial"):
            raise PreconditionError(f"unknown estimation mode {self.kind!r}")
        if self.kind == "spatial":
            if self.window < 3 or self.window % 2 == 0:
                raise PreconditionError(f"window must be odd and >= 3, got {self.window}")
            if self.frame < 0:
                raise PreconditionError(f"frame index must be >= 0, got {self.frame}")

    @classmethod
    def temporal(cls) -> "EstimationMode":
        return cls("temporal")

    @classmethod
    def spatial(cls, window: int = 5, frame: int = 0) -> "EstimationMode":
        return cls("spatial", window, frame)

    def describe(self) -> str:
        if self.kind == "temporal":
            return "temporal"
        return f"spatial(w={self.window}, frame={self.frame})"


def default_threads() -> int:
    env = os.environ.get("SPECKLEVAR_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n > 0:
            return n
    return os.cpu_count() or 1


def _check(stack: SpeckleStack, kinds, mode: EstimationMode):
    if stack.kind != "real":
        raise PreconditionError(
            "estimators need a real stack; convert complex data with amplitudes() or to_stokes()"
        )
    for kind in kinds:
        if kind.estimator == "single" and kind.channel >= stack.n_chan:
            raise PreconditionError(
                f"channel {kind.channel} out of range for {stack.n_chan}-channel stack"
            )
    if mode.kind == "temporal":
        if stack.n_time < 2:
            raise PreconditionError("temporal estimation needs at least 2 time steps")
    else:
        if mode.frame >= stack.n_time:
            raise PreconditionError(f"frame {mode.frame} out of range for {stack.n_time} frames")
        if stack.height < mode.window or stack.width < mode.window:
            raise PreconditionError(
                f"image {stack.height}x{stack.width} smaller than {mode.window}x{mode.window} window"
            )


def mu_floor_for(stack: SpeckleStack) -> float:
    peak = float(np.max(np.abs(stack.data))) if stack.data.size else 0.0
    return MU_FLOOR_REL * peak * peak


def _chunks(height: int):
    return [(r, min(r + CHUNK_ROWS, height)) for r in range(0, height, CHUNK_ROWS)]


def pixel_moments(stack: SpeckleStack, mode: EstimationMode, threads: int | None = None,
                  kernels=None):
    """Per-pixel mean ``(H, W, p)`` and covariance ``(H, W, p, p)`` arrays."""
    _check(stack, (), mode)
    kernels = kernels or backend.get()
    jobs, prepare = _moment_jobs(stack, mode, kernels)
    prepare()
    parts = _run(jobs, threads)
    return np.concatenate([m for m, _ in parts]), np.concatenate([c for _, c in parts])


def _moment_jobs(stack, mode, kernels):
    state = {}
    if mode.kind == "temporal":
        data = stack.data
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        data = np.ascontiguousarray(data)

        def prepare():
            pass

        def job(r0, r1):
            return kernels.temporal_moments(data, r0, r1)
    else:
        frame = np.ascontiguousarray(stack.data[mode.frame], dtype=np.float64)
        # centring by the channel means keeps the summed-area tables small
        shift = np.array([np.mean(frame[j]) for j in range(frame.shape[0])])
        half = mode.window // 2

        def prepare():
            centred = np.ascontiguousarray(frame - shift[:, None, None])
            state["s1"], state["s2"] = kernels.integral_images(centred)

        def job(r0, r1):
            return kernels.window_moments(state["s1"], state["s2"], shift, half, r0, r1)

    return [(job, r0, r1) for r0, r1 in _chunks(stack.height)], prepare


def _run(jobs, threads):
    threads = threads or default_threads()
    if threads <= 1 or len(jobs) == 1:
        return [fn(*args) for fn, *args in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *args) for fn, *args in jobs]
        return [f.result() for f in futures]


def compute_maps(stack: SpeckleStack, kinds, mode: EstimationMode | None = None,
                 threads: int | None = None, kernels=None) -> dict:
    """Maps for several estimators sharing one pass of moment accumulation.

    Returns ``{kind: ScalarMap}``.
    """
    mode = mode or EstimationMode.temporal()
    kinds = list(kinds)
    _check(stack, kinds, mode)
    kernels = kernels or backend.get()
    floor = mu_floor_for(stack)
    moment_jobs, prepare = _moment_jobs(stack, mode, kernels)
    prepare()

    def job(fn, r0, r1):
        mu, cov = fn(r0, r1)
        return [mcv_batch(mu, cov, kind, floor) for kind in kinds]

    parts = _run([(job, fn, r0, r1) for fn, r0, r1 in moment_jobs], threads)
    maps = {}
    for i, kind in enumerate(kinds):
        gamma = np.concatenate([part[i][0] for part in parts])
        valid = np.concatenate([part[i][1] for part in parts])
        maps[kind] = ScalarMap(gamma, f"gamma_{kind}", valid)
    return maps


def compute_map(stack: SpeckleStack, kind: McvKind, mode: EstimationMode | None = None,
                threads: int | None = None, kernels=None) -> ScalarMap:
    return compute_maps(stack, [kind], mode, threads, kernels)[kind]


def vmai_map(gamma: ScalarMap, gamma_floor: float = GAMMA_FLOOR) -> ScalarMap:
    """VMAI (1/gamma**2) of an estimator map, with a saturation mask."""
    value, saturated = vmai_batch(gamma.values, gamma.valid, gamma_floor)
    name = gamma.name.replace("gamma", "vmai", 1) if gamma.name.startswith("gamma") else f"vmai_{gamma.name}"
    return ScalarMap(value, name, gamma.valid.copy(), saturated)


def compute_vmai_map(stack: SpeckleStack, kind: McvKind, mode: EstimationMode | None = None,
                     threads: int | None = None, gamma_floor: float = GAMMA_FLOOR,
                     kernels=None) -> ScalarMap:
    return vmai_map(compute_map(stack, kind, mode, threads, kernels), gamma_floor)
