"""In-memory image stacks and maps, plus the raw + JSON sidecar file format.

A stack is a 4-D array ``[time, channel, y, x]`` of real or complex
samples.  On disk it is a JSON header next to a headerless raw file of
little-endian float32 samples (complex samples interleaved as re, im).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_TAG = "specklestack/1"
DISK_DTYPE = np.dtype("<f4")


class StackFormatError(ValueError):
    """Malformed header, size mismatch, or non-finite samples."""


class PreconditionError(ValueError):
    """Input is well formed but violates an operation's precondition."""


@dataclass(frozen=True, eq=False)
class SpeckleStack:
    data: np.ndarray
    channel_names: tuple[str, ...] = ()

    def __post_init__(self):
        data = np.asarray(self.data).view()
        if data.ndim != 4:
            raise StackFormatError(f"stack must be 4-D [t, c, y, x], got shape {data.shape}")
        if data.shape[1] < 1 or data.shape[0] < 1:
            raise StackFormatError(f"empty stack of shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating) and not np.issubdtype(data.dtype, np.complexfloating):
            data = data.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise StackFormatError("stack contains NaN or Inf samples")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        names = tuple(self.channel_names) or tuple(f"c{i}" for i in range(data.shape[1]))
        if len(names) != data.shape[1]:
            raise StackFormatError(
                f"{len(names)} channel names for {data.shape[1]} channels"
            )
        object.__setattr__(self, "channel_names", names)

    @property
    def kind(self) -> str:
        return "complex" if np.iscomplexobj(self.data) else "real"

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def n_time(self) -> int:
        return self.data.shape[0]

    @property
    def n_chan(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]


@dataclass(eq=False)
class ScalarMap:
    """A named H x W float field.

    ``valid`` marks pixels where the estimate is defined; invalid pixels hold
    ``UNDEFINED``.  ``saturated`` is set only for clamped VMAI values.
    """

    values: np.ndarray
    name: str = ""
    valid: np.ndarray | None = None
    saturated: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise StackFormatError(f"map must be 2-D, got shape {self.values.shape}")
        if self.valid is None:
            self.valid = np.ones(self.values.shape, dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.saturated is not None:
            self.saturated = np.asarray(self.saturated, dtype=bool)
        for extra in (self.valid, self.saturated):
            if extra is not None and extra.shape != self.values.shape:
                raise StackFormatError("mask shape does not match map shape")
        if not np.all(np.isfinite(self.values)):
            raise StackFormatError("map contains NaN or Inf values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


# Sentinel stored at undefined pixels (all estimators are nonnegative).
UNDEFINED = -1.0


@dataclass
class PixelStats:
    mu: np.ndarray
    cov: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.mu.shape[-1]


def sample_index(shape, t: int, c: int, y: int, x: int) -> int:
    """Flat sample position of ``(t, c, y, x)`` in the on-disk order."""
    _, n_chan, height, width = shape
    return ((t * n_chan + c) * height + y) * width + x


def _paths(path) -> tuple[Path, Path]:
    """Header and raw paths for a basename or a ``.json`` header path."""
    path = Path(path)
    if path.suffix == ".json":
        base = path.with_suffix("")
    else:
        base = path
    return base.with_name(base.name + ".json"), base.with_name(base.name + ".raw")


def write_stack(stack: SpeckleStack, path) -> Path:
    """Write ``stack`` as ``<base>.json`` + ``<base>.raw``; returns the header path.

    Samples are stored as float32, so float64 stacks are rounded on write.
    """
    header_path, raw_path = _paths(path)
    data = stack.data
    if stack.kind == "complex":
        out = np.empty(data.shape + (2,), dtype=DISK_DTYPE)
        out[..., 0] = data.real
        out[..., 1] = data.imag
    else:
        out = data.astype(DISK_DTYPE)
    header = {
        "format": FORMAT_TAG,
        "kind": stack.kind,
        "shape": [int(n) for n in data.shape],
        "order": "tcyx",
        "dtype": "f32le",
        "channels": list(stack.channel_names),
        "data": raw_path.name,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    with open(raw_path, "wb") as f:
        f.write(np.ascontiguousarray(out).tobytes())
    with open(header_path, "w") as f:
        json.dump(header, f, indent=2)
        f.write("\n")
    return header_path


def _read_header(header_path: Path) -> dict:
    try:
        with open(header_path) as f:
            header = json.load(f)
    except json.JSONDecodeError as e:
        raise StackFormatError(f"{header_path}: invalid JSON ({e})") from e
    if not isinstance(header, dict):
        raise StackFormatError(f"{header_path}: header must be a JSON object")
    for key in ("kind", "shape", "data"):
        if key not in header:
            raise StackFormatError(f"{header_path}: missing header field {key!r}")
    if header.get("format", FORMAT_TAG) != FORMAT_TAG:
        raise StackFormatError(f"{header_path}: unsupported format {header['format']!r}")
    if header.get("order", "tcyx") != "tcyx":
        raise StackFormatError(f"{header_path}: unsupported sample order {header['order']!r}")
    if header.get("dtype", "f32le") != "f32le":
        raise StackFormatError(f"{header_path}: unsupported dtype {header['dtype']!r}")
    if header["kind"] not in ("real", "complex"):
        raise StackFormatError(f"{header_path}: kind must be 'real' or 'complex'")
    shape = header["shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 4
        or not all(isinstance(n, int) and n >= 1 for n in shape)
    ):
        raise StackFormatError(f"{header_path}: shape must be four positive integers")
    return header


def read_stack(header_path) -> SpeckleStack:
    header_path, _ = _paths(header_path)
    header = _read_header(header_path)
    raw_path = header_path.parent / header["data"]
    if not raw_path.exists():
        raise StackFormatError(f"{header_path}: data file {raw_path} not found")
    shape = tuple(header["shape"])
    slots = int(np.prod(shape)) * (2 if header["kind"] == "complex" else 1)
    expected = slots * DISK_DTYPE.itemsize
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise StackFormatError(
            f"{raw_path}: {actual} bytes on disk, header declares {expected}"
        )
    raw = np.fromfile(raw_path, dtype=DISK_DTYPE)
    if not np.all(np.isfinite(raw)):
        raise StackFormatError(f"{raw_path}: non-finite sample")
    if header["kind"] == "complex":
        pairs = raw.reshape(shape + (2,))
        data = np.empty(shape, dtype=np.complex64)
        data.real = pairs[..., 0]
        data.imag = pairs[..., 1]
    else:
        data = raw.reshape(shape).astype(np.float32)
    channels = header.get("channels") or ()
    return SpeckleStack(data, tuple(channels))


def slice_channel(stack: SpeckleStack, chan: int) -> SpeckleStack:
    if not 0 <= chan < stack.n_chan:
        raise IndexError(f"channel {chan} out of range for {stack.n_chan}-channel stack")
    return SpeckleStack(
        stack.data[:, chan : chan + 1].copy(), (stack.channel_names[chan],)
    )


def stack_channels(stacks) -> SpeckleStack:
    """Concatenate stacks along the channel axis."""
    stacks = list(stacks)
    data = np.concatenate([s.data for s in stacks], axis=1)
    names = sum((s.channel_names for s in stacks), ())
    return SpeckleStack(data, names)


def _mask_paths(path) -> tuple[Path, Path]:
    header_path, _ = _paths(path)
    base = header_path.with_suffix("")
    return base.with_name(base.name + ".valid"), base.with_name(base.name + ".saturated")


def write_map(smap: ScalarMap, path) -> Path:
    """Persist a map as a 1x1xHxW real stack, with 0/1 mask sidecars.

    The validity mask is always written as ``<base>.valid``; a saturation
    mask, when present, as ``<base>.saturated``.
    """
    name = smap.name or "map"
    header = write_stack(SpeckleStack(smap.values[None, None], (name,)), path)
    valid_path, sat_path = _mask_paths(path)
    write_stack(SpeckleStack(smap.valid.astype(np.float32)[None, None], ("valid",)), valid_path)
    if smap.saturated is not None:
        write_stack(
            SpeckleStack(smap.saturated.astype(np.float32)[None, None], ("saturated",)),
            sat_path,
        )
    return header


def read_map(path) -> ScalarMap:
    stack = read_stack(path)
    if stack.kind != "real" or stack.n_time != 1 or stack.n_chan != 1:
        raise StackFormatError(f"{path}: a map must be a real [1, 1, H, W] stack")
    values = stack.data[0, 0].astype(np.float64)
    valid_path, sat_path = _mask_paths(path)
    valid = saturated = None
    if valid_path.with_name(valid_path.name + ".json").exists():
        valid = read_stack(valid_path).data[0, 0] > 0.5
    if sat_path.with_name(sat_path.name + ".json").exists():
        saturated = read_stack(sat_path).data[0, 0] > 0.5
    return ScalarMap(values, stack.channel_names[0], valid, saturated)
