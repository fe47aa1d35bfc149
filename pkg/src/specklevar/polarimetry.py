"""Complex dual-pol fields to real stacks, and degree of polarization.

Stokes convention for a field pair (E1 co-pol, E2 cross-pol)::

    s0 = |E1|^2 + |E2|^2
    s1 = |E1|^2 - |E2|^2
    s2 =  2 Re(E1 conj(E2))
    s3 = -2 Im(E1 conj(E2))

so that E = (1, i) maps to (2, 0, 0, 2).
"""

import numpy as np

from .stack import UNDEFINED, PreconditionError, ScalarMap, SpeckleStack

DOP_FLOOR = 1e-3
STOKES_NAMES = ("S0", "S1", "S2", "S3")


def _require_complex(stack: SpeckleStack):
    if stack.kind != "complex":
        raise PreconditionError("expected a complex field stack")


def amplitudes(stack: SpeckleStack) -> SpeckleStack:
    """Per-sample modulus of a complex stack."""
    _require_complex(stack)
    return SpeckleStack(np.abs(stack.data.astype(np.complex128)), stack.channel_names)


def intensities(stack: SpeckleStack) -> SpeckleStack:
    """Per-sample squared modulus of a complex stack."""
    _require_complex(stack)
    z = stack.data.astype(np.complex128)
    return SpeckleStack(z.real * z.real + z.imag * z.imag, stack.channel_names)


def to_stokes(stack: SpeckleStack) -> SpeckleStack:
    """Dual-pol complex stack [N, 2, H, W] -> real Stokes stack [N, 4, H, W]."""
    _require_complex(stack)
    if stack.n_chan != 2:
        raise PreconditionError(
            f"Stokes conversion needs exactly 2 complex channels, got {stack.n_chan}"
        )
    e1 = stack.data[:, 0].astype(np.complex128)
    e2 = stack.data[:, 1].astype(np.complex128)
    i1 = e1.real * e1.real + e1.imag * e1.imag
    i2 = e2.real * e2.real + e2.imag * e2.imag
    cross = e1 * np.conj(e2)
    out = np.stack([i1 + i2, i1 - i2, 2.0 * cross.real, -2.0 * cross.imag], axis=1)
    return SpeckleStack(out, STOKES_NAMES)


def temporal_dop(stokes: SpeckleStack, floor: float | None = None) -> ScalarMap:
    """Degree of polarization of the time-averaged Stokes vector per pixel.

    Pixels whose mean s0 is at or below ``floor`` (default ``1e-12`` times
    the peak mean s0) are undefined.
    """
    if stokes.kind != "real" or stokes.n_chan != 4:
        raise PreconditionError("temporal DOP needs a real 4-channel Stokes stack")
    if stokes.n_time < 2:
        raise PreconditionError("temporal DOP needs at least 2 time steps")
    mean = stokes.data.astype(np.float64).sum(axis=0) / stokes.n_time
    s0, s1, s2, s3 = mean
    if floor is None:
        floor = 1e-12 * float(np.max(np.abs(s0)))
    valid = s0 > floor
    pol = np.sqrt(s1 * s1 + s2 * s2 + s3 * s3)
    dop = pol / np.where(valid, s0, 1.0)
    return ScalarMap(np.where(valid, dop, UNDEFINED), "dop", valid)


def inverse_dop(dop: ScalarMap, floor: float = DOP_FLOOR) -> ScalarMap:
    """Depolarization image 1/max(DOP, floor); undefined pixels propagate."""
    inv = 1.0 / np.maximum(dop.values, floor)
    return ScalarMap(np.where(dop.valid, inv, UNDEFINED), "inverse_dop", dop.valid.copy())
