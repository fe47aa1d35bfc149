"""Per-pixel sample statistics and coefficient-of-variation estimators.

Four multivariate generalisations of sigma/mu are provided, all built from
the temporal (or spatial) mean vector ``mu`` and covariance ``C`` of a
p-channel real signal::

    R   sqrt(det(C)**(1/p) / mu.mu)
    VV  sqrt(trace(C) / mu.mu)
    VN  sqrt(1 / (mu . C^-1 . mu))
    AZ  sqrt(mu . C . mu) / (mu.mu)

plus the single-channel ratio ``sqrt(C[c, c]) / |mu[c]|``.  Every estimator
reduces to sigma/|mu| when p == 1.

The batch functions work on arrays of shape ``(..., p)`` / ``(..., p, p)``
and evaluate each pixel independently with a fixed operation order, so a
result never depends on how the pixels were batched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stack import UNDEFINED, PixelStats

GAMMA_FLOOR = 1e-6
MU_FLOOR_REL = 1e-12
VN_RIDGE = 1e-9
PSD_TOL = 1e-10


class UndefinedEstimate(ArithmeticError):
    """The estimator is undefined for this pixel (zero mean)."""


@dataclass(frozen=True)
class McvKind:
    """Estimator selector: ``"r"``, ``"vv"``, ``"vn"``, ``"az"`` or ``"single"``."""

    estimator: str
    channel: int | None = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.estimator == "single":
            if self.channel is None or self.channel < 0:
                raise ValueError("single-channel estimator needs a channel index >= 0")
        elif self.channel is not None:
            raise ValueError(f"estimator {self.estimator!r} takes no channel")

    @classmethod
    def single(cls, channel: int) -> "McvKind":
        return cls("single", channel)

    @classmethod
    def parse(cls, text: str) -> "McvKind":
        """Parse ``"az"`` or ``"single:1"``."""
        name, _, chan = text.strip().lower().partition(":")
        return cls(name, int(chan) if chan else (0 if name == "single" else None))

    def __str__(self):
        if self.estimator == "single":
            return f"single:{self.channel}"
        return self.estimator


ESTIMATORS = ("r", "vv", "vn", "az", "single")

R = McvKind("r")
VV = McvKind("vv")
VN = McvKind("vn")
AZ = McvKind("az")
MULTIVARIATE = (R, VV, VN, AZ)


@dataclass(frozen=True)
class VmaiValue:
    value: float
    saturated: bool


def pixel_stats(samples, unbiased: bool = False) -> PixelStats:
    """Mean vector and covariance of an ``N x p`` sample matrix.

    The covariance uses the 1/N (maximum-likelihood) normalisation unless
    ``unbiased`` is set.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if x.ndim != 2 or n < 2:
        raise ValueError(f"need an N x p sample matrix with N >= 2, got shape {x.shape}")
    mu = x.mean(axis=0)
    d = x - mu
    cov = d.T @ d / (n - 1 if unbiased else n)
    cov = 0.5 * (cov + cov.T)
    return PixelStats(mu, cov)


def _mu_sq(mu):
    out = mu[..., 0] * mu[..., 0]
    for j in range(1, mu.shape[-1]):
        out = out + mu[..., j] * mu[..., j]
    return out


def _quad(mu, cov):
    """mu . cov . mu with a fixed summation order."""
    p = mu.shape[-1]
    out = np.zeros(mu.shape[:-1])
    for j in range(p):
        row = cov[..., j, 0] * mu[..., 0]
        for k in range(1, p):
            row = row + cov[..., j, k] * mu[..., k]
        out = out + mu[..., j] * row
    return out


def _eigvals_psd(cov):
    lam = np.linalg.eigvalsh(cov)
    return np.maximum(lam, 0.0)


def mcv_batch(mu, cov, kind: McvKind, mu_floor: float = 0.0):
    """Evaluate one estimator for many pixels.

    Returns ``(gamma, valid)``; undefined pixels carry ``UNDEFINED``.
    A pixel is undefined when ``mu.mu <= mu_floor`` (or, for the single
    estimator, when ``mu[c]**2 <= mu_floor``).
    """
    mu = np.asarray(mu, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    p = mu.shape[-1]
    if cov.shape[-2:] != (p, p) or cov.shape[:-2] != mu.shape[:-1]:
        raise ValueError(f"mu shape {mu.shape} does not match cov shape {cov.shape}")
    est = kind.estimator

    if est == "single":
        c = kind.channel
        if c >= p:
            raise IndexError(f"channel {c} out of range for p={p}")
        m2 = mu[..., c] * mu[..., c]
        valid = m2 > mu_floor
        var = np.maximum(cov[..., c, c], 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            gamma = np.sqrt(var) / np.abs(mu[..., c])
        return np.where(valid, gamma, UNDEFINED), valid

    valid = _mu_sq(mu) > mu_floor
    # rescale each pixel by a power of two near max|mu|: exact, and keeps the
    # products below from under- or overflowing
    peak = np.max(np.abs(mu), axis=-1)
    _, expo = np.frexp(np.where(valid, peak, 1.0))
    mu = np.ldexp(mu, -expo[..., None])
    cov = np.ldexp(cov, -2 * expo[..., None, None])
    musq = np.where(valid, _mu_sq(mu), 1.0)

    if est == "vv":
        tr = cov[..., 0, 0]
        for j in range(1, p):
            tr = tr + cov[..., j, j]
        ratio = np.maximum(tr, 0.0) / musq
    elif est == "az":
        ratio = np.maximum(_quad(mu, cov), 0.0) / (musq * musq)
    elif est == "r":
        lam = _eigvals_psd(cov)
        det = lam[..., 0]
        for j in range(1, p):
            det = det * lam[..., j]
        root = det if p == 1 else det ** (1.0 / p)
        ratio = root / musq
    else:  # vn
        ratio = _vn_ratio(mu, cov)
    gamma = np.sqrt(ratio)
    return np.where(valid, gamma, UNDEFINED), valid


def _vn_ratio(mu, cov):
    """1 / (mu . C^-1 . mu), ridge-regularised when C is near singular.

    The ridge ``VN_RIDGE * mean(diag C)`` is added only to matrices whose
    smallest eigenvalue falls below it; well-conditioned pixels get the exact
    inverse.  An all-zero C gives the limiting value 0.
    """
    p = mu.shape[-1]
    lam, vec = np.linalg.eigh(cov)
    lam = np.maximum(lam, 0.0)
    scale = cov[..., 0, 0]
    for j in range(1, p):
        scale = scale + cov[..., j, j]
    ridge = VN_RIDGE * np.maximum(scale, 0.0) / p
    needs_ridge = lam[..., 0] < ridge[...]
    lam = np.where(needs_ridge[..., None], lam + ridge[..., None], lam)
    # projections of mu on the eigenvectors
    z = vec[..., 0, :] * mu[..., 0:1]
    for j in range(1, p):
        z = z + vec[..., j, :] * mu[..., j : j + 1]
    zero_cov = scale <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (z * z) / np.where(lam > 0.0, lam, 1.0)
        terms = np.where(lam > 0.0, terms, np.inf)
        q = terms[..., 0]
        for j in range(1, p):
            q = q + terms[..., j]
        ratio = 1.0 / q
    ratio = np.where(zero_cov, 0.0, ratio)
    # projections exactly zero on a zero eigenvalue give 0/0 above
    return np.where(np.isfinite(ratio), ratio, 0.0)


def mcv(stats: PixelStats, kind: McvKind, mu_floor: float | None = None) -> float:
    """Single-pixel estimator value.

    Raises ``UndefinedEstimate`` for a zero-mean pixel.  By default the mean
    floor is ``1e-12 * max|mu|**2``, so only an exactly zero mean is rejected.
    """
    mu = np.atleast_1d(np.asarray(stats.mu, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(stats.cov, dtype=np.float64))
    if mu_floor is None:
        mu_floor = MU_FLOOR_REL * float(np.max(np.abs(mu))) ** 2
    gamma, valid = mcv_batch(mu[None], cov[None], kind, mu_floor)
    if not valid[0]:
        raise UndefinedEstimate(f"{kind} undefined for zero-mean pixel")
    return float(gamma[0])


def vmai(gamma: float, gamma_floor: float = GAMMA_FLOOR) -> VmaiValue:
    """Activity index 1/gamma**2, clamped at ``1/gamma_floor**2``."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    gamma = float(gamma)
    if gamma < gamma_floor:
        return VmaiValue(1.0 / (gamma_floor * gamma_floor), True)
    return VmaiValue(1.0 / (gamma * gamma), False)


def vmai_batch(gamma, valid=None, gamma_floor: float = GAMMA_FLOOR):
    """Vectorised ``vmai``; returns ``(value, saturated)``.

    Pixels flagged invalid keep ``UNDEFINED`` and are never saturated.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if valid is None:
        valid = gamma >= 0
    saturated = valid & (gamma < gamma_floor)
    g = np.where(saturated, 1.0, gamma)
    value = np.where(saturated, 1.0 / (gamma_floor * gamma_floor), 1.0 / (g * g))
    return np.where(valid, value, UNDEFINED), saturated
