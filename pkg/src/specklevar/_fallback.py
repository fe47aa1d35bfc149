"""Pure-numpy versions of the moment kernels in ``_kernels.pyx``.

Same signatures and conventions; results agree with the compiled kernels to
rounding (not bit for bit: summation orders differ).
"""

import numpy as np


def temporal_moments(data, row0, row1):
    block = np.asarray(data[:, :, row0:row1], dtype=np.float64)
    n, p = block.shape[:2]
    # (n, p, rows, w) -> sums over the leading axis run in time order per pixel
    mu = block.sum(axis=0) / n
    d = block - mu
    rows, w = block.shape[2:]
    cov = np.empty((rows, w, p, p))
    for j in range(p):
        for k in range(j, p):
            v = (d[:, j] * d[:, k]).sum(axis=0) / n
            cov[..., j, k] = v
            cov[..., k, j] = v
    return np.moveaxis(mu, 0, -1).copy(), cov


def integral_images(frame):
    frame = np.asarray(frame, dtype=np.float64)
    p, h, w = frame.shape
    pairs = [(j, k) for j in range(p) for k in range(j, p)]
    s1 = np.zeros((p, h + 1, w + 1))
    s2 = np.zeros((len(pairs), h + 1, w + 1))
    s1[:, 1:, 1:] = frame.cumsum(axis=2).cumsum(axis=1)
    for q, (j, k) in enumerate(pairs):
        s2[q, 1:, 1:] = (frame[j] * frame[k]).cumsum(axis=1).cumsum(axis=0)
    return s1, s2


def window_moments(s1, s2, shift, half, row0, row1):
    p = s1.shape[0]
    h, w = s1.shape[1] - 1, s1.shape[2] - 1
    y = np.arange(row0, row1)
    x = np.arange(w)
    ya = np.maximum(y - half, 0)[:, None]
    yb = np.minimum(y + half + 1, h)[:, None]
    xa = np.maximum(x - half, 0)[None, :]
    xb = np.minimum(x + half + 1, w)[None, :]
    inv_n = 1.0 / ((yb - ya) * (xb - xa))

    def box(t):
        return ((t[yb, xb] - t[ya, xb]) - (t[yb, xa] - t[ya, xa])) * inv_n

    m = np.stack([box(s1[j]) for j in range(p)], axis=-1)
    cov = np.empty(m.shape + (p,))
    q = 0
    for j in range(p):
        for k in range(j, p):
            v = box(s2[q]) - m[..., j] * m[..., k]
            cov[..., j, k] = v
            cov[..., k, j] = v
            q += 1
    return m + np.asarray(shift), cov
