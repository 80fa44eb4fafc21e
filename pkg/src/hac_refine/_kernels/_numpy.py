"""Pure-numpy builds of the hot kernels.

Each function mirrors its numba twin in _numba.py op for op: the same
float64 accumulation order, the same boundary index math, the same
candidate formulas. The two backends therefore produce identical arrays
(checked by tests), so switching backends never changes results.

All kernels take the scan axis as the LAST axis of a 2-D (lines, n) view;
the dispatch layer handles axis moves.
"""

import numpy as np

from ._shared import CUBIC_POLE, SPLINE_INIT_HORIZON


def reflect_indices(idx, n):
    """Half-sample symmetric fold of integer indices into [0, n)."""
    if n == 1:
        return np.zeros_like(idx)
    m = np.mod(idx, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)


def conv_lines(data, w):
    """Correlate each row of ``data`` (L, n) with ``w``, reflect boundary."""
    lines, n = data.shape
    taps = w.shape[0]
    radius = taps // 2
    out = np.zeros_like(data)
    base = np.arange(n, dtype=np.int64)
    for t in range(taps):
        idx = reflect_indices(base + (t - radius), n)
        out += w[t] * data[:, idx]
    return out


def spline_filter_lines(data):
    """Cubic B-spline prefilter of each row, whole-sample mirror boundary."""
    lines, n = data.shape
    if n == 1:
        return data.copy()
    z = CUBIC_POLE
    cp = np.empty_like(data)

    period = 2 * n - 2
    horizon = min(period, SPLINE_INIT_HORIZON)
    acc = np.zeros(lines, dtype=np.float64)
    zk = 1.0
    for k in range(horizon):
        src = k if k < n else period - k
        acc = acc + zk * data[:, src]
        zk *= z
    if horizon == period:
        acc = acc / (1.0 - zk)
    cp[:, 0] = acc

    for k in range(1, n):
        cp[:, k] = data[:, k] + z * cp[:, k - 1]

    cm = np.empty_like(data)
    cm[:, n - 1] = (z / (z * z - 1.0)) * (cp[:, n - 1] + z * cp[:, n - 2])
    for k in range(n - 2, -1, -1):
        cm[:, k] = z * (cm[:, k + 1] - cp[:, k])
    return 6.0 * cm


def edt_pass_lines(f, s2):
    """One squared-EDT lower-envelope pass along rows of ``f`` (L, n).

    Computes out[i] = min_j f[j] + s2*(i-j)^2 per row. O(n^2) per row but
    fully vectorized in chunks; exact, same candidate values as the
    numba lower-envelope scan.
    """
    lines, n = f.shape
    if n == 1:
        return f.copy()
    d = np.arange(n, dtype=np.int64)
    diff = d[:, None] - d[None, :]
    d2 = s2 * (diff * diff).astype(np.float64)
    out = np.empty_like(f)
    chunk = max(1, (1 << 22) // (n * n))
    for lo in range(0, lines, chunk):
        hi = min(lines, lo + chunk)
        cand = f[lo:hi, None, :] + d2[None, :, :]
        out[lo:hi] = cand.min(axis=2)
    return out
