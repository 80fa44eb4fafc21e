"""numba @njit builds of the hot kernels.

Twins of _numpy.py: identical float64 operation order per output element,
so both backends return bit-equal arrays. Parallelism is one line per
prange iteration with no cross-line reductions, which keeps results
independent of thread count.
"""

import numpy as np
from numba import njit, prange

from ._shared import CUBIC_POLE, SPLINE_INIT_HORIZON


@njit(cache=True, inline="always")
def _reflect(idx, n):
    if n == 1:
        return 0
    m = idx % (2 * n)
    if m < 0:
        m += 2 * n
    if m >= n:
        m = 2 * n - 1 - m
    return m


@njit(cache=True, parallel=True)
def conv_lines(data, w):
    lines, n = data.shape
    taps = w.shape[0]
    radius = taps // 2
    out = np.empty_like(data)
    for li in prange(lines):
        for i in range(n):
            acc = 0.0
            for t in range(taps):
                acc += w[t] * data[li, _reflect(i + t - radius, n)]
            out[li, i] = acc
    return out


@njit(cache=True, parallel=True)
def spline_filter_lines(data):
    lines, n = data.shape
    if n == 1:
        return data.copy()
    z = CUBIC_POLE
    out = np.empty_like(data)
    period = 2 * n - 2
    horizon = min(period, SPLINE_INIT_HORIZON)
    for li in prange(lines):
        cp = np.empty(n, dtype=np.float64)
        cm = np.empty(n, dtype=np.float64)

        acc = 0.0
        zk = 1.0
        for k in range(horizon):
            src = k if k < n else period - k
            acc = acc + zk * data[li, src]
            zk *= z
        if horizon == period:
            acc = acc / (1.0 - zk)
        cp[0] = acc

        for k in range(1, n):
            cp[k] = data[li, k] + z * cp[k - 1]

        cm[n - 1] = (z / (z * z - 1.0)) * (cp[n - 1] + z * cp[n - 2])
        for k in range(n - 2, -1, -1):
            cm[k] = z * (cm[k + 1] - cp[k])
        for k in range(n):
            out[li, k] = 6.0 * cm[k]
    return out


@njit(cache=True, parallel=True)
def edt_pass_lines(f, s2):
    """Felzenszwalb-Huttenlocher lower-envelope pass per row."""
    lines, n = f.shape
    if n == 1:
        return f.copy()
    out = np.empty_like(f)
    for li in prange(lines):
        v = np.empty(n, dtype=np.int64)
        zb = np.empty(n + 1, dtype=np.float64)
        k = 0
        v[0] = 0
        zb[0] = -np.inf
        zb[1] = np.inf
        for q in range(1, n):
            fq = f[li, q] + s2 * (q * q)
            while True:
                vk = v[k]
                s = (fq - (f[li, vk] + s2 * (vk * vk))) / (2.0 * s2 * (q - vk))
                if s <= zb[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            zb[k] = s
            zb[k + 1] = np.inf
        k = 0
        for q in range(n):
            while zb[k + 1] < q:
                k += 1
            dq = q - v[k]
            out[li, q] = f[li, v[k]] + s2 * (dq * dq)
    return out
