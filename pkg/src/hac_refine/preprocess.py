"""World-space cropping, isotropic resampling and z-score normalization.

Resampling keeps the world origin fixed (voxel centers realign, no
half-voxel shift) and rounds the output shape half-up. Image resampling
is cubic B-spline with an exact prefilter (two-pass recursion, pole
sqrt(3)-2, whole-sample mirror boundary); masks use nearest-neighbor
lookup so label values pass through untouched.
"""

import numpy as np

from . import _kernels
from .errors import BadSpacingError, NoOverlapError
from .grid import GridMeta, Indicator, Volume3, crop_voxel
from .nifti import BBoxMM

_EDGE_EPS = 1e-9  # absorbs float fuzz when snapping world boxes to voxel cells


def crop_world(v, box: BBoxMM):
    """Crop to the smallest voxel-aligned box covering ``box`` ∩ extent.

    Voxel (i, j, k) is treated as the half-open mm cell
    [origin + i*s, origin + (i+1)*s) per axis, so the volume extent is
    [origin, origin + shape*s).
    """
    lo_vox, hi_vox = [], []
    for a in range(3):
        o, s, n = v.meta.origin[a], v.meta.spacing[a], v.meta.shape[a]
        lo_mm = max(box.lo[a], o)
        hi_mm = min(box.hi[a], o + n * s)
        if lo_mm >= hi_mm:
            raise NoOverlapError(f"box {box.lo}-{box.hi} misses the volume extent on axis {a}")
        lo_vox.append(max(0, int(np.floor((lo_mm - o) / s + _EDGE_EPS))))
        hi_vox.append(min(n, int(np.ceil((hi_mm - o) / s - _EDGE_EPS))))
    return crop_voxel(v, lo_vox, hi_vox)


def _bspline_weights(frac):
    """Cubic B-spline tap weights at offsets -1, 0, +1, +2 for 0 <= frac < 1."""
    f = frac
    w = np.empty(f.shape + (4,), dtype=np.float64)
    w[..., 0] = (1.0 - f) ** 3 / 6.0
    w[..., 1] = (4.0 - 6.0 * f * f + 3.0 * f**3) / 6.0
    g = 1.0 - f
    w[..., 2] = (4.0 - 6.0 * g * g + 3.0 * g**3) / 6.0
    w[..., 3] = f**3 / 6.0
    return w


def _mirror_idx(idx, n):
    """Whole-sample mirror fold into [0, n), period 2n-2."""
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    m = np.mod(idx, period)
    return np.where(m >= n, period - m, m)


def _sample_spline_axis(coef, coords, axis):
    """Gather cubic-spline values at fractional ``coords`` along ``axis``."""
    n = coef.shape[axis]
    base = np.floor(coords).astype(np.int64)
    frac = coords - base
    w = _bspline_weights(frac)
    moved = np.moveaxis(coef, axis, 0)
    out = np.zeros((coords.size,) + moved.shape[1:], dtype=np.float64)
    for d in range(4):
        idx = _mirror_idx(base + (d - 1), n)
        shape = (coords.size,) + (1,) * (moved.ndim - 1)
        out += w[:, d].reshape(shape) * moved[idx]
    return np.moveaxis(out, 0, axis)


def _sample_nearest_axis(data, coords, axis):
    idx = np.clip(np.floor(coords + 0.5).astype(np.int64), 0, data.shape[axis] - 1)
    return np.take(data, idx, axis=axis)


def _output_geometry(meta, target_spacing):
    target = np.asarray(target_spacing, dtype=np.float64).reshape(-1)
    if target.size == 1:
        target = np.repeat(target, 3)
    if target.size != 3 or np.any(~np.isfinite(target)) or np.any(target <= 0):
        raise BadSpacingError(f"target spacing must be positive finite, got {target_spacing!r}")
    shape = []
    for a in range(3):
        n = int(np.floor(meta.shape[a] * meta.spacing[a] / target[a] + 0.5))
        shape.append(max(1, n))
    return tuple(shape), tuple(float(t) for t in target)


def resample(v, target_spacing, order="spline3"):
    """Resample onto an axis-aligned grid with the given mm spacing.

    ``order`` is "spline3" (images) or "nearest" (labels). Nearest
    preserves the container type and the input value set; spline3 returns
    a plain Volume3 (smooth interpolation can overshoot, callers clamp
    probabilities themselves).
    """
    if order not in ("spline3", "nearest"):
        raise ValueError(f"order must be 'spline3' or 'nearest', got {order!r}")
    out_shape, target = _output_geometry(v.meta, target_spacing)
    new_meta = GridMeta(out_shape, target, v.meta.origin)

    coords = [
        np.arange(out_shape[a], dtype=np.float64) * (target[a] / v.meta.spacing[a])
        for a in range(3)
    ]

    if order == "nearest":
        data = v.data
        for a in range(3):
            data = _sample_nearest_axis(data, coords[a], a)
        return type(v)(new_meta, data)

    if isinstance(v, Indicator):
        raise ValueError("spline3 on a binary mask; use order='nearest'")
    coef = v.data
    for a in range(3):
        coef = _kernels.spline_filter_axis(coef, a)
    for a in range(3):
        coef = _sample_spline_axis(coef, coords[a], a)
    return Volume3(new_meta, coef)


def zscore(v: Volume3) -> Volume3:
    """Center to zero mean, scale to unit standard deviation (population N).

    Near-constant volumes (std < 1e-8) come back all zero.
    """
    mean = float(v.data.mean(dtype=np.float64))
    std = float(v.data.std(dtype=np.float64))
    if std < 1e-8:
        return Volume3(v.meta, np.zeros(v.meta.shape))
    return Volume3(v.meta, (v.data - mean) / std)
