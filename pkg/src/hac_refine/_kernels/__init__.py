"""Axis-generic entry points over the backend kernel twins.

Callers pass 3-D float64 arrays; this layer moves the target axis last,
flattens the other two into lines, runs the selected backend kernel, and
restores the layout. Results are identical for both backends.
"""

import numpy as np

from .. import backend
from ._shared import LARGE_DIST


def _module():
    if backend.active_backend() == "numba":
        from . import _numba as mod
    else:
        from . import _numpy as mod
    return mod


def _to_lines(data, axis):
    moved = np.moveaxis(data, axis, -1)
    shape = moved.shape
    lines = np.ascontiguousarray(moved).reshape(-1, shape[-1])
    return lines, shape


def _from_lines(lines, shape, axis):
    return np.moveaxis(lines.reshape(shape), -1, axis)


def conv_axis(data, weights, axis):
    """Correlate ``data`` with ``weights`` along ``axis``, reflect boundary."""
    lines, shape = _to_lines(np.asarray(data, dtype=np.float64), axis)
    out = _module().conv_lines(lines, np.asarray(weights, dtype=np.float64))
    return np.ascontiguousarray(_from_lines(out, shape, axis))


def spline_filter_axis(data, axis):
    """Cubic B-spline prefilter along ``axis`` (whole-sample mirror)."""
    lines, shape = _to_lines(np.asarray(data, dtype=np.float64), axis)
    out = _module().spline_filter_lines(lines)
    return np.ascontiguousarray(_from_lines(out, shape, axis))


def edt_squared(feature, spacing):
    """Exact squared Euclidean distance (mm^2) to the feature voxel centers.

    ``feature`` is a 3-D boolean array with at least one True voxel;
    squared distances propagate one axis at a time so anisotropic spacing
    is honored exactly.
    """
    f = np.where(feature, 0.0, LARGE_DIST)
    mod = _module()
    for axis in (2, 1, 0):
        s2 = float(spacing[axis]) ** 2
        lines, shape = _to_lines(f, axis)
        f = _from_lines(mod.edt_pass_lines(lines, s2), shape, axis)
    return np.ascontiguousarray(f)
