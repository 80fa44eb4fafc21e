"""3-D volume and mask data model in world coordinates.

Axis convention (fixed for the whole package): arrays are C-contiguous
with ``data[i, j, k]`` where axis 0 = x, axis 1 = y, axis 2 = z, and the
world-space position of voxel (i, j, k) is ``origin + (i*sx, j*sy, k*sz)``
in millimetres. Scalar payloads are float64 internally; masks are uint8
with values in {0, 1}. All containers are immutable after construction
(read-only numpy buffers), so they are safe to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMaskError, MetaMismatchError, OutOfBoundsError


@dataclass(frozen=True)
class GridMeta:
    """Voxel counts, mm spacing and mm origin of a regular 3-D grid."""

    shape: tuple
    spacing: tuple
    origin: tuple

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(shape) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise ValueError("GridMeta entries must have length 3")
        if any(n < 1 for n in shape):
            raise ValueError(f"shape entries must be >= 1, got {shape}")
        if any(not np.isfinite(s) or s <= 0.0 for s in spacing):
            raise ValueError(f"spacing entries must be positive finite, got {spacing}")
        if any(not np.isfinite(o) for o in origin):
            raise ValueError(f"origin entries must be finite, got {origin}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def nvox(self):
        nx, ny, nz = self.shape
        return nx * ny * nz

    @property
    def voxel_volume(self):
        """Volume of one voxel in mm^3."""
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def voxel_to_world(self, ijk):
        """World-space mm coordinates of voxel index triple(s).

        ``ijk`` may be a single triple or an (m, 3) array.
        """
        idx = np.atleast_2d(np.asarray(ijk, dtype=np.float64))
        out = np.asarray(self.origin) + idx * np.asarray(self.spacing)
        return out[0] if np.asarray(ijk).ndim == 1 else out


def _as_read_only(arr):
    arr = arr.copy(order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Volume3:
    """A scalar field over a GridMeta grid (finite float64 per voxel)."""

    meta: GridMeta
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != self.meta.shape:
            raise ValueError(f"data shape {data.shape} != grid shape {self.meta.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data contains NaN or Inf")
        object.__setattr__(self, "data", _as_read_only(data))


class ProbabilityMap(Volume3):
    """A Volume3 whose values all lie in [0, 1]."""

    def __post_init__(self):
        super().__post_init__()
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"probabilities outside [0, 1]: min={lo}, max={hi}")


@dataclass(frozen=True, eq=False)
class Indicator:
    """A binary mask over a GridMeta grid; the characteristic function."""

    meta: GridMeta
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != self.meta.shape:
            raise ValueError(f"mask shape {data.shape} != grid shape {self.meta.shape}")
        as_u8 = data.astype(np.uint8)
        if data.dtype != np.bool_ and not np.array_equal(as_u8, data):
            raise ValueError("indicator values must be exactly 0 or 1")
        if as_u8.max(initial=0) > 1:
            raise ValueError("indicator values must be exactly 0 or 1")
        object.__setattr__(self, "data", _as_read_only(as_u8))

    def to_volume(self):
        """The mask as a float64 Volume3 (values 0.0 / 1.0)."""
        return Volume3(self.meta, self.data.astype(np.float64))

    def count(self):
        """Number of foreground voxels."""
        return int(np.count_nonzero(self.data))


def require_same_meta(*objs):
    """Raise MetaMismatchError unless all arguments share one GridMeta."""
    first = objs[0].meta
    for other in objs[1:]:
        if other.meta != first:
            raise MetaMismatchError(f"grid mismatch: {first} vs {other.meta}")
    return first


def binarize(p, threshold):
    """Threshold a probability map into an Indicator.

    Foreground is ``value >= threshold`` (ties land in foreground so a
    0.5-valued fused map binarizes deterministically).
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return Indicator(p.meta, (p.data >= threshold).astype(np.uint8))


def masked_mean(v, m):
    """Mean of ``v`` over the foreground of ``m``.

    Accumulates in float64 (numpy pairwise summation) regardless of the
    source precision. Raises EmptyMaskError on an all-zero mask.
    """
    require_same_meta(v, m)
    fg = m.data != 0
    n = int(np.count_nonzero(fg))
    if n == 0:
        raise EmptyMaskError("masked_mean over an empty mask")
    return float(v.data[fg].mean(dtype=np.float64))


def crop_voxel(v, lo, hi):
    """Voxel-space crop to the half-open box [lo, hi).

    The origin shifts by ``lo * spacing`` so retained voxels keep their
    world coordinates exactly. Preserves the container type (Volume3,
    ProbabilityMap or Indicator).
    """
    lo = tuple(int(x) for x in lo)
    hi = tuple(int(x) for x in hi)
    shape = v.meta.shape
    for a in range(3):
        if not (0 <= lo[a] < hi[a] <= shape[a]):
            raise OutOfBoundsError(
                f"crop box [{lo}, {hi}) outside grid of shape {shape} on axis {a}"
            )
    new_meta = GridMeta(
        shape=tuple(hi[a] - lo[a] for a in range(3)),
        spacing=v.meta.spacing,
        origin=tuple(v.meta.origin[a] + lo[a] * v.meta.spacing[a] for a in range(3)),
    )
    sliced = v.data[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    return type(v)(new_meta, sliced)
