"""Ensemble fusion, normalized surface Dice and the uncertainty gate.

The fused map is the voxelwise mean of the member probability maps. Each
member is scored against the fused map with NSD: boundaries are the
6-connectivity exposed faces (the volume border counts as background),
each boundary voxel weighted by its exposed face area in mm^2, and
distances are exact Euclidean distances between boundary voxel centers.
A case is flagged when 1 - mean(NSD) exceeds the gate threshold strictly.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EmptyMaskError
from .grid import Indicator, ProbabilityMap, binarize, require_same_meta

DEFAULT_GATE = 0.2


@dataclass(frozen=True)
class EnsemblePrediction:
    """Member probability maps plus their fused mean.

    Construction recomputes the fusion and insists it matches, so a stale
    or foreign ``fused`` map cannot sneak in; ``from_members`` is the
    convenient constructor.
    """

    members: tuple
    fused: ProbabilityMap

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        want = ensemble_mean(self.members)
        require_same_meta(self.fused, want)
        if not np.array_equal(self.fused.data, want.data):
            raise ValueError("fused map is not the mean of the members")

    @classmethod
    def from_members(cls, members):
        members = tuple(members)
        return cls(members=members, fused=ensemble_mean(members))


@dataclass(frozen=True)
class SurfaceDistanceResult:
    """Per-boundary-voxel distances (mm) and face-area weights (mm^2).

    Arrays are aligned in C scan order of each mask's boundary voxels.
    """

    dist_a_to_b: np.ndarray
    weights_a: np.ndarray
    dist_b_to_a: np.ndarray
    weights_b: np.ndarray


@dataclass(frozen=True)
class UncertaintyReport:
    case_id: str
    nsd_per_member: tuple
    unc: float
    flagged: bool


def ensemble_mean(members) -> ProbabilityMap:
    """Voxelwise mean of >= 2 probability maps sharing one grid.

    Accumulates deviations from the first member so that identical
    members average back to themselves exactly.
    """
    members = tuple(members)
    if len(members) < 2:
        raise ValueError(f"need >= 2 ensemble members, got {len(members)}")
    meta = require_same_meta(*members)
    base = members[0].data
    delta = np.zeros(meta.shape, dtype=np.float64)
    for m in members[1:]:
        delta += m.data - base
    fused = base + delta / len(members)
    return ProbabilityMap(meta, np.clip(fused, 0.0, 1.0))


def boundary_faces(mask: Indicator):
    """Boundary voxels of a mask with exposed-face-area weights.

    Returns (boundary bool array, weight array in mm^2). A face is exposed
    when the 6-neighbor across it is background or off the grid.
    """
    fg = mask.data != 0
    sx, sy, sz = mask.meta.spacing
    face_area = (sy * sz, sx * sz, sx * sy)
    weights = np.zeros(fg.shape, dtype=np.float64)
    for axis in range(3):
        for sign in (-1, 1):
            exposed = fg & ~_shifted(fg, axis, sign)
            weights += face_area[axis] * exposed
    return weights > 0.0, weights


def _shifted(fg, axis, sign):
    """Neighbor occupancy looking one step along +-axis; border reads False."""
    out = np.zeros_like(fg)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if sign > 0:
        src[axis], dst[axis] = slice(1, None), slice(None, -1)
    else:
        src[axis], dst[axis] = slice(None, -1), slice(1, None)
    out[tuple(dst)] = fg[tuple(src)]
    return out


def surface_distances(a: Indicator, b: Indicator) -> SurfaceDistanceResult:
    """Exact Euclidean boundary-to-boundary distances, both directions."""
    meta = require_same_meta(a, b)
    if a.count() == 0:
        raise EmptyMaskError("mask a is empty")
    if b.count() == 0:
        raise EmptyMaskError("mask b is empty")
    bd_a, w_a = boundary_faces(a)
    bd_b, w_b = boundary_faces(b)
    sq_to_b = _kernels.edt_squared(bd_b, meta.spacing)
    sq_to_a = _kernels.edt_squared(bd_a, meta.spacing)
    return SurfaceDistanceResult(
        dist_a_to_b=np.sqrt(sq_to_b[bd_a]),
        weights_a=w_a[bd_a],
        dist_b_to_a=np.sqrt(sq_to_a[bd_b]),
        weights_b=w_b[bd_b],
    )


def nsd(a: Indicator, b: Indicator, tol_mm: float) -> float:
    """Normalized surface Dice at tolerance ``tol_mm``.

    Fraction of combined boundary surface (face-area weighted) lying
    within tol of the other mask's boundary. Symmetric in (a, b);
    propagates EmptyMaskError for empty inputs (see nsd_total).
    """
    if not tol_mm > 0.0:
        raise ValueError(f"tol_mm must be positive, got {tol_mm}")
    res = surface_distances(a, b)
    hits = float(res.weights_a[res.dist_a_to_b <= tol_mm].sum()) + float(
        res.weights_b[res.dist_b_to_a <= tol_mm].sum()
    )
    total = float(res.weights_a.sum()) + float(res.weights_b.sum())
    return hits / total


def nsd_total(a: Indicator, b: Indicator, tol_mm: float) -> float:
    """nsd made total: one empty mask scores 0, two empty masks score 1."""
    a_empty = a.count() == 0
    b_empty = b.count() == 0
    if a_empty and b_empty:
        return 1.0
    if a_empty or b_empty:
        return 0.0
    return nsd(a, b, tol_mm)


def uncertainty_score(
    pred: EnsemblePrediction,
    tol_mm: float = 1.0,
    bin_thresh: float = 0.5,
    threshold: float = DEFAULT_GATE,
    case_id: str = "",
) -> UncertaintyReport:
    """Score one case: NSD of each member against the fused mean.

    unc = 1 - mean(NSD_i); the case is flagged when unc is strictly over
    the threshold.
    """
    require_same_meta(*pred.members, pred.fused)
    fused_mask = binarize(pred.fused, bin_thresh)
    scores = tuple(
        nsd_total(binarize(m, bin_thresh), fused_mask, tol_mm) for m in pred.members
    )
    unc = 1.0 - sum(scores) / len(scores)
    return UncertaintyReport(
        case_id=case_id, nsd_per_member=scores, unc=unc, flagged=unc > threshold
    )


def select_cases(reports, threshold: float = DEFAULT_GATE):
    """Case ids with uncertainty strictly over the threshold, input order."""
    return [r.case_id for r in reports if r.unc > threshold]
