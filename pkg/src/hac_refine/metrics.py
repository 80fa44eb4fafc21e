"""Overlap metrics (DSC, precision, recall) and cohort aggregation.

Computed in voxel space on the shared grid. Empty-mask conventions:
  dsc       = 1 when both masks are empty (2tp+fp+fn = 0), else 2tp/denom
  precision = 1 when pred is empty and gt is empty too, 0 when pred is
              empty but gt is not, else tp/(tp+fp)
  recall    = 1 when gt is empty and pred is empty too, 0 when gt is
              empty but pred is not, else tp/(tp+fn)
These keep precision(a, b) == recall(b, a) in every case.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError
from .grid import Indicator, require_same_meta


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    dsc: float
    precision: float
    recall: float
    nsd: float = None


def confusion(pred: Indicator, gt: Indicator):
    """Voxel counts (tp, fp, fn)."""
    require_same_meta(pred, gt)
    p = pred.data != 0
    g = gt.data != 0
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return tp, fp, fn


def dsc(pred: Indicator, gt: Indicator) -> float:
    tp, fp, fn = confusion(pred, gt)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2.0 * tp / denom


def precision(pred: Indicator, gt: Indicator) -> float:
    tp, fp, fn = confusion(pred, gt)
    if tp + fp == 0:
        return 1.0 if fn == 0 else 0.0
    return tp / (tp + fp)


def recall(pred: Indicator, gt: Indicator) -> float:
    tp, fp, fn = confusion(pred, gt)
    if tp + fn == 0:
        return 1.0 if fp == 0 else 0.0
    return tp / (tp + fn)


def aggregate(cases) -> CaseMetrics:
    """Unweighted means across cases; nsd only when every case carries one."""
    cases = list(cases)
    if not cases:
        raise EmptyInputError("no cases to aggregate")
    n = len(cases)
    mean_nsd = None
    if all(c.nsd is not None for c in cases):
        mean_nsd = sum(c.nsd for c in cases) / n
    return CaseMetrics(
        case_id="MEAN",
        dsc=sum(c.dsc for c in cases) / n,
        precision=sum(c.precision for c in cases) / n,
        recall=sum(c.recall for c in cases) / n,
        nsd=mean_nsd,
    )
