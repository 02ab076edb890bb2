"""Voxel-level detection metrics for anomaly maps.

All four metrics treat the in-mask voxels of a map as ranking scores against
a binary ground truth: pixelwise AUROC (midrank convention), average
precision over distinct-score thresholds, the best Dice over a threshold
sweep, and the false-positive rate at that best threshold. Binarization is
strict (score > threshold) everywhere.

Reductions use exactly rounded sums (math.fsum) or provably exact
half-integer arithmetic, so results are independent of evaluation order and
can be compared bitwise against brute-force references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .volume import BinaryMask3D, Volume3D

DEFAULT_N_THRESHOLDS = 256
MAX_DISTINCT_THRESHOLDS = 4096  # beyond this only the uniform grid is swept
DEFAULT_GT_THRESHOLD = 0.5


class DegenerateGroundTruthError(ValueError):
    """Ground truth has no positives (or no negatives) inside the mask."""


def binarize_gt(vol: Volume3D, threshold: float = DEFAULT_GT_THRESHOLD) -> BinaryMask3D:
    """Ground truth from a probability field: voxels with P >= threshold."""
    return BinaryMask3D(vol.values >= threshold)


def _extract(map_: Volume3D, gt: BinaryMask3D, eval_mask: BinaryMask3D) -> tuple[np.ndarray, np.ndarray]:
    if map_.dims != gt.dims or map_.dims != eval_mask.dims:
        raise ValueError(f"grid mismatch: map {map_.dims}, gt {gt.dims}, mask {eval_mask.dims}")
    if eval_mask.count == 0:
        raise ValueError("evaluation mask is empty")
    scores = map_.values[eval_mask.bits]
    labels = gt.bits[eval_mask.bits]
    return scores, labels


def pixel_auc(map_: Volume3D, gt: BinaryMask3D, eval_mask: BinaryMask3D) -> float:
    """Area under the ROC curve with ties at half credit (midranks).

    Equals the probability that a random positive voxel outranks a random
    negative one, counting exact ties as 1/2.
    """
    scores, labels = _extract(map_, gt, eval_mask)
    npos = int(labels.sum())
    nneg = labels.size - npos
    if npos == 0:
        raise DegenerateGroundTruthError("no positive voxels in the evaluation mask")
    if nneg == 0:
        raise DegenerateGroundTruthError("no negative voxels in the evaluation mask")
    ranks = _scipy_stats.rankdata(scores, method="average")
    # midranks are half-integers; these sums are exact in float64
    rank_sum = float(np.sum(ranks[labels]))
    numerator = rank_sum - npos * (npos + 1) / 2.0
    return numerator / float(npos * nneg)


def _descending_groups(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (TP, FP) after each distinct score, descending."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    ends = np.nonzero(np.diff(s))[0]
    ends = np.concatenate([ends, [s.size - 1]])
    tp = np.cumsum(l.astype(np.int64))[ends]
    fp = np.cumsum((~l).astype(np.int64))[ends]
    return tp, fp


def average_precision(map_: Volume3D, gt: BinaryMask3D, eval_mask: BinaryMask3D) -> float:
    """AP = sum over distinct thresholds of (recall gain) * precision.

    Thresholds sweep the distinct scores from high to low; equal scores enter
    as one group, so tied blocks contribute a single precision point.
    """
    scores, labels = _extract(map_, gt, eval_mask)
    npos = int(labels.sum())
    if npos == 0:
        raise DegenerateGroundTruthError("no positive voxels in the evaluation mask")
    tp, fp = _descending_groups(scores, labels)
    precision = tp / (tp + fp)
    recall = tp / float(npos)
    gains = np.diff(np.concatenate([[0.0], recall]))
    return math.fsum(gains * precision)


def _threshold_grid(scores: np.ndarray, n_thresholds: int) -> np.ndarray:
    if n_thresholds < 2:
        raise ValueError(f"n_thresholds must be >= 2, got {n_thresholds}")
    grid = np.linspace(0.0, 1.0, n_thresholds)
    distinct = np.unique(scores)
    if distinct.size <= MAX_DISTINCT_THRESHOLDS:
        grid = np.union1d(grid, distinct)
    return grid


def max_dice(
    map_: Volume3D,
    gt: BinaryMask3D,
    eval_mask: BinaryMask3D,
    n_thresholds: int = DEFAULT_N_THRESHOLDS,
) -> tuple[float, float]:
    """Best Dice over a threshold sweep; returns (dice, threshold).

    The sweep uses ``n_thresholds`` uniform values in [0, 1] plus every
    distinct score when there are at most 4096 of them; with the distinct
    values included the result is exact, not grid-limited. Ties prefer the
    lowest threshold.
    """
    scores, labels = _extract(map_, gt, eval_mask)
    npos = int(labels.sum())
    if npos == 0:
        raise DegenerateGroundTruthError("no positive voxels in the evaluation mask")
    thresholds = _threshold_grid(scores, n_thresholds)

    order = np.argsort(scores, kind="stable")
    s = scores[order]
    pos_prefix = np.concatenate([[0], np.cumsum(labels[order].astype(np.int64))])
    k = np.searchsorted(s, thresholds, side="right")  # voxels with score <= theta
    tp = npos - pos_prefix[k]
    pred = s.size - k
    dice = 2.0 * tp / (pred + npos)

    best = int(np.argmax(dice))  # first occurrence = lowest threshold
    return float(dice[best]), float(thresholds[best])


def fpr_at_max_dice(
    map_: Volume3D,
    gt: BinaryMask3D,
    eval_mask: BinaryMask3D,
    n_thresholds: int = DEFAULT_N_THRESHOLDS,
) -> float:
    """False-positive rate of the binarization that maximizes Dice."""
    scores, labels = _extract(map_, gt, eval_mask)
    nneg = labels.size - int(labels.sum())
    if nneg == 0:
        raise DegenerateGroundTruthError("no negative voxels in the evaluation mask")
    _, threshold = max_dice(map_, gt, eval_mask, n_thresholds)
    fp = int(np.sum((scores > threshold) & ~labels))
    return fp / float(nneg)


@dataclass(frozen=True)
class SampleScore:
    sample_id: str
    auc: float
    ap: float
    dice_max: float
    best_threshold: float
    fpr: float


@dataclass(frozen=True)
class ExcludedSample:
    sample_id: str
    reason: str


def score_sample(
    map_: Volume3D,
    gt: BinaryMask3D,
    eval_mask: BinaryMask3D,
    sample_id: str = "",
    n_thresholds: int = DEFAULT_N_THRESHOLDS,
) -> SampleScore | ExcludedSample:
    """All four metrics for one volume, or the reason it cannot be scored."""
    scores, labels = _extract(map_, gt, eval_mask)
    npos = int(labels.sum())
    nneg = labels.size - npos
    if npos == 0:
        return ExcludedSample(sample_id, "no positive voxels in the evaluation mask")
    if nneg == 0:
        return ExcludedSample(sample_id, "ground truth covers the whole evaluation mask")
    dice, threshold = max_dice(map_, gt, eval_mask, n_thresholds)
    return SampleScore(
        sample_id=sample_id,
        auc=pixel_auc(map_, gt, eval_mask),
        ap=average_precision(map_, gt, eval_mask),
        dice_max=dice,
        best_threshold=threshold,
        fpr=fpr_at_max_dice(map_, gt, eval_mask, n_thresholds),
    )


@dataclass(frozen=True)
class MetricsReport:
    """Arithmetic means over scorable samples, with exclusions spelled out."""

    scores: tuple[SampleScore, ...]
    excluded: tuple[ExcludedSample, ...]
    mean_auc: float
    mean_ap: float
    mean_dice: float
    mean_fpr: float

    def to_dict(self) -> dict:
        return {
            "mean": {
                "auc": self.mean_auc,
                "ap": self.mean_ap,
                "dice_max": self.mean_dice,
                "fpr": self.mean_fpr,
            },
            "n_included": len(self.scores),
            "n_excluded": len(self.excluded),
            "excluded": [
                {"sample_id": e.sample_id, "reason": e.reason} for e in self.excluded
            ],
            "per_sample": [
                {
                    "sample_id": sc.sample_id,
                    "auc": sc.auc,
                    "ap": sc.ap,
                    "dice_max": sc.dice_max,
                    "best_threshold": sc.best_threshold,
                    "fpr": sc.fpr,
                }
                for sc in self.scores
            ],
        }


def aggregate(results: Iterable[SampleScore | ExcludedSample]) -> MetricsReport:
    """Mean metrics over all scorable samples; excluded ones never enter."""
    scores: list[SampleScore] = []
    excluded: list[ExcludedSample] = []
    for r in results:
        if isinstance(r, SampleScore):
            scores.append(r)
        elif isinstance(r, ExcludedSample):
            excluded.append(r)
        else:
            raise TypeError(f"unexpected result type {type(r).__name__}")
    if not scores:
        raise ValueError("no scorable samples to aggregate")

    def mean(values: Sequence[float]) -> float:
        return math.fsum(values) / len(values)

    return MetricsReport(
        scores=tuple(scores),
        excluded=tuple(excluded),
        mean_auc=mean([s.auc for s in scores]),
        mean_ap=mean([s.ap for s in scores]),
        mean_dice=mean([s.dice_max for s in scores]),
        mean_fpr=mean([s.fpr for s in scores]),
    )
