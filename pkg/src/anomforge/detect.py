"""Residual-based anomaly maps from an input / reconstruction pair.

The reconstruction may sit a voxel or two off the input (resampling and the
generative round trip both translate), so an exhaustive small-offset search
aligns it first. The absolute residual is then weighted by how dissimilar the
pair is overall, normalized per volume, despeckled with a median filter, and
confined to an eroded brain mask so boundary artifacts never score.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import ndimage

from .volume import BinaryMask3D, Volume3D, erode, median_filter, shift_values

DEFAULT_MEDIAN_KERNEL = 5
DEFAULT_ERODE_ITERS = 6


@dataclass(frozen=True)
class ShiftSearchParams:
    """Exhaustive integer-shift search over [-max_shift, max_shift]^3."""

    max_shift: int = 2

    def __post_init__(self) -> None:
        if self.max_shift < 0:
            raise ValueError(f"max_shift must be >= 0, got {self.max_shift}")


class SimilarityFunctional(Protocol):
    """Per-volume dissimilarity in [0, 1]; 0 = identical, 1 = unrelated."""

    def evaluate(self, x0: Volume3D, xrec: Volume3D, mask: BinaryMask3D) -> float: ...


def shift_align(
    x0: Volume3D,
    xrec: Volume3D,
    mask: BinaryMask3D,
    params: ShiftSearchParams = ShiftSearchParams(),
) -> tuple[Volume3D, tuple[int, int, int]]:
    """Translate ``xrec`` to best match ``x0`` inside the mask.

    The objective is the in-mask mean absolute difference; vacated voxels are
    zero-filled. Candidates are visited sorted by (L1 norm, lexicographic) and
    only strict improvements replace the incumbent, so ties resolve to the
    smallest, then lexicographically smallest, offset. The returned offset is
    the translation applied to ``xrec`` (aligned[i] = xrec[i - s]).
    """
    if x0.dims != xrec.dims or x0.dims != mask.dims:
        raise ValueError(f"grid mismatch: x0 {x0.dims}, xrec {xrec.dims}, mask {mask.dims}")
    if mask.count == 0:
        raise ValueError("alignment mask is empty")
    m = params.max_shift
    if m > min(x0.dims) / 4.0:
        raise ValueError(f"max_shift {m} exceeds a quarter of the smallest axis {min(x0.dims)}")

    bits = mask.bits
    ref = x0.values
    candidates = sorted(
        itertools.product(range(-m, m + 1), repeat=3),
        key=lambda s: (abs(s[0]) + abs(s[1]) + abs(s[2]), s),
    )
    best_shift = candidates[0]
    best_vals = None
    best_score = np.inf
    for s in candidates:
        shifted = shift_values(xrec.values, s, fill=0.0)
        score = float(np.abs(ref[bits] - shifted[bits]).mean())
        if score < best_score:
            best_score = score
            best_shift = s
            best_vals = shifted
    return xrec.with_values(best_vals), tuple(int(c) for c in best_shift)


def _local_gaussian_mean(arr: np.ndarray) -> np.ndarray:
    # sigma 1.5 truncated at 2 sigma: 7-tap separable window
    return ndimage.gaussian_filter(arr, sigma=1.5, truncate=2.0, mode="nearest")


def default_similarity(x0: Volume3D, xrec: Volume3D, mask: BinaryMask3D) -> float:
    """1 - mean local SSIM over the mask, clamped to [0, 1].

    SSIM uses a Gaussian window (sigma 1.5) and the standard stabilizers
    C1 = (0.01)^2, C2 = (0.03)^2 for data range 1.0. Identical volumes score
    0; unrelated ones approach 1.
    """
    if x0.dims != xrec.dims or x0.dims != mask.dims:
        raise ValueError(f"grid mismatch: x0 {x0.dims}, xrec {xrec.dims}, mask {mask.dims}")
    if mask.count == 0:
        raise ValueError("similarity mask is empty")
    a = x0.values
    b = xrec.values
    c1 = 0.01**2
    c2 = 0.03**2
    mu_a = _local_gaussian_mean(a)
    mu_b = _local_gaussian_mean(b)
    var_a = _local_gaussian_mean(a * a) - mu_a * mu_a
    var_b = _local_gaussian_mean(b * b) - mu_b * mu_b
    cov = _local_gaussian_mean(a * b) - mu_a * mu_b
    ssim = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    dis = 1.0 - float(ssim[mask.bits].mean())
    return min(1.0, max(0.0, dis))


@dataclass(frozen=True)
class SsimDissimilarity:
    def evaluate(self, x0: Volume3D, xrec: Volume3D, mask: BinaryMask3D) -> float:
        return default_similarity(x0, xrec, mask)


@dataclass(frozen=True)
class ConstantSimilarity:
    """Fixed weight; turns the pipeline into a pure residual map."""

    value: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"similarity weight must lie in [0, 1], got {self.value}")

    def evaluate(self, x0: Volume3D, xrec: Volume3D, mask: BinaryMask3D) -> float:
        return self.value


@dataclass(frozen=True)
class AnomalyMap:
    """Voxelwise anomaly scores in [0, 1] plus the alignment diagnostics."""

    volume: Volume3D
    shift: tuple[int, int, int]
    similarity: float

    def __post_init__(self) -> None:
        v = self.volume.values
        if float(v.min()) < 0.0 or float(v.max()) > 1.0:
            raise ValueError("anomaly scores must lie in [0, 1]")
        object.__setattr__(self, "shift", tuple(int(c) for c in self.shift))


def anomaly_map(
    x0: Volume3D,
    xrec: Volume3D,
    brain: BinaryMask3D,
    similarity: SimilarityFunctional | None = None,
    params: ShiftSearchParams = ShiftSearchParams(),
    median_kernel: int = DEFAULT_MEDIAN_KERNEL,
    erode_iters: int = DEFAULT_ERODE_ITERS,
) -> AnomalyMap:
    """Score voxels by weighted reconstruction residual.

    Stages: shift-align the reconstruction; take |x0 - aligned| times the
    per-volume dissimilarity weight; min-max normalize over the brain and zero
    the outside; median-filter (k=5); zero everything outside the brain eroded
    6 times. The median window (reach 2) never spans farther than the erosion
    (reach 6) removes, so out-of-brain voxels cannot leak into surviving
    scores. Inputs must be normalized to [0, 1].
    """
    for name, volume in (("x0", x0), ("xrec", xrec)):
        v = volume.values
        if float(v.min()) < 0.0 or float(v.max()) > 1.0:
            raise ValueError(f"{name} must be normalized to [0, 1]")
    sim = similarity if similarity is not None else SsimDissimilarity()

    aligned, shift = shift_align(x0, xrec, brain, params)
    weight = float(sim.evaluate(x0, aligned, brain))
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"similarity functional returned {weight}, outside [0, 1]")

    residual = np.abs(x0.values - aligned.values) * weight
    inside = residual[brain.bits]
    lo = float(inside.min())
    hi = float(inside.max())
    if hi == lo:
        normalized = np.zeros_like(residual)
    else:
        normalized = (residual - lo) / (hi - lo)
        normalized[~brain.bits] = 0.0
    smoothed = median_filter(x0.with_values(normalized), median_kernel).values
    keep = erode(brain, erode_iters).bits
    smoothed[~keep] = 0.0
    return AnomalyMap(volume=x0.with_values(smoothed), shift=shift, similarity=weight)
