"""Synthetic head phantoms: nested ellipsoids with tissue-like plateaus.

Not anatomy, but enough structure for end-to-end tests: a smooth bright
white-matter core (dominating the upper intensity range so the white-matter
brightness heuristic works), a gray shell, a small dark ventricle, and an
exactly-zero background whose boundary coincides with the analytic brain
ellipsoid even after smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import BinaryMask3D, Volume3D


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0
    smoothness: float = 1.0  # blur kernel radius, voxels; 0 disables
    background: float = 0.0
    ventricle: float = 0.15
    gray: float = 0.4
    white: float = 0.8

    def __post_init__(self) -> None:
        if len(self.dims) != 3 or any(int(n) < 16 for n in self.dims):
            raise ValueError(f"phantom dims must be >= 16 per axis, got {self.dims!r}")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        for name in ("background", "ventricle", "gray", "white"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} intensity must lie in [0, 1], got {v}")
        if not self.white > self.gray:
            raise ValueError("white matter must be brighter than gray matter")
        if self.smoothness < 0.0:
            raise ValueError(f"smoothness must be >= 0, got {self.smoothness}")


def _ellipsoid(
    dims: tuple[int, int, int], center: np.ndarray, semi_axes: np.ndarray
) -> np.ndarray:
    grids = np.ogrid[0 : dims[0], 0 : dims[1], 0 : dims[2]]
    q = sum(((g - c) / a) ** 2 for g, c, a in zip(grids, center, semi_axes))
    return q <= 1.0


def make_phantom(spec: PhantomSpec) -> tuple[Volume3D, BinaryMask3D, BinaryMask3D]:
    """Build one phantom; returns (volume, white-matter mask, brain mask).

    Geometry is jittered per seed: brain semi-axes ~0.42 of each extent, a
    white core at ~0.80 of the brain axes (so white matter fills roughly half
    the brain), and a small central ventricle. The masks follow the analytic
    (unsmoothed) geometry; the volume is smoothed and then re-zeroed outside
    the brain so ``brain_mask(vol, 0)`` equals the returned brain mask.
    """
    rng = np.random.default_rng(spec.seed)
    n = np.asarray(spec.dims, dtype=np.float64)

    brain_center = n / 2.0 + rng.uniform(-0.02, 0.02, size=3) * n
    brain_axes = 0.42 * n * rng.uniform(0.92, 1.08, size=3)
    white_center = brain_center + rng.uniform(-0.015, 0.015, size=3) * n
    white_axes = brain_axes * rng.uniform(0.77, 0.83, size=3)
    vent_center = white_center + rng.uniform(-0.01, 0.01, size=3) * n
    vent_axes = brain_axes * rng.uniform(0.19, 0.25, size=3)

    brain = _ellipsoid(spec.dims, brain_center, brain_axes)
    white = _ellipsoid(spec.dims, white_center, white_axes) & brain
    vent = _ellipsoid(spec.dims, vent_center, vent_axes) & white

    vol = np.full(spec.dims, spec.background, dtype=np.float64)
    vol[brain] = spec.gray
    vol[white] = spec.white
    vol[vent] = spec.ventricle

    if spec.smoothness > 0.0:
        vol = ndimage.gaussian_filter(
            vol, sigma=spec.smoothness / 2.0, truncate=2.0, mode="constant", cval=0.0
        )
    vol[~brain] = 0.0

    return (
        Volume3D(vol, spec.spacing),
        BinaryMask3D(white & ~vent),
        BinaryMask3D(brain),
    )


def make_lesion_seed(brain: BinaryMask3D, radius: int, seed: int) -> BinaryMask3D:
    """Place a voxel ball of the given radius fully inside the brain.

    The center is drawn uniformly from all voxels whose distance to the brain
    boundary exceeds the radius; no feasible center is an error. A radius-1
    ball is the 7-voxel face-neighbor cross.
    """
    radius = int(radius)
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    dist = ndimage.distance_transform_edt(brain.bits)
    candidates = np.argwhere(dist > radius)
    if candidates.size == 0:
        raise ValueError(f"no center admits a radius-{radius} sphere inside the brain")
    center = candidates[np.random.default_rng(seed).integers(0, len(candidates))]

    grids = np.ogrid[0 : brain.dims[0], 0 : brain.dims[1], 0 : brain.dims[2]]
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    return BinaryMask3D(d2 <= radius * radius)
