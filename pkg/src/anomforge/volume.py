"""Regular-grid 3D scalar volumes, binary masks, and the shared voxel ops.

Conventions used across the package:

* arrays are indexed ``(x, y, z)`` with x fastest in the canonical linear
  (Fortran) order, matching the on-disk layout of the NIfTI writer;
* voxel values are float64 internally;
* ``spacing`` is the physical edge length of a voxel per axis, in mm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class Volume3D:
    """Dense scalar field on a regular grid.

    ``values`` is a float64 array of shape ``(nx, ny, nz)`` holding finite
    values only. Instances are treated as immutable; operations return new
    volumes and never write through ``values``.
    """

    values: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"expected a 3-D array, got ndim={v.ndim}")
        if min(v.shape) < 1:
            raise ValueError(f"every axis must have extent >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("volume contains non-finite values")
        sp = tuple(float(s) for s in self.spacing)
        if len(sp) != 3 or any(not np.isfinite(s) or s <= 0.0 for s in sp):
            raise ValueError(f"spacing must be three positive reals, got {self.spacing!r}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing", sp)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "Volume3D":
        """Same grid, new values."""
        return Volume3D(values, self.spacing)


@dataclass(frozen=True)
class BinaryMask3D:
    """Boolean voxel mask on the same grid layout as :class:`Volume3D`."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.bits)
        if b.dtype != np.bool_:
            # accept 0/1 arrays but refuse anything lossy
            if not np.all((b == 0) | (b == 1)):
                raise ValueError("mask values must be 0/1 or boolean")
            b = b.astype(bool)
        if b.ndim != 3 or min(b.shape) < 1:
            raise ValueError(f"expected a non-empty 3-D mask, got shape {b.shape}")
        object.__setattr__(self, "bits", b)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.bits.shape

    @property
    def count(self) -> int:
        """Number of set voxels."""
        return int(self.bits.sum())


def minmax_normalize(vol: Volume3D) -> Volume3D:
    """Affinely map values onto [0, 1]; a constant volume maps to all zeros."""
    v = vol.values
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        return vol.with_values(np.zeros_like(v))
    return vol.with_values((v - lo) / (hi - lo))


def brain_mask(vol: Volume3D, eps: float = 0.0) -> BinaryMask3D:
    """Foreground mask: voxels with value strictly above ``eps`` (>= 0)."""
    if eps < 0.0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    return BinaryMask3D(vol.values > eps)


# 6-connected structuring element (face neighbors only).
_STRUCT_6 = ndimage.generate_binary_structure(3, 1)


def erode(mask: BinaryMask3D, iters: int) -> BinaryMask3D:
    """Binary erosion with the 6-connected structuring element.

    Voxels outside the array count as background, so the mask retreats from
    the array border as well. ``iters=0`` is the identity.
    """
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    if iters == 0:
        return mask
    bits = ndimage.binary_erosion(
        mask.bits, structure=_STRUCT_6, iterations=iters, border_value=0
    )
    return BinaryMask3D(bits)


def median_filter(vol: Volume3D, k: int) -> Volume3D:
    """Median filter with a cubic k*k*k window, k odd; edges replicate."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {k}")
    if k == 1:
        return vol
    return vol.with_values(ndimage.median_filter(vol.values, size=k, mode="nearest"))


def crop_or_pad(vol: Volume3D, target_dims: tuple[int, int, int]) -> Volume3D:
    """Center-crop or zero-pad each axis to ``target_dims``.

    Odd crop/pad amounts put the extra voxel on the low-index side, which makes
    pad-then-crop restore the original content.
    """
    if len(target_dims) != 3 or any(int(t) < 1 for t in target_dims):
        raise ValueError(f"target dims must be three positive ints, got {target_dims!r}")
    target = tuple(int(t) for t in target_dims)
    src: list[slice] = []
    dst: list[slice] = []
    for n, m in zip(vol.dims, target):
        if m <= n:
            start = (n - m + 1) // 2  # low side loses the extra voxel
            src.append(slice(start, start + m))
            dst.append(slice(0, m))
        else:
            start = (m - n + 1) // 2  # low side gains the extra voxel
            src.append(slice(0, n))
            dst.append(slice(start, start + n))
    out = np.zeros(target, dtype=np.float64)
    out[tuple(dst)] = vol.values[tuple(src)]
    return vol.with_values(out)


def shift_values(values: np.ndarray, offset: tuple[int, int, int], fill: float = 0.0) -> np.ndarray:
    """Translate an array by an integer voxel offset, filling vacated voxels.

    ``out[i] = values[i - offset]`` where defined; out-of-range reads yield
    ``fill``. Works for boolean arrays too (fill coerced to the dtype).
    """
    if len(offset) != 3:
        raise ValueError(f"offset must have three components, got {offset!r}")
    out = np.full_like(values, fill)
    src: list[slice] = []
    dst: list[slice] = []
    for n, d in zip(values.shape, offset):
        d = int(d)
        if abs(d) >= n:
            return out  # shifted fully out of view
        if d >= 0:
            src.append(slice(0, n - d))
            dst.append(slice(d, n))
        else:
            src.append(slice(-d, n))
            dst.append(slice(0, n + d))
    out[tuple(dst)] = values[tuple(src)]
    return out
