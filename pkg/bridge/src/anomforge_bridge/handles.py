"""Buffer handles crossing the binding boundary.

The engine works in x-fastest (Fortran) element order, the same order its
NIfTI payloads use on disk. A handle wraps a float32 array that is either a
zero-copy read-only view of the caller's buffer, when the layout already
matches, or the result of exactly one conversion copy. ``copied`` records
which happened, so callers feeding large training batches can notice the
conversion and fix their layout instead of paying for it every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BridgeError(Exception):
    """Base class for binding-boundary failures."""


class BufferDtypeError(BridgeError, TypeError):
    """Buffer element type is not float32."""


class BufferLayoutError(BridgeError, ValueError):
    """Buffer is not a 3-D array in x-fastest order."""


class DimsMismatchError(BridgeError, ValueError):
    """Volumes that must share one grid do not."""


@dataclass(frozen=True)
class ArrayHandle:
    """A 3-D float32 buffer in x-fastest order, read-only for the engine."""

    array: np.ndarray
    copied: bool = False

    def __post_init__(self) -> None:
        a = self.array
        if not isinstance(a, np.ndarray) or a.ndim != 3:
            raise BufferLayoutError("handle needs a 3-D numpy array")
        if a.dtype != np.float32:
            raise BufferDtypeError(f"handle buffer must be float32, got {a.dtype}")
        if not a.flags.f_contiguous:
            raise BufferLayoutError("handle buffer must be x-fastest (Fortran) contiguous")

    @classmethod
    def from_numpy(cls, arr: np.ndarray) -> "ArrayHandle":
        """Wrap ``arr``, copying only if its layout does not match the engine's.

        float32 input in x-fastest order becomes a zero-copy view; any other
        memory order costs one explicit copy, flagged via ``copied``. A dtype
        other than float32 is an error rather than a silent conversion: the
        caller owns the precision decision.
        """
        a = np.asanyarray(arr)
        if a.dtype != np.float32:
            raise BufferDtypeError(f"expected a float32 buffer, got {a.dtype}")
        if a.ndim != 3:
            raise BufferLayoutError(f"expected a 3-D volume, got shape {a.shape}")
        if a.flags.f_contiguous:
            view = a.view()
            view.flags.writeable = False
            return cls(view, copied=False)
        buf = np.asfortranarray(a)
        buf.flags.writeable = False
        return cls(buf, copied=True)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.array.shape  # type: ignore[return-value]

    @property
    def dtype(self) -> np.dtype:
        return self.array.dtype

    def to_numpy(self) -> np.ndarray:
        """The wrapped buffer itself (read-only); copy before mutating."""
        return self.array

    def tobytes(self) -> bytes:
        """Raw element bytes in x-fastest order, little-endian float32."""
        return self.array.astype("<f4", copy=False).tobytes(order="F")
