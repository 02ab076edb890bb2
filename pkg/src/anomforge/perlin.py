"""Deterministic 3-D gradient (Perlin) noise.

Lattice gradients are drawn by a counter-based splitmix64 hash of
``(seed, octave, ix, iy, iz)``, so a voxel's value depends only on those
integers: fields are bit-reproducible across runs, platforms, and grid
traversal order, and need no stored permutation tables.

Frequency is measured in lattice cells per grid axis (index space), so the
same parameters give the same-looking field regardless of voxel spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume3D


@dataclass(frozen=True)
class PerlinParams:
    """Octave-fractal noise parameters.

    Octave ``i`` contributes amplitude ``amplitude * persistence**i`` at
    frequency ``base_frequency * 2**i``.
    """

    seed: int
    octaves: int = 4
    base_frequency: float = 2.0
    persistence: float = 0.5
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.octaves < 1:
            raise ValueError(f"octaves must be >= 1, got {self.octaves}")
        if not self.base_frequency > 0.0:
            raise ValueError(f"base_frequency must be > 0, got {self.base_frequency}")
        if not 0.0 < self.persistence <= 1.0:
            raise ValueError(f"persistence must be in (0, 1], got {self.persistence}")
        if not self.amplitude > 0.0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")


_U64 = np.uint64
_MASK64 = 0xFFFFFFFFFFFFFFFF

# 12 cube-edge gradient directions (classic Perlin set).
_GRADIENTS = np.array(
    [
        [1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0],
        [1, 0, 1], [-1, 0, 1], [1, 0, -1], [-1, 0, -1],
        [0, 1, 1], [0, -1, 1], [0, 1, -1], [0, -1, -1],
    ],
    dtype=np.float64,
)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer; wraps modulo 2**64."""
    with np.errstate(over="ignore"):  # wrapping is the point
        x = x + _U64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1E3769B9)
        x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)
        return x ^ (x >> _U64(31))


def derive_seed(*parts: int) -> int:
    """Mix integers into one 64-bit seed, order-sensitively."""
    h = _U64(0)
    for p in parts:
        h = _splitmix64(h ^ _U64(int(p) & _MASK64))
    return int(h)


def _fade(t: np.ndarray) -> np.ndarray:
    # 6t^5 - 15t^4 + 10t^3: C2-continuous across lattice cells
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _octave(key: int, dims: tuple[int, int, int], frequency: float) -> np.ndarray:
    """One octave of gradient noise over an (nx, ny, nz) index grid."""
    coords = []
    cells = []
    fracs = []
    for n in dims:
        u = np.arange(n, dtype=np.float64) * (frequency / n)
        i0 = np.floor(u).astype(np.int64)
        coords.append(u)
        cells.append(i0)
        fracs.append(u - i0)

    # Hash every lattice corner the grid can touch into a gradient index.
    lat_dims = [int(c.max()) + 2 for c in cells]
    ix = np.arange(lat_dims[0], dtype=np.uint64)
    iy = np.arange(lat_dims[1], dtype=np.uint64)
    iz = np.arange(lat_dims[2], dtype=np.uint64)
    h = _splitmix64(_U64(key & _MASK64) ^ ix)[:, None, None]
    h = _splitmix64(h ^ iy[None, :, None])
    h = _splitmix64(h ^ iz[None, None, :])
    grad = _GRADIENTS[(h % _U64(12)).astype(np.intp)]  # (lx, ly, lz, 3)

    wx, wy, wz = (_fade(f) for f in fracs)
    cx = cells[0][:, None, None]
    cy = cells[1][None, :, None]
    cz = cells[2][None, None, :]
    fx = fracs[0][:, None, None]
    fy = fracs[1][None, :, None]
    fz = fracs[2][None, None, :]

    out = np.zeros(dims, dtype=np.float64)
    for dx_ in (0, 1):
        ax = (wx if dx_ else 1.0 - wx)[:, None, None]
        for dy_ in (0, 1):
            ay = (wy if dy_ else 1.0 - wy)[None, :, None]
            for dz_ in (0, 1):
                az = (wz if dz_ else 1.0 - wz)[None, None, :]
                g = grad[cx + dx_, cy + dy_, cz + dz_]  # (nx, ny, nz, 3)
                dot = (
                    g[..., 0] * (fx - dx_)
                    + g[..., 1] * (fy - dy_)
                    + g[..., 2] * (fz - dz_)
                )
                out += (ax * ay * az) * dot
    return out


def perlin3(
    params: PerlinParams,
    dims: tuple[int, int, int],
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> Volume3D:
    """Sample octave-fractal Perlin noise on a voxel grid."""
    if len(dims) != 3 or any(int(n) < 1 for n in dims):
        raise ValueError(f"dims must be three positive ints, got {dims!r}")
    dims = tuple(int(n) for n in dims)
    out = np.zeros(dims, dtype=np.float64)
    for i in range(params.octaves):
        key = derive_seed(params.seed, i)
        amp = params.amplitude * params.persistence**i
        out += amp * _octave(key, dims, params.base_frequency * 2.0**i)
    return Volume3D(out, spacing)
