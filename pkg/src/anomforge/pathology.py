"""Pseudo-pathology synthesis: turn a healthy volume into a corrupted one.

A lesion seed mask becomes a probability field, is smeared through the brain
by the fluid randomizer, and finally modulates a signed intensity-shift field:

    x_p = x_h + delta * P

where delta is Gaussian per voxel with mean -mu_w/2 and standard deviation
mu_w/2 inside the pathology support (zero outside), mu_w being the typical
white-matter intensity. With a fixed probability the whole delta field flips
sign, so lesions present both darker and brighter than white matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fluid import IntegrationParams, StepStats, randomize, random_potentials
from .perlin import PerlinParams
from .volume import BinaryMask3D, Volume3D, brain_mask, shift_values


@dataclass(frozen=True)
class LesionSeed:
    """Initial lesion support, optionally rigidly offset by whole voxels."""

    lesion_mask: BinaryMask3D
    jitter: tuple[int, int, int] | None = None

    def __post_init__(self) -> None:
        if self.jitter is not None:
            if len(self.jitter) != 3:
                raise ValueError(f"jitter must have three components, got {self.jitter!r}")
            object.__setattr__(self, "jitter", tuple(int(j) for j in self.jitter))


@dataclass(frozen=True)
class DeltaParams:
    flip_probability: float = 0.2
    clamp_output: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip_probability must be in [0, 1], got {self.flip_probability}")


@dataclass(frozen=True)
class WhiteMatterStats:
    """Typical white-matter intensity of a normalized volume."""

    mu_w: float

    def __post_init__(self) -> None:
        if not self.mu_w > 0.0:
            raise ValueError(f"mu_w must be positive, got {self.mu_w}")


def seed_probability(
    seed: LesionSeed,
    brain: BinaryMask3D,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> Volume3D:
    """Binary probability field P0: 1 on the (jittered) lesion inside the brain.

    Voxels shifted outside the array vanish; an empty intersection with the
    brain is an error rather than a silent no-op corruption.
    """
    bits = seed.lesion_mask.bits
    if bits.shape != brain.bits.shape:
        raise ValueError(f"lesion/brain grid mismatch: {bits.shape} vs {brain.bits.shape}")
    if seed.jitter is not None:
        bits = shift_values(bits, seed.jitter, fill=False)
    bits = bits & brain.bits
    if not bits.any():
        raise ValueError("lesion seed does not intersect the brain mask")
    return Volume3D(bits.astype(np.float64), spacing)


def estimate_mu_w(
    vol: Volume3D,
    brain: BinaryMask3D,
    wm_mask: BinaryMask3D | None = None,
) -> WhiteMatterStats:
    """Mean white-matter intensity, from a tissue mask or a brightness heuristic.

    Without a white-matter mask, the estimate is the mean of in-brain values at
    or above their 60th percentile (white matter is the bright compartment of a
    normalized T1 volume). The cut is inclusive so plateau-valued volumes, where
    the percentile lands exactly on the plateau, keep a nonempty sample.
    """
    if vol.dims != brain.dims:
        raise ValueError(f"volume/brain grid mismatch: {vol.dims} vs {brain.dims}")
    if wm_mask is not None:
        if wm_mask.dims != vol.dims:
            raise ValueError(f"volume/wm grid mismatch: {vol.dims} vs {wm_mask.dims}")
        if wm_mask.count == 0:
            raise ValueError("white-matter mask is empty")
        return WhiteMatterStats(float(vol.values[wm_mask.bits].mean()))
    if brain.count == 0:
        raise ValueError("brain mask is empty")
    inside = vol.values[brain.bits]
    cut = np.percentile(inside, 60.0)
    return WhiteMatterStats(float(inside[inside >= cut].mean()))


def flip_decision(seed: int, flip_probability: float) -> bool:
    """Replicates the first draw of :func:`sample_delta`: the sign-flip choice."""
    return bool(np.random.default_rng(seed).random() < flip_probability)


def sample_delta(
    dims: tuple[int, int, int],
    omega_p: BinaryMask3D,
    mu_w: float,
    params: DeltaParams,
    seed: int,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> Volume3D:
    """Per-voxel intensity shifts: N(-mu_w/2, (mu_w/2)^2) on the support.

    The whole-field sign flip is decided first, then the field is drawn, so a
    fixed seed pins both. Voxels outside ``omega_p`` are exactly zero.
    """
    if not mu_w > 0.0:
        raise ValueError(f"mu_w must be positive, got {mu_w}")
    if tuple(dims) != omega_p.dims:
        raise ValueError(f"dims/support mismatch: {tuple(dims)} vs {omega_p.dims}")
    rng = np.random.default_rng(seed)
    flip = rng.random() < params.flip_probability
    delta = rng.normal(loc=-mu_w / 2.0, scale=mu_w / 2.0, size=tuple(dims))
    if flip:
        delta = -delta
    delta[~omega_p.bits] = 0.0
    return Volume3D(delta, spacing)


def encode_anomaly(
    x_h: Volume3D,
    delta: Volume3D,
    P: Volume3D,
    clamp: bool = True,
) -> Volume3D:
    """Blend the shift field into the healthy volume: x_h + delta * P."""
    if x_h.dims != delta.dims or x_h.dims != P.dims:
        raise ValueError(f"grid mismatch: x_h {x_h.dims}, delta {delta.dims}, P {P.dims}")
    pv = P.values
    if float(pv.min()) < 0.0 or float(pv.max()) > 1.0:
        raise ValueError("P must lie in [0, 1]")
    out = x_h.values + delta.values * pv
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return x_h.with_values(out)


def make_pseudo_pathology(
    x_h: Volume3D,
    seed: LesionSeed,
    perlin: PerlinParams,
    integration: IntegrationParams,
    delta_params: DeltaParams,
    rng_seed: int,
    stats: StepStats | None = None,
) -> tuple[Volume3D, Volume3D]:
    """Full corruption pipeline; returns (x_p, P_final).

    The brain mask is taken as the positive support of ``x_h``. The Perlin seed
    drives the potential fields; ``rng_seed`` drives the delta draw and sign
    flip, so the two randomness sources can be swept independently. The shift
    amplitude comes from the in-brain brightness heuristic of
    :func:`estimate_mu_w`.
    """
    brain = brain_mask(x_h, 0.0)
    if float(x_h.values.min()) < 0.0 or float(x_h.values.max()) > 1.0:
        raise ValueError("x_h must be normalized to [0, 1]")

    p0 = seed_probability(seed, brain, x_h.spacing)
    potentials = random_potentials(
        x_h.dims,
        x_h.spacing,
        seed=perlin.seed,
        octaves=perlin.octaves,
        base_frequency=perlin.base_frequency,
        persistence=perlin.persistence,
        amplitude_v=perlin.amplitude,
    )
    p_final = randomize(p0, potentials, integration, brain, stats=stats)

    omega_p = BinaryMask3D(p_final.values > 0.0)
    mu = estimate_mu_w(x_h, brain)
    delta = sample_delta(
        x_h.dims, omega_p, mu.mu_w, delta_params, rng_seed, spacing=x_h.spacing
    )
    x_p = encode_anomaly(x_h, delta, p_final, clamp=delta_params.clamp_output)
    return x_p, p_final
