"""Config-driven building blocks shared by the CLI and external bindings.

Each function here is pure given (volumes, config dict, integer seeds) and
returns its results plus a JSON-ready provenance dict recording every sampled
parameter. Sub-seeds are derived from (master seed, sample id, variant, role)
with a keyed blake2b hash, so they are stable across processes, platforms,
and manifest ordering; anything that invokes the same function with the same
inputs gets bit-identical outputs.
"""

from __future__ import annotations

import hashlib
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__
from .detect import (
    AnomalyMap,
    ConstantSimilarity,
    ShiftSearchParams,
    SsimDissimilarity,
    anomaly_map,
)
from .diffusion import (
    IdentityCodec,
    linear_schedule,
    make_denoiser,
    partial_reconstruct,
    pooled_condition_encoder,
)
from .fluid import IntegrationParams, StepStats, randomize, random_potentials
from .pathology import (
    DeltaParams,
    LesionSeed,
    encode_anomaly,
    estimate_mu_w,
    flip_decision,
    sample_delta,
    seed_probability,
)
from .phantom import PhantomSpec, make_lesion_seed, make_phantom
from .volume import BinaryMask3D, Volume3D, brain_mask


def stable_u64(*parts: object) -> int:
    """Order-sensitive 64-bit hash of stringified parts (process-stable)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def stream_seed(master_seed: int, sample_id: str, variant: int, role: str) -> int:
    return stable_u64(master_seed, sample_id, variant, role)


def select_corrupted(sample_ids: list[str], fraction: float, master_seed: int) -> list[str]:
    """Deterministic subset of round(fraction * n) ids, independent of order."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    k = int(fraction * len(sample_ids) + 0.5)
    ranked = sorted(sample_ids, key=lambda s: (stable_u64(master_seed, "select", s), s))
    return sorted(ranked[:k])


def phantom_from_config(cfg: Mapping[str, Any]) -> tuple[Volume3D, BinaryMask3D, BinaryMask3D, BinaryMask3D]:
    """Phantom volume, white-matter mask, brain mask, and a lesion seed mask."""
    vc = cfg["volume"]
    spec = PhantomSpec(
        dims=tuple(vc["dims"]),
        spacing=tuple(vc["spacing"]),
        seed=int(vc["seed"]),
        smoothness=float(vc["smoothness"]),
        background=float(vc["background"]),
        ventricle=float(vc["ventricle"]),
        gray=float(vc["gray"]),
        white=float(vc["white"]),
    )
    vol, wm, brain = make_phantom(spec)
    lesion = make_lesion_seed(brain, int(vc["lesion_radius"]), seed=int(vc["seed"]))
    return vol, wm, brain, lesion


def _integration_params(cfg: Mapping[str, Any], t_max: float) -> IntegrationParams:
    ic = cfg["integrate"]
    dt = None if ic["auto_dt"] or ic["dt"] is None else float(ic["dt"])
    return IntegrationParams(t_max=float(t_max), dt=dt, safety=float(ic["safety"]))


def randomize_field(
    p0: Volume3D,
    mask: BinaryMask3D,
    cfg: Mapping[str, Any],
    seed: int | None = None,
    t_max: float | None = None,
    on_snapshot: Callable[[int, Volume3D], None] | None = None,
    snapshot_every: int = 0,
) -> tuple[Volume3D, dict[str, Any]]:
    """Transport a seed field through config-drawn potentials.

    ``seed`` defaults to perlin.seed from the config; ``t_max`` defaults to
    integrate.t_max (not sampled; sampling happens in :func:`corrupt_volume`).
    """
    pc = cfg["perlin"]
    used_seed = int(pc["seed"]) if seed is None else int(seed)
    used_t_max = float(cfg["integrate"]["t_max"]) if t_max is None else float(t_max)
    potentials = random_potentials(
        p0.dims,
        p0.spacing,
        seed=used_seed,
        octaves=int(pc["octaves"]),
        base_frequency=float(pc["base_frequency"]),
        persistence=float(pc["persistence"]),
        amplitude_v=float(pc["amplitude_v"]),
        amplitude_d=float(pc["amplitude_d"]),
    )
    stats = StepStats()
    out = randomize(
        p0,
        potentials,
        _integration_params(cfg, used_t_max),
        mask,
        stats=stats,
        on_snapshot=on_snapshot,
        snapshot_every=snapshot_every,
    )
    provenance = {
        "perlin_seed": used_seed,
        "t_max": used_t_max,
        "dt": stats.dt,
        "steps": stats.steps,
        "max_boundedness_violation": stats.max_boundedness_violation,
        "version": __version__,
    }
    return out, provenance


def corrupt_volume(
    x_h: Volume3D,
    lesion: BinaryMask3D,
    cfg: Mapping[str, Any],
    master_seed: int,
    sample_id: str = "sample",
    variant: int = 0,
) -> tuple[Volume3D, Volume3D, dict[str, Any]]:
    """One pseudo-pathology variant; returns (x_p, P_final, provenance).

    Per-variant draws, each from its own derived stream: lesion jitter,
    potential-field seed, integration horizon t_max ~ U[0, integrate.t_max],
    and the delta field seed (which also decides the sign flip).
    """
    dc = cfg["delta"]
    jmax = int(dc["jitter_max"])
    jitter = (0, 0, 0)
    if jmax > 0:
        jrng = np.random.default_rng(stream_seed(master_seed, sample_id, variant, "jitter"))
        jitter = tuple(int(j) for j in jrng.integers(-jmax, jmax + 1, size=3))

    trng = np.random.default_rng(stream_seed(master_seed, sample_id, variant, "t_max"))
    t_max = float(trng.uniform(0.0, float(cfg["integrate"]["t_max"])))
    perlin_seed = stream_seed(master_seed, sample_id, variant, "perlin")
    delta_seed = stream_seed(master_seed, sample_id, variant, "delta")

    brain = brain_mask(x_h, 0.0)
    p0 = seed_probability(LesionSeed(lesion, jitter), brain, x_h.spacing)
    p_final, flow_prov = randomize_field(p0, brain, cfg, seed=perlin_seed, t_max=t_max)

    omega_p = BinaryMask3D(p_final.values > 0.0)
    mu = estimate_mu_w(x_h, brain)
    params = DeltaParams(
        flip_probability=float(dc["flip_probability"]),
        clamp_output=bool(dc["clamp_output"]),
    )
    delta = sample_delta(x_h.dims, omega_p, mu.mu_w, params, delta_seed, spacing=x_h.spacing)
    x_p = encode_anomaly(x_h, delta, p_final, clamp=params.clamp_output)

    provenance = {
        "sample_id": sample_id,
        "variant": variant,
        "master_seed": master_seed,
        "jitter": list(jitter),
        "delta_seed": delta_seed,
        "flip": flip_decision(delta_seed, params.flip_probability),
        "mu_w": mu.mu_w,
        **flow_prov,
    }
    return x_p, p_final, provenance


def reconstruct_volume(
    x: Volume3D, cfg: Mapping[str, Any], seed: int | None = None
) -> tuple[Volume3D, dict[str, Any]]:
    """Partially noise and denoise a volume with the configured plugin denoiser.

    The output is clipped to [0, 1] (plugin denoisers can overshoot slightly
    and downstream detection requires normalized inputs); the pre-clip range
    is recorded in the provenance.
    """
    dc = cfg["diffusion"]
    schedule = linear_schedule(int(dc["T"]), float(dc["beta_1"]), float(dc["beta_T"]))
    den = make_denoiser(str(dc["denoiser"]), schedule, dict(dc["denoiser_params"]))
    ce_cfg = dc["condition_encoder"]
    cond = pooled_condition_encoder(tuple(ce_cfg["pool_dims"]), int(ce_cfg["width"]))
    codec = IdentityCodec(spacing=x.spacing)
    used_seed = int(dc["seed"]) if seed is None else int(seed)
    rng = np.random.default_rng(used_seed)
    raw = partial_reconstruct(x, codec, den, cond, int(dc["T_int"]), schedule, rng)
    lo = float(raw.values.min())
    hi = float(raw.values.max())
    clipped = raw.with_values(np.clip(raw.values, 0.0, 1.0))
    provenance = {
        "T": int(dc["T"]),
        "T_int": int(dc["T_int"]),
        "denoiser": str(dc["denoiser"]),
        "denoiser_params": dict(dc["denoiser_params"]),
        "seed": used_seed,
        "preclip_range": [lo, hi],
        "version": __version__,
    }
    return clipped, provenance


def detect_volumes(
    x0: Volume3D,
    xrec: Volume3D,
    mask: BinaryMask3D | None,
    cfg: Mapping[str, Any],
) -> tuple[AnomalyMap, dict[str, Any]]:
    """Config-driven anomaly map; mask defaults to the support of x0."""
    det = cfg["detect"]
    if mask is None:
        mask = brain_mask(x0, 0.0)
    sim = SsimDissimilarity() if det["similarity"] == "ssim" else ConstantSimilarity(1.0)
    amap = anomaly_map(
        x0,
        xrec,
        mask,
        similarity=sim,
        params=ShiftSearchParams(int(det["max_shift"])),
        median_kernel=int(det["median_kernel"]),
        erode_iters=int(det["erode_iters"]),
    )
    provenance = {
        "shift": list(amap.shift),
        "similarity_weight": amap.similarity,
        "similarity": str(det["similarity"]),
        "max_shift": int(det["max_shift"]),
        "median_kernel": int(det["median_kernel"]),
        "erode_iters": int(det["erode_iters"]),
        "version": __version__,
    }
    return amap, provenance
