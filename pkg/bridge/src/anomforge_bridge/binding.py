"""Thin scripting bindings over the volume engine.

Meant for on-the-fly augmentation inside training loops: hand in float32
buffers, get float32 buffers back, no files in between. Every function is
stateless and pure; inputs are treated as read-only for the duration of the
call, and identical (config, seed) inputs produce bit-identical output
buffers in any process or thread.

Configuration resolves exactly as for the command-line tool (defaults, then
``ANOMFORGE_*`` environment variables, then the mapping passed here), and
outputs are cast to float32 the same way the CLI casts them before writing,
so a binding result matches the corresponding CLI output payload byte for
byte.
"""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np

import anomforge
from anomforge import (
    BinaryMask3D,
    Volume3D,
    corrupt_volume,
    default_config,
    detect_volumes,
    encode_anomaly,
    load_config,
    randomize_field,
)

from .handles import ArrayHandle, DimsMismatchError

Spacing = tuple[float, float, float]


def _resolve(config: Mapping[str, Any] | None, seed: int | None = None) -> dict[str, Any]:
    overrides = dict(config) if config else {}
    if seed is not None:
        overrides["seed"] = int(seed)
    return load_config(None, overrides=overrides)


def _as_handle(x: ArrayHandle | np.ndarray) -> ArrayHandle:
    return x if isinstance(x, ArrayHandle) else ArrayHandle.from_numpy(x)


def _same_grid(*handles: ArrayHandle) -> None:
    dims = {h.dims for h in handles}
    if len(dims) > 1:
        raise DimsMismatchError(f"volumes must share one grid, got dims {sorted(dims)}")


def _to_volume(h: ArrayHandle, spacing: Spacing) -> Volume3D:
    # float64 widening is exact; the engine computes in doubles throughout
    return Volume3D(h.array.astype(np.float64), spacing)


def _to_mask(h: ArrayHandle) -> BinaryMask3D:
    # same cut the CLI applies when reading mask files
    return BinaryMask3D(h.array > 0.5)


def _from_volume(vol: Volume3D) -> ArrayHandle:
    # identical cast + layout to what write_nifti puts in a payload
    buf = np.asfortranarray(vol.values.astype("<f4"))
    buf.flags.writeable = False
    return ArrayHandle(buf, copied=False)


def bind_corrupt(
    x_h: ArrayHandle | np.ndarray,
    lesion: ArrayHandle | np.ndarray,
    config: Mapping[str, Any] | None = None,
    seed: int | None = None,
    sample_id: str = "sample",
    variant: int = 0,
    spacing: Spacing = (1.0, 1.0, 1.0),
) -> tuple[ArrayHandle, ArrayHandle]:
    """One pseudo-pathology variant of a healthy volume.

    Returns (x_p, P_final) handles. ``lesion`` is a seed mask (anything
    above 0.5 counts). ``seed`` overrides the config master seed; sample_id
    and variant address independent random streams, matching the CLI's
    per-variant outputs.
    """
    hx, hl = _as_handle(x_h), _as_handle(lesion)
    _same_grid(hx, hl)
    cfg = _resolve(config, seed)
    x_p, p_final, _ = corrupt_volume(
        _to_volume(hx, spacing), _to_mask(hl), cfg, int(cfg["seed"]), sample_id, int(variant)
    )
    return _from_volume(x_p), _from_volume(p_final)


def bind_detect(
    x0: ArrayHandle | np.ndarray,
    xrec: ArrayHandle | np.ndarray,
    mask: ArrayHandle | np.ndarray | None = None,
    config: Mapping[str, Any] | None = None,
    spacing: Spacing = (1.0, 1.0, 1.0),
) -> ArrayHandle:
    """Anomaly map for an input/reconstruction pair, normalized to [0, 1].

    ``mask`` defaults to the support of ``x0``, as in the CLI.
    """
    h0, hr = _as_handle(x0), _as_handle(xrec)
    handles = [h0, hr]
    hm = None
    if mask is not None:
        hm = _as_handle(mask)
        handles.append(hm)
    _same_grid(*handles)
    cfg = _resolve(config)
    amap, _ = detect_volumes(
        _to_volume(h0, spacing),
        _to_volume(hr, spacing),
        _to_mask(hm) if hm is not None else None,
        cfg,
    )
    return _from_volume(amap.volume)


def bind_randomize(
    p0: ArrayHandle | np.ndarray,
    mask: ArrayHandle | np.ndarray,
    config: Mapping[str, Any] | None = None,
    seed: int | None = None,
    t_max: float | None = None,
    spacing: Spacing = (1.0, 1.0, 1.0),
) -> ArrayHandle:
    """Transport a probability field through config-drawn random flow.

    ``seed`` and ``t_max`` default to perlin.seed and integrate.t_max from
    the resolved config.
    """
    hp, hm = _as_handle(p0), _as_handle(mask)
    _same_grid(hp, hm)
    cfg = _resolve(config)
    out, _ = randomize_field(_to_volume(hp, spacing), _to_mask(hm), cfg, seed=seed, t_max=t_max)
    return _from_volume(out)


def bind_encode(
    x_h: ArrayHandle | np.ndarray,
    delta: ArrayHandle | np.ndarray,
    p: ArrayHandle | np.ndarray,
    clamp: bool = True,
    spacing: Spacing = (1.0, 1.0, 1.0),
) -> ArrayHandle:
    """Blend a signed intensity offset into a volume, weighted by ``p``."""
    hx, hd, hp = _as_handle(x_h), _as_handle(delta), _as_handle(p)
    _same_grid(hx, hd, hp)
    out = encode_anomaly(
        _to_volume(hx, spacing), _to_volume(hd, spacing), _to_volume(hp, spacing), clamp=clamp
    )
    return _from_volume(out)


def version() -> dict[str, str]:
    """Versions of the binding layer and the engine underneath it."""
    from . import __version__

    return {"bridge": __version__, "engine": anomforge.__version__}


def config_schema() -> dict[str, dict[str, Any]]:
    """Flat dotted-key view of every config knob with defaults and types.

    ``diffusion.denoiser_params`` is a single opaque mapping passed through
    to the denoiser plugin, so it appears as one entry rather than being
    flattened.
    """
    flat: dict[str, dict[str, Any]] = {}

    def walk(prefix: str, node: Mapping[str, Any]) -> None:
        for key, value in sorted(node.items()):
            dotted = f"{prefix}.{key}" if prefix else key
            if isinstance(value, dict) and key != "denoiser_params":
                walk(dotted, value)
            else:
                entry: dict[str, Any] = {"default": value, "type": type(value).__name__}
                if key == "denoiser_params":
                    entry["opaque"] = True
                flat[dotted] = entry

    walk("", default_config())
    return flat
