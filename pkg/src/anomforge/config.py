"""Run configuration: defaults, JSON loading, env overrides, validation.

One nested dict drives every CLI subcommand. Precedence, lowest to highest:
built-in defaults, the ``--config`` JSON file, ``ANOMFORGE_*`` environment
variables, explicit CLI flags. Unknown keys are rejected rather than ignored
so typos cannot silently fall back to defaults.

Environment overrides name top-level keys directly (``ANOMFORGE_SEED=7``) and
nested keys with a double underscore (``ANOMFORGE_PERLIN__OCTAVES=6``).
Values are parsed as JSON when possible, else taken as strings.
"""

from __future__ import annotations

import copy
import json
import os
from typing import Any, Mapping

ENV_PREFIX = "ANOMFORGE_"


class ConfigError(ValueError):
    """Malformed, unknown, or out-of-range configuration."""


def default_config() -> dict[str, Any]:
    return {
        "seed": 0,
        "out_dir": ".",
        "workers": 1,
        "corruption_fraction": 0.8,
        "variants_per_sample": 8,
        "volume": {
            "dims": [64, 64, 64],
            "spacing": [1.0, 1.0, 1.0],
            "seed": 0,
            "smoothness": 1.0,
            "background": 0.0,
            "ventricle": 0.15,
            "gray": 0.4,
            "white": 0.8,
            "lesion_radius": 3,
        },
        "perlin": {
            "seed": 0,
            "octaves": 4,
            "base_frequency": 2.0,
            "persistence": 0.5,
            "amplitude_v": 0.5,
            "amplitude_d": 0.25,
        },
        "integrate": {
            "t_max": 4.0,
            "dt": None,
            "auto_dt": True,
            "safety": 0.9,
        },
        "delta": {
            "flip_probability": 0.2,
            "clamp_output": True,
            "jitter_max": 2,
        },
        "diffusion": {
            "T": 1000,
            "beta_1": 0.0015,
            "beta_T": 0.0195,
            "T_int": 250,
            "seed": 0,
            "denoiser": "zero",
            "denoiser_params": {},
            "condition_encoder": {
                "pool_dims": [1, 8, 8, 8],
                "width": 1280,
            },
        },
        "detect": {
            "max_shift": 2,
            "similarity": "ssim",
            "median_kernel": 5,
            "erode_iters": 6,
        },
        "metrics": {
            "n_thresholds": 256,
            "gt_threshold": 0.5,
        },
    }


def _merge(base: dict, override: Mapping, path: str) -> None:
    for key, value in override.items():
        here = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and key != "denoiser_params":
            if not isinstance(value, Mapping):
                raise ConfigError(f"{here} must be an object")
            _merge(base[key], value, here)
        else:
            base[key] = copy.deepcopy(value)


def _env_overrides(environ: Mapping[str, str]) -> dict:
    out: dict[str, Any] = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        dotted = name[len(ENV_PREFIX) :].lower().split("__")
        try:
            value: Any = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        for part in dotted[:-1]:
            node = node.setdefault(part, {})
        node[dotted[-1]] = value
    return out


_NUMERIC_RANGES: dict[str, tuple[float, float]] = {
    # key path -> inclusive bounds
    "corruption_fraction": (0.0, 1.0),
    "integrate.safety": (1e-9, 1.0),
    "delta.flip_probability": (0.0, 1.0),
    "metrics.gt_threshold": (0.0, 1.0),
}

_POSITIVE_INTS = (
    "variants_per_sample",
    "workers",
    "perlin.octaves",
    "diffusion.T",
    "metrics.n_thresholds",
    "volume.lesion_radius",
)

_NONNEGATIVE = (
    "integrate.t_max",
    "perlin.amplitude_v",
    "perlin.amplitude_d",
    "detect.max_shift",
    "detect.erode_iters",
    "delta.jitter_max",
    "diffusion.T_int",
    "volume.smoothness",
)


def _get(cfg: Mapping, dotted: str) -> Any:
    node: Any = cfg
    for part in dotted.split("."):
        node = node[part]
    return node


def validate_config(cfg: Mapping[str, Any]) -> None:
    """Cheap structural checks; deep validation happens in the typed layers."""
    for dotted, (lo, hi) in _NUMERIC_RANGES.items():
        v = _get(cfg, dotted)
        if not isinstance(v, (int, float)) or not lo <= float(v) <= hi:
            raise ConfigError(f"{dotted} must lie in [{lo}, {hi}], got {v!r}")
    for dotted in _POSITIVE_INTS:
        v = _get(cfg, dotted)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"{dotted} must be a positive integer, got {v!r}")
    for dotted in _NONNEGATIVE:
        v = _get(cfg, dotted)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or float(v) < 0.0:
            raise ConfigError(f"{dotted} must be a nonnegative number, got {v!r}")
    dt = _get(cfg, "integrate.dt")
    if dt is not None and (not isinstance(dt, (int, float)) or float(dt) <= 0.0):
        raise ConfigError(f"integrate.dt must be null or a positive number, got {dt!r}")
    k = _get(cfg, "detect.median_kernel")
    if not isinstance(k, int) or k < 1 or k % 2 == 0:
        raise ConfigError(f"detect.median_kernel must be a positive odd integer, got {k!r}")
    for dotted, n in (("volume.dims", 3), ("volume.spacing", 3)):
        v = _get(cfg, dotted)
        if not isinstance(v, (list, tuple)) or len(v) != n:
            raise ConfigError(f"{dotted} must be a length-{n} list, got {v!r}")
    sim = _get(cfg, "detect.similarity")
    if sim not in ("ssim", "constant"):
        raise ConfigError(f"detect.similarity must be 'ssim' or 'constant', got {sim!r}")


def load_config(
    path: str | None = None,
    overrides: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
) -> dict[str, Any]:
    """Resolve the effective config (defaults < file < env < overrides)."""
    cfg = default_config()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        _merge(cfg, file_cfg, "")
    env = _env_overrides(os.environ if environ is None else environ)
    if env:
        _merge(cfg, env, "")
    if overrides:
        _merge(cfg, overrides, "")
    validate_config(cfg)
    return cfg
