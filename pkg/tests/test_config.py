import json

import pytest

from anomforge import ConfigError, default_config, load_config, validate_config


def test_defaults_are_valid_and_fresh():
    cfg = default_config()
    validate_config(cfg)
    cfg["volume"]["dims"] = [16, 16, 16]
    assert default_config()["volume"]["dims"] == [64, 64, 64]  # no shared state


def test_default_values():
    cfg = default_config()
    assert cfg["corruption_fraction"] == 0.8
    assert cfg["variants_per_sample"] == 8
    assert cfg["diffusion"]["T"] == 1000
    assert cfg["diffusion"]["beta_1"] == 0.0015
    assert cfg["diffusion"]["beta_T"] == 0.0195
    assert cfg["diffusion"]["T_int"] == 250
    assert cfg["diffusion"]["condition_encoder"]["width"] == 1280
    assert cfg["detect"]["max_shift"] == 2
    assert cfg["detect"]["median_kernel"] == 5
    assert cfg["detect"]["erode_iters"] == 6
    assert cfg["integrate"]["t_max"] == 4.0
    assert cfg["delta"]["flip_probability"] == 0.2


def test_file_override(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"seed": 7, "perlin": {"octaves": 2}}))
    cfg = load_config(str(p))
    assert cfg["seed"] == 7
    assert cfg["perlin"]["octaves"] == 2
    assert cfg["perlin"]["persistence"] == 0.5  # untouched sibling


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"perlin": {"octavez": 2}}))
    with pytest.raises(ConfigError, match="perlin.octavez"):
        load_config(str(p))
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(overrides={"bogus": 1})


def test_denoiser_params_is_opaque():
    cfg = load_config(
        overrides={
            "diffusion": {
                "denoiser": "gaussian-oracle",
                "denoiser_params": {"mu": 0.4, "var": 0.01},
            }
        }
    )
    assert cfg["diffusion"]["denoiser_params"] == {"mu": 0.4, "var": 0.01}


def test_env_overrides():
    env = {
        "ANOMFORGE_SEED": "9",
        "ANOMFORGE_PERLIN__OCTAVES": "3",
        "ANOMFORGE_DETECT__SIMILARITY": "constant",
        "HOME": "/root",
    }
    cfg = load_config(environ=env)
    assert cfg["seed"] == 9
    assert cfg["perlin"]["octaves"] == 3
    assert cfg["detect"]["similarity"] == "constant"


def test_precedence_defaults_file_env_overrides(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"seed": 1, "workers": 2, "variants_per_sample": 3}))
    cfg = load_config(
        str(p),
        overrides={"seed": 3},
        environ={"ANOMFORGE_SEED": "2", "ANOMFORGE_WORKERS": "5"},
    )
    assert cfg["seed"] == 3  # overrides beat env
    assert cfg["workers"] == 5  # env beats file
    assert cfg["variants_per_sample"] == 3  # file beats defaults


def test_validation_failures():
    bad = [
        {"corruption_fraction": 1.5},
        {"variants_per_sample": 0},
        {"diffusion": {"T": -1}},
        {"detect": {"median_kernel": 4}},
        {"detect": {"similarity": "psnr"}},
        {"volume": {"dims": [64, 64]}},
        {"integrate": {"dt": -0.5}},
        {"integrate": {"safety": 0.0}},
        {"delta": {"flip_probability": 2.0}},
    ]
    for overrides in bad:
        with pytest.raises(ConfigError):
            load_config(overrides=overrides)


def test_bad_config_file(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(missing))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(broken))
    listy = tmp_path / "list.json"
    listy.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(str(listy))


def test_env_non_json_values_pass_through_as_strings():
    cfg = load_config(environ={"ANOMFORGE_DETECT__SIMILARITY": "ssim"})
    assert cfg["detect"]["similarity"] == "ssim"
