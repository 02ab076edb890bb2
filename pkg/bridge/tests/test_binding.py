import hashlib
import subprocess
import sys
import textwrap
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

pytest.importorskip("anomforge_bridge")

from anomforge import (
    ConfigError,
    corrupt_volume,
    detect_volumes,
    encode_anomaly,
    load_config,
    phantom_from_config,
)
from anomforge.volume import Volume3D
from anomforge_bridge import (
    ArrayHandle,
    BufferDtypeError,
    DimsMismatchError,
    bind_corrupt,
    bind_detect,
    bind_encode,
    bind_randomize,
    config_schema,
    version,
)

CFG = {
    "seed": 3,
    "volume": {"dims": [24, 24, 24]},
    "integrate": {"t_max": 1.0},
    "variants_per_sample": 1,
}


def _f64(arr32):
    # same widened layout the binding hands to the engine (x-fastest float64)
    return Volume3D(np.asfortranarray(arr32).astype(np.float64))


@pytest.fixture(scope="module")
def phantom():
    cfg = load_config(None, overrides=CFG, environ={})
    vol, wm, brain, lesion = phantom_from_config(cfg)
    return {
        "cfg": cfg,
        "vol": vol,
        "brain": brain,
        "x32": vol.values.astype(np.float32),
        "les32": lesion.bits.astype(np.float32),
        "brain32": brain.bits.astype(np.float32),
        "lesion": lesion,
    }


def test_corrupt_returns_paired_float32_handles(phantom):
    x_p, p_final = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG)
    for h in (x_p, p_final):
        assert isinstance(h, ArrayHandle)
        assert h.dims == (24, 24, 24)
        assert h.dtype == np.float32
        assert 0.0 <= float(h.array.min()) and float(h.array.max()) <= 1.0
    assert not np.array_equal(x_p.array, phantom["x32"])  # something changed


def test_corrupt_is_deterministic_and_seed_sensitive(phantom):
    a, pa = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG)
    b, pb = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG)
    assert a.tobytes() == b.tobytes()
    assert pa.tobytes() == pb.tobytes()
    c, _ = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG, seed=99)
    assert c.tobytes() != a.tobytes()
    d, _ = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG, variant=1)
    assert d.tobytes() != a.tobytes()


def test_corrupt_matches_direct_engine_call(phantom):
    # the binding adds only buffer translation around corrupt_volume
    x_p, p_final = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG)
    vol = _f64(phantom["x32"])
    want_xp, want_pf, _ = corrupt_volume(vol, phantom["lesion"], phantom["cfg"], 3, "sample", 0)
    assert np.array_equal(x_p.array, want_xp.values.astype(np.float32))
    assert np.array_equal(p_final.array, want_pf.values.astype(np.float32))


def test_corrupt_rejects_mismatched_grids(phantom):
    small = np.zeros((8, 8, 8), dtype=np.float32)
    with pytest.raises(DimsMismatchError):
        bind_corrupt(phantom["x32"], small, config=CFG)


def test_corrupt_propagates_buffer_dtype_errors(phantom):
    with pytest.raises(BufferDtypeError):
        bind_corrupt(phantom["x32"].astype(np.float64), phantom["les32"], config=CFG)


def test_no_binding_call_mutates_its_inputs(phantom):
    x = np.asfortranarray(phantom["x32"])
    les = np.asfortranarray(phantom["les32"])
    x_bytes, les_bytes = x.tobytes(), les.tobytes()
    bind_corrupt(x, les, config=CFG)  # zero-copy path: engine sees the buffers
    bind_detect(x, x, les, config=CFG)
    assert x.tobytes() == x_bytes
    assert les.tobytes() == les_bytes
    assert x.flags.writeable and les.flags.writeable


def test_detect_identical_inputs_give_zero_map(phantom):
    out = bind_detect(phantom["x32"], phantom["x32"], phantom["brain32"], config=CFG)
    assert out.dims == (24, 24, 24)
    assert float(np.abs(out.array).max()) == 0.0


def test_detect_map_stays_normalized(phantom):
    x_p, _ = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG)
    out = bind_detect(x_p, phantom["x32"], phantom["brain32"], config=CFG)
    assert float(out.array.min()) >= 0.0
    assert float(out.array.max()) <= 1.0


def test_detect_matches_direct_engine_call(phantom):
    x_p, _ = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG)
    out = bind_detect(x_p, phantom["x32"], phantom["brain32"], config=CFG)
    amap, _ = detect_volumes(
        _f64(x_p.array),
        _f64(phantom["x32"]),
        phantom["brain"],
        phantom["cfg"],
    )
    assert np.array_equal(out.array, amap.volume.values.astype(np.float32))


def test_randomize_zero_horizon_is_identity(phantom):
    p0 = phantom["les32"]
    out = bind_randomize(p0, phantom["brain32"], config=CFG, t_max=0.0)
    assert np.array_equal(out.array, p0)


def test_randomize_is_deterministic_in_seed(phantom):
    a = bind_randomize(phantom["les32"], phantom["brain32"], config=CFG, seed=5)
    b = bind_randomize(phantom["les32"], phantom["brain32"], config=CFG, seed=5)
    c = bind_randomize(phantom["les32"], phantom["brain32"], config=CFG, seed=6)
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_encode_matches_direct_engine_call(phantom):
    rng = np.random.default_rng(2)
    delta = (rng.random((24, 24, 24)) - 0.5).astype(np.float32)
    p = rng.random((24, 24, 24)).astype(np.float32)
    out = bind_encode(phantom["x32"], delta, p)
    want = encode_anomaly(_f64(phantom["x32"]), _f64(delta), _f64(p), clamp=True)
    assert np.array_equal(out.array, want.values.astype(np.float32))


def test_unknown_config_keys_are_rejected(phantom):
    with pytest.raises(ConfigError, match="perlin.octavez"):
        bind_randomize(
            phantom["les32"],
            phantom["brain32"],
            config={"perlin": {"octavez": 5}},
            t_max=0.0,
        )


def test_version_reports_both_packages():
    v = version()
    assert set(v) == {"bridge", "engine"}
    assert all(isinstance(s, str) and s for s in v.values())


def test_config_schema_is_a_flat_dotted_view():
    schema = config_schema()
    assert schema["seed"] == {"default": 0, "type": "int"}
    assert schema["volume.dims"]["default"] == [64, 64, 64]
    assert schema["integrate.t_max"]["default"] == 4.0
    assert schema["diffusion.denoiser_params"]["opaque"] is True
    # flattened: no entry holds a nested non-opaque dict
    for key, entry in schema.items():
        if not entry.get("opaque"):
            assert not isinstance(entry["default"], dict), key


def test_thread_safety_smoke(phantom):
    def run(_):
        x_p, _ = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG)
        return hashlib.sha256(x_p.tobytes()).hexdigest()

    with ThreadPoolExecutor(max_workers=4) as pool:
        digests = list(pool.map(run, range(8)))
    assert len(set(digests)) == 1


def test_seed_determinism_across_processes(phantom):
    x_p, _ = bind_corrupt(phantom["x32"], phantom["les32"], config=CFG)
    here = hashlib.sha256(x_p.tobytes()).hexdigest()
    script = textwrap.dedent(
        """
        import hashlib
        import numpy as np
        from anomforge import load_config, phantom_from_config
        from anomforge_bridge import bind_corrupt

        CFG = {
            "seed": 3,
            "volume": {"dims": [24, 24, 24]},
            "integrate": {"t_max": 1.0},
            "variants_per_sample": 1,
        }
        vol, wm, brain, lesion = phantom_from_config(load_config(None, overrides=CFG))
        x_p, _ = bind_corrupt(
            vol.values.astype(np.float32), lesion.bits.astype(np.float32), config=CFG
        )
        print(hashlib.sha256(x_p.tobytes()).hexdigest())
        """
    )
    proc = subprocess.run(
        [sys.executable, "-c", script], capture_output=True, text=True, check=True
    )
    assert proc.stdout.strip() == here
