import numpy as np
import pytest

import oracles
from anomforge import (
    BinaryMask3D,
    Volume3D,
    brain_mask,
    crop_or_pad,
    erode,
    median_filter,
    minmax_normalize,
    shift_values,
)


def test_volume_validation():
    with pytest.raises(ValueError):
        Volume3D(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        Volume3D(np.full((2, 2, 2), np.nan))
    with pytest.raises(ValueError):
        Volume3D(np.zeros((2, 2, 2)), spacing=(1.0, 0.0, 1.0))
    v = Volume3D(np.zeros((2, 3, 4), dtype=np.float32), spacing=(1, 2, 3))
    assert v.values.dtype == np.float64
    assert v.dims == (2, 3, 4)
    assert v.spacing == (1.0, 2.0, 3.0)


def test_mask_validation():
    m = BinaryMask3D(np.array([[[0, 1]], [[1, 1]]]))
    assert m.bits.dtype == np.bool_
    assert m.count == 3
    with pytest.raises(ValueError):
        BinaryMask3D(np.array([[[0.5]]]))


def test_minmax_normalize():
    rng = np.random.default_rng(0)
    v = Volume3D(rng.normal(size=(6, 5, 4)))
    out = minmax_normalize(v)
    assert out.values.min() == 0.0
    assert out.values.max() == 1.0
    # strictly monotone values keep their ordering
    flat_in = np.argsort(v.values.ravel())
    flat_out = np.argsort(out.values.ravel())
    assert np.array_equal(flat_in, flat_out)


def test_minmax_normalize_constant_is_zero():
    out = minmax_normalize(Volume3D(np.full((3, 3, 3), 7.5)))
    assert np.array_equal(out.values, np.zeros((3, 3, 3)))


def test_brain_mask_threshold():
    v = Volume3D(np.array([[[0.0, 1e-12, 0.5]]]))
    assert brain_mask(v).count == 2
    assert brain_mask(v, eps=1e-9).count == 1
    with pytest.raises(ValueError):
        brain_mask(v, eps=-1.0)


def test_erode_matches_brute_force():
    rng = np.random.default_rng(3)
    bits = rng.random((9, 8, 7)) > 0.35
    for iters in (0, 1, 2, 3):
        got = erode(BinaryMask3D(bits), iters).bits
        want = oracles.erode_6(bits, iters)
        assert np.array_equal(got, want), f"iters={iters}"


def test_erode_composition():
    rng = np.random.default_rng(4)
    bits = rng.random((10, 10, 10)) > 0.3
    m = BinaryMask3D(bits)
    assert np.array_equal(erode(m, 3).bits, erode(erode(m, 2), 1).bits)
    with pytest.raises(ValueError):
        erode(m, -1)


def test_erode_full_cube_retreats_from_border():
    m = BinaryMask3D(np.ones((5, 5, 5), dtype=bool))
    e = erode(m, 1)
    assert e.count == 27
    assert e.bits[2, 2, 2]
    assert not e.bits[0, 2, 2]


def test_median_filter_matches_brute_force():
    rng = np.random.default_rng(5)
    v = Volume3D(rng.random((8, 7, 6)))
    for k in (1, 3, 5):
        got = median_filter(v, k).values
        want = v.values if k == 1 else oracles.median_edge_replicate(v.values, k)
        assert np.array_equal(got, want), f"k={k}"


def test_median_filter_stays_within_bounds():
    rng = np.random.default_rng(6)
    v = Volume3D(rng.random((9, 9, 9)))
    out = median_filter(v, 5).values
    assert out.min() >= v.values.min()
    assert out.max() <= v.values.max()
    with pytest.raises(ValueError):
        median_filter(v, 4)
    with pytest.raises(ValueError):
        median_filter(v, 0)


def test_crop_or_pad_roundtrip_and_placement():
    rng = np.random.default_rng(7)
    v = Volume3D(rng.random((4, 5, 6)))
    padded = crop_or_pad(v, (7, 5, 9))
    assert padded.dims == (7, 5, 9)
    # odd pad of 3 puts 2 low, 1 high
    assert np.array_equal(padded.values[2:6, :, 2:8], v.values)
    assert padded.values.sum() == pytest.approx(v.values.sum())
    back = crop_or_pad(padded, (4, 5, 6))
    assert np.array_equal(back.values, v.values)


def test_crop_or_pad_crop_side():
    v = Volume3D(np.arange(5, dtype=float).reshape(5, 1, 1))
    out = crop_or_pad(v, (2, 1, 1))
    # odd crop of 3 removes 2 low, 1 high
    assert out.values[:, 0, 0].tolist() == [2.0, 3.0]
    with pytest.raises(ValueError):
        crop_or_pad(v, (0, 1, 1))


def test_shift_values():
    a = np.arange(24, dtype=float).reshape(2, 3, 4)
    s = shift_values(a, (1, 0, 0))
    assert np.array_equal(s[1], a[0])
    assert np.array_equal(s[0], np.zeros((3, 4)))
    assert np.array_equal(shift_values(a, (0, 0, -4)), np.zeros_like(a))
    b = np.ones((2, 2, 2), dtype=bool)
    sb = shift_values(b, (0, 1, 0), fill=False)
    assert sb.sum() == 4
