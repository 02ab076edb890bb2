import gzip
import struct

import numpy as np
import pytest

from anomforge import NiftiFormatError, Volume3D, read_nifti, write_nifti


def _roundtrip(tmp_path, name, vol):
    path = str(tmp_path / name)
    write_nifti(vol, path)
    return read_nifti(path)


def test_roundtrip_nii(tmp_path):
    rng = np.random.default_rng(0)
    vol = Volume3D(rng.random((6, 5, 4)), spacing=(1.0, 1.5, 2.0))
    back = _roundtrip(tmp_path, "a.nii", vol)
    assert back.dims == vol.dims
    assert back.spacing == vol.spacing
    assert np.array_equal(back.values, vol.values.astype(np.float32).astype(np.float64))


def test_roundtrip_nii_gz(tmp_path):
    rng = np.random.default_rng(1)
    vol = Volume3D(rng.normal(size=(3, 7, 5)))
    back = _roundtrip(tmp_path, "b.nii.gz", vol)
    assert np.array_equal(back.values, vol.values.astype(np.float32).astype(np.float64))


def test_float32_values_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(2)
    raw = rng.random((4, 4, 4)).astype(np.float32).astype(np.float64)
    back = _roundtrip(tmp_path, "c.nii", Volume3D(raw))
    assert np.array_equal(back.values, raw)


def test_rewrite_is_byte_stable(tmp_path):
    rng = np.random.default_rng(3)
    vol = Volume3D(rng.random((5, 6, 7)))
    for name in ("d.nii", "d.nii.gz"):
        p1 = tmp_path / ("one_" + name)
        p2 = tmp_path / ("two_" + name)
        write_nifti(vol, str(p1))
        write_nifti(vol, str(p2))
        assert p1.read_bytes() == p2.read_bytes(), name


def test_header_fields(tmp_path):
    vol = Volume3D(np.zeros((2, 3, 4)), spacing=(0.5, 1.0, 2.0))
    path = str(tmp_path / "e.nii")
    write_nifti(vol, path)
    blob = open(path, "rb").read()
    assert struct.unpack_from("<i", blob, 0)[0] == 348
    dim = struct.unpack_from("<8h", blob, 40)
    assert dim[:4] == (3, 2, 3, 4)
    assert struct.unpack_from("<h", blob, 70)[0] == 16  # float32 code
    pixdim = struct.unpack_from("<8f", blob, 76)
    assert pixdim[1:4] == (0.5, 1.0, 2.0)
    assert struct.unpack_from("<f", blob, 108)[0] == 352.0
    assert blob[344:348] == b"n+1\x00"
    assert len(blob) == 352 + 4 * 2 * 3 * 4


def test_payload_is_fortran_order(tmp_path):
    vol = Volume3D(np.arange(8, dtype=float).reshape(2, 2, 2))
    path = str(tmp_path / "f.nii")
    write_nifti(vol, path)
    blob = open(path, "rb").read()
    payload = np.frombuffer(blob[352:], dtype="<f4")
    want = np.asfortranarray(vol.values.astype(np.float32)).ravel(order="F")
    assert np.array_equal(payload, want)


def _synth(dim, datatype, payload, *, order=">", scl=(0.0, 0.0), pixdim=None):
    """Build a minimal single-file header+payload blob by hand."""
    hdr = bytearray(348)
    struct.pack_into(order + "i", hdr, 0, 348)
    struct.pack_into(order + "8h", hdr, 40, 3, *dim, 1, 1, 1, 1)
    struct.pack_into(order + "h", hdr, 70, datatype)
    pd = pixdim or (1.0, 1.0, 1.0)
    struct.pack_into(order + "8f", hdr, 76, 1.0, *pd, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into(order + "f", hdr, 108, 352.0)
    struct.pack_into(order + "2f", hdr, 112, *scl)
    hdr[344:348] = b"n+1\x00"
    return bytes(hdr) + b"\x00" * 4 + payload


def test_read_big_endian(tmp_path):
    vals = np.arange(6, dtype=">f4").reshape(1, 2, 3)
    blob = _synth((1, 2, 3), 16, vals.ravel(order="F").tobytes(), order=">")
    path = tmp_path / "be.nii"
    path.write_bytes(blob)
    vol = read_nifti(str(path))
    assert np.array_equal(vol.values, vals.astype(np.float64))


def test_read_uint8_and_int16_with_scaling(tmp_path):
    raw = np.array([0, 1, 2, 250, 3, 4], dtype=np.uint8)
    blob = _synth((1, 2, 3), 2, raw.tobytes(), order="<", scl=(0.5, 10.0))
    p = tmp_path / "u8.nii"
    p.write_bytes(blob)
    vol = read_nifti(str(p))
    want = (raw.reshape(3, 2, 1).transpose(2, 1, 0)).astype(np.float64) * 0.5 + 10.0
    assert np.array_equal(vol.values, want)

    raw16 = np.array([-5, 0, 7, 300, -2, 9], dtype="<i2")
    blob = _synth((1, 2, 3), 4, raw16.tobytes(), order="<")
    p = tmp_path / "i16.nii"
    p.write_bytes(blob)
    vol = read_nifti(str(p))
    assert vol.values.min() == -5.0 and vol.values.max() == 300.0


def test_read_gzip_sniffing(tmp_path):
    vals = np.ones((2, 2, 2), dtype="<f4")
    blob = _synth((2, 2, 2), 16, vals.ravel(order="F").tobytes(), order="<")
    p = tmp_path / "misnamed.nii"
    p.write_bytes(gzip.compress(blob))
    vol = read_nifti(str(p))
    assert np.array_equal(vol.values, np.ones((2, 2, 2)))


def test_read_rejects_bad_magic(tmp_path):
    vals = np.zeros(8, dtype="<f4")
    blob = bytearray(_synth((2, 2, 2), 16, vals.tobytes(), order="<"))
    blob[344:348] = b"bad\x00"
    p = tmp_path / "bad.nii"
    p.write_bytes(bytes(blob))
    with pytest.raises(NiftiFormatError):
        read_nifti(str(p))


def test_read_rejects_truncated_payload(tmp_path):
    vals = np.zeros(8, dtype="<f4")
    blob = _synth((2, 2, 2), 16, vals.tobytes()[:-4], order="<")
    p = tmp_path / "short.nii"
    p.write_bytes(blob)
    with pytest.raises(NiftiFormatError):
        read_nifti(str(p))


def test_read_rejects_non_3d(tmp_path):
    vals = np.zeros(8, dtype="<f4")
    blob = bytearray(_synth((2, 2, 2), 16, vals.tobytes(), order="<"))
    struct.pack_into("<h", blob, 40, 4)
    p = tmp_path / "4d.nii"
    p.write_bytes(bytes(blob))
    with pytest.raises(NiftiFormatError):
        read_nifti(str(p))


def test_read_rejects_unsupported_datatype(tmp_path):
    vals = np.zeros(8, dtype="<f8")
    blob = _synth((2, 2, 2), 64, vals.tobytes(), order="<")
    p = tmp_path / "f64.nii"
    p.write_bytes(blob)
    with pytest.raises(NiftiFormatError):
        read_nifti(str(p))


def test_read_rejects_tiny_file(tmp_path):
    p = tmp_path / "tiny.nii"
    p.write_bytes(b"\x00" * 100)
    with pytest.raises(NiftiFormatError):
        read_nifti(str(p))


def test_nonpositive_pixdim_defaults_to_one(tmp_path):
    vals = np.zeros(8, dtype="<f4")
    blob = _synth((2, 2, 2), 16, vals.tobytes(), order="<", pixdim=(0.0, -1.0, 2.0))
    p = tmp_path / "pd.nii"
    p.write_bytes(blob)
    vol = read_nifti(str(p))
    assert vol.spacing == (1.0, 1.0, 2.0)
