"""Single-file NIfTI-1 I/O for 3-D volumes.

Scope is deliberately narrow: one ``.nii`` / ``.nii.gz`` file per volume,
exactly three spatial dimensions, voxel data stored as float32 (written) or
uint8 / int16 / float32 (read). Writes are always little-endian; reads accept
either byte order. Orientation metadata (qform/sform) is ignored apart from
the voxel spacing in ``pixdim``.

Header layout (348 bytes, NIfTI-1):

    offset  type   field
         0  i      sizeof_hdr        must be 348
        40  8h     dim               dim[0]=#dims, dim[1..3]=nx,ny,nz
        70  h      datatype          2=uint8, 4=int16, 16=float32
        72  h      bitpix
        76  8f     pixdim            pixdim[1..3]=voxel spacing
       108  f      vox_offset        byte offset of the payload
       112  f      scl_slope         payload scaling (slope*x + inter)
       116  f      scl_inter
       344  4s     magic             b"n+1\\0" for single-file
"""

from __future__ import annotations

import gzip
import os
import struct
import tempfile

import numpy as np

from .volume import Volume3D

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
VOX_OFFSET = 352  # header + 4 zero bytes (no extensions)

DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16

_DTYPES = {DT_UINT8: "u1", DT_INT16: "i2", DT_FLOAT32: "f4"}
_BITPIX = {DT_UINT8: 8, DT_INT16: 16, DT_FLOAT32: 32}

# One format covering the whole 348-byte header, minus the endianness prefix.
_HDR_FMT = (
    "i"      # sizeof_hdr
    "10s"    # data_type (unused)
    "18s"    # db_name (unused)
    "i"      # extents
    "h"      # session_error
    "b"      # regular
    "b"      # dim_info
    "8h"     # dim
    "3f"     # intent_p1..p3
    "h"      # intent_code
    "h"      # datatype
    "h"      # bitpix
    "h"      # slice_start
    "8f"     # pixdim
    "f"      # vox_offset
    "f"      # scl_slope
    "f"      # scl_inter
    "h"      # slice_end
    "b"      # slice_code
    "b"      # xyzt_units
    "f"      # cal_max
    "f"      # cal_min
    "f"      # slice_duration
    "f"      # toffset
    "i"      # glmax
    "i"      # glmin
    "80s"    # descrip
    "24s"    # aux_file
    "h"      # qform_code
    "h"      # sform_code
    "6f"     # quatern_b..d, qoffset_x..z
    "4f4f4f" # srow_x, srow_y, srow_z
    "16s"    # intent_name
    "4s"     # magic
)
assert struct.calcsize("<" + _HDR_FMT) == HEADER_SIZE

_UNITS_MM = 2  # xyzt_units spatial code


class NiftiFormatError(ValueError):
    """Raised for malformed or out-of-scope NIfTI input."""


def _atomic_write_bytes(path: str, blob: bytes) -> None:
    """Write via a temp file in the destination directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_nifti(vol: Volume3D, path: str) -> None:
    """Write a volume as single-file NIfTI-1, float32, little-endian.

    Paths ending in ``.gz`` are gzip-compressed with a zeroed mtime so that
    identical volumes produce byte-identical files.
    """
    payload = np.asfortranarray(vol.values.astype("<f4"))
    if not np.all(np.isfinite(payload)):
        raise ValueError("values overflow float32; refusing to write non-finite payload")

    nx, ny, nz = vol.dims
    sx, sy, sz = vol.spacing
    header = struct.pack(
        "<" + _HDR_FMT,
        HEADER_SIZE,
        b"", b"",
        0, 0, 0, 0,
        3, nx, ny, nz, 1, 1, 1, 1,            # dim
        0.0, 0.0, 0.0,
        0,                                     # intent_code
        DT_FLOAT32,
        _BITPIX[DT_FLOAT32],
        0,
        1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0,   # pixdim (qfac=1)
        float(VOX_OFFSET),
        1.0, 0.0,                              # scl_slope, scl_inter
        0, 0,
        _UNITS_MM,
        0.0, 0.0, 0.0, 0.0,
        0, 0,
        b"", b"",
        0, 0,                                  # qform, sform unused
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        b"",
        MAGIC_SINGLE,
    )
    blob = header + b"\x00" * (VOX_OFFSET - HEADER_SIZE) + payload.tobytes(order="F")
    if str(path).endswith(".gz"):
        blob = gzip.compress(blob, compresslevel=6, mtime=0)
    _atomic_write_bytes(str(path), blob)


def read_nifti(path: str) -> Volume3D:
    """Read a single-file NIfTI-1 volume (little- or big-endian)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < HEADER_SIZE:
        raise NiftiFormatError(f"file too short for a NIfTI-1 header ({len(raw)} bytes)")

    magic = raw[344:348]
    if magic != MAGIC_SINGLE:
        raise NiftiFormatError(f"bad magic {magic!r}; expected single-file NIfTI-1 {MAGIC_SINGLE!r}")

    byteorder = None
    for bo in ("<", ">"):
        if struct.unpack_from(bo + "i", raw, 0)[0] == HEADER_SIZE:
            byteorder = bo
            break
    if byteorder is None:
        raise NiftiFormatError("sizeof_hdr is not 348 in either byte order")

    fields = struct.unpack_from(byteorder + _HDR_FMT, raw, 0)
    dim = fields[7:15]
    datatype = fields[19]
    pixdim = fields[22:30]
    vox_offset = int(round(fields[30]))
    scl_slope = float(fields[31])
    scl_inter = float(fields[32])

    if dim[0] != 3:
        raise NiftiFormatError(f"unsupported dimensionality: dim[0]={dim[0]}, need exactly 3")
    nx, ny, nz = (int(d) for d in dim[1:4])
    if min(nx, ny, nz) < 1:
        raise NiftiFormatError(f"non-positive grid extents {(nx, ny, nz)}")
    if datatype not in _DTYPES:
        raise NiftiFormatError(f"unsupported datatype code {datatype}")
    if vox_offset < HEADER_SIZE:
        raise NiftiFormatError(f"vox_offset {vox_offset} overlaps the header")

    dt = np.dtype(byteorder + _DTYPES[datatype])
    count = nx * ny * nz
    end = vox_offset + count * dt.itemsize
    if len(raw) < end:
        raise NiftiFormatError(f"truncated payload: need {end} bytes, have {len(raw)}")

    flat = np.frombuffer(raw, dtype=dt, count=count, offset=vox_offset)
    values = flat.reshape((nx, ny, nz), order="F").astype(np.float64)
    # scl_slope == 0 means "no scaling" by convention
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        if scl_slope == 0.0:
            scl_slope = 1.0
        values = values * scl_slope + scl_inter

    spacing = tuple(float(p) if p > 0 else 1.0 for p in pixdim[1:4])
    return Volume3D(values, spacing)
