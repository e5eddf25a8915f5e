"""3D volumes, binary masks, and a minimal uncompressed NIfTI-1 reader/writer.

Voxel (i, j, k) lives at flat offset i + j*nx + k*nx*ny (x fastest). Arrays are
held as shape (nx, ny, nz); serialization always uses Fortran-order raveling so
files are bit-exact regardless of in-memory layout.

Only the subset needed by this toolkit is supported: 348-byte headers, magic
"n+1\\0", little-endian, dtypes uint8/int16/float32, vox_offset 352. The qform
and sform rotation matrices are ignored; spacing and offset are honored.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CompressedInput,
    GeometryMismatch,
    IoFailure,
    LossyDtype,
    MalformedHeader,
    NonBinaryMask,
    UnsupportedDatatype,
)

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

# NIfTI datatype codes for the supported subset.
DTYPE_CODES = {2: np.uint8, 4: np.int16, 16: np.float32}
DTYPE_NAMES = {"uint8": 2, "int16": 4, "float32": 16}
_BITPIX = {2: 8, 4: 16, 16: 32}


def _as_tuple3(values, cast):
    t = tuple(cast(v) for v in values)
    if len(t) != 3:
        raise ValueError(f"expected 3 components, got {len(t)}")
    return t


@dataclass(frozen=True)
class Volume:
    """A 3D scalar grid with spacing/origin metadata. Treat as read-only."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"volume data must be 3D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("volume contains non-finite values")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", _as_tuple3(self.spacing, float))
        object.__setattr__(self, "origin", _as_tuple3(self.origin, float))
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def dims(self):
        return self.data.shape

    def same_geometry(self, other) -> bool:
        return self.dims == other.dims

    def require_same_geometry(self, other, what="volumes"):
        if self.dims != other.dims:
            raise GeometryMismatch(
                f"{what} have mismatched dims {self.dims} vs {other.dims}"
            )


@dataclass(frozen=True)
class BinaryMask:
    """A {0,1} grid geometrically paired with a Volume."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"mask data must be 3D, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            vals = np.unique(arr)
            if not np.all(np.isin(vals, (0, 1))):
                raise NonBinaryMask(f"mask values outside {{0,1}}: {vals[:8]}")
            arr = arr.astype(np.uint8)
        elif arr.max(initial=0) > 1:
            raise NonBinaryMask("mask contains uint8 values > 1")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", _as_tuple3(self.spacing, float))
        object.__setattr__(self, "origin", _as_tuple3(self.origin, float))
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def dims(self):
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())

    def same_geometry(self, other) -> bool:
        return self.dims == other.dims

    def require_same_geometry(self, other, what="masks"):
        if self.dims != other.dims:
            raise GeometryMismatch(
                f"{what} have mismatched dims {self.dims} vs {other.dims}"
            )


# --- NIfTI-1 ---------------------------------------------------------------


def _parse_header(raw: bytes, path):
    if len(raw) < HEADER_SIZE:
        raise MalformedHeader(f"{path}: file shorter than a NIfTI-1 header")
    if raw[:2] == b"\x1f\x8b":
        raise CompressedInput(f"{path}: gzip input is not supported")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        raise MalformedHeader(
            f"{path}: sizeof_hdr is {sizeof_hdr}, expected {HEADER_SIZE} "
            "(big-endian files are not supported)"
        )
    if raw[344:348] != MAGIC:
        raise MalformedHeader(f"{path}: bad magic {raw[344:348]!r}")
    dim = struct.unpack_from("<8h", raw, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise MalformedHeader(f"{path}: dim[0] = {ndim} out of range")
    if any(d > 1 for d in dim[4 : 1 + ndim]):
        raise MalformedHeader(f"{path}: >3D data is not supported (dim={dim})")
    shape = tuple(max(1, dim[i]) for i in (1, 2, 3))
    (datatype, _bitpix) = struct.unpack_from("<2h", raw, 70)
    if datatype not in DTYPE_CODES:
        raise UnsupportedDatatype(f"{path}: datatype code {datatype}")
    pixdim = struct.unpack_from("<8f", raw, 76)
    spacing = tuple(abs(p) if p != 0 else 1.0 for p in pixdim[1:4])
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, 112)
    qoffset = struct.unpack_from("<3f", raw, 268)
    return shape, spacing, qoffset, datatype, int(vox_offset), scl_slope, scl_inter


def read_nifti(path, as_mask: bool = False):
    """Load an uncompressed NIfTI-1 file as a Volume (or BinaryMask)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    shape, spacing, origin, datatype, vox_offset, slope, inter = _parse_header(raw, path)
    n = shape[0] * shape[1] * shape[2]
    np_dtype = np.dtype(DTYPE_CODES[datatype]).newbyteorder("<")
    payload = raw[vox_offset : vox_offset + n * np_dtype.itemsize]
    if len(payload) != n * np_dtype.itemsize:
        raise MalformedHeader(f"{path}: truncated voxel payload")
    flat = np.frombuffer(payload, dtype=np_dtype)
    arr = flat.reshape(shape, order="F")
    if slope not in (0.0, 1.0) or inter != 0.0:
        if slope == 0.0:
            slope = 1.0
        arr = arr.astype(np.float32) * np.float32(slope) + np.float32(inter)
    if as_mask:
        vals = np.rint(np.asarray(arr)).astype(np.int64)
        bad = np.unique(vals[(vals != 0) & (vals != 1)])
        if bad.size:
            raise NonBinaryMask(f"{path}: mask values outside {{0,1}}: {bad[:8]}")
        return BinaryMask(vals.astype(np.uint8), spacing, origin)
    vol = np.asarray(arr, dtype=np.float32)
    if not np.all(np.isfinite(vol)):
        raise MalformedHeader(f"{path}: non-finite voxel values")
    return Volume(vol, spacing, origin)


def read_mask(path) -> BinaryMask:
    return read_nifti(path, as_mask=True)


def _check_representable(data: np.ndarray, np_dtype, allow_rounding: bool):
    if allow_rounding:
        return
    cast = data.astype(np_dtype)
    if not np.array_equal(cast.astype(np.float64), data.astype(np.float64)):
        raise LossyDtype(
            f"data cannot be stored as {np.dtype(np_dtype).name} without rounding "
            "(pass allow_rounding=True to force)"
        )


def write_nifti(volume, path, dtype: str = None, allow_rounding: bool = False):
    """Write a Volume or BinaryMask as an uncompressed NIfTI-1 file.

    Masks default to uint8 storage, volumes to float32. Raises LossyDtype when
    the requested dtype cannot hold the data exactly.
    """
    path = Path(path)
    is_mask = isinstance(volume, BinaryMask)
    if dtype is None:
        dtype = "uint8" if is_mask else "float32"
    if dtype not in DTYPE_NAMES:
        raise UnsupportedDatatype(f"unsupported write dtype {dtype!r}")
    code = DTYPE_NAMES[dtype]
    np_dtype = DTYPE_CODES[code]
    _check_representable(volume.data, np_dtype, allow_rounding)

    nx, ny, nz = volume.dims
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<c", hdr, 38, b"r")
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, code, _BITPIX[code])
    struct.pack_into("<8f", hdr, 76, 1.0, *volume.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<2h", hdr, 252, 1, 0)  # qform_code=1, sform_code=0
    struct.pack_into("<3f", hdr, 256, 0.0, 0.0, 0.0)  # identity quaternion b,c,d
    struct.pack_into("<3f", hdr, 268, *volume.origin)
    hdr[344:348] = MAGIC

    payload = np.ascontiguousarray(
        volume.data.astype(np_dtype).ravel(order="F")
    ).tobytes()
    try:
        with open(path, "wb") as f:
            f.write(bytes(hdr))
            f.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
            f.write(payload)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


# --- raw + JSON sidecar (test-friendly format) -----------------------------


def write_sidecar(volume, json_path):
    """Write volume as <stem>.json metadata plus <stem>.raw little-endian payload."""
    json_path = Path(json_path)
    raw_path = json_path.with_suffix(".raw")
    is_mask = isinstance(volume, BinaryMask)
    dtype = "uint8" if is_mask else "float32"
    meta = {
        "dims": list(volume.dims),
        "spacing": list(volume.spacing),
        "origin": list(volume.origin),
        "dtype": dtype,
    }
    np_dtype = DTYPE_CODES[DTYPE_NAMES[dtype]]
    try:
        json_path.write_text(json.dumps(meta), encoding="utf-8")
        raw_path.write_bytes(
            np.ascontiguousarray(volume.data.astype(np_dtype).ravel(order="F")).tobytes()
        )
    except OSError as e:
        raise IoFailure(f"cannot write sidecar {json_path}: {e}") from e


def read_sidecar(json_path, as_mask: bool = False):
    json_path = Path(json_path)
    try:
        meta = json.loads(json_path.read_text(encoding="utf-8"))
        raw = json_path.with_suffix(".raw").read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read sidecar {json_path}: {e}") from e
    dims = tuple(int(d) for d in meta["dims"])
    if meta["dtype"] not in DTYPE_NAMES:
        raise UnsupportedDatatype(f"{json_path}: dtype {meta['dtype']!r}")
    np_dtype = np.dtype(DTYPE_CODES[DTYPE_NAMES[meta["dtype"]]]).newbyteorder("<")
    n = dims[0] * dims[1] * dims[2]
    if len(raw) != n * np_dtype.itemsize:
        raise MalformedHeader(f"{json_path}: raw payload size mismatch")
    arr = np.frombuffer(raw, dtype=np_dtype).reshape(dims, order="F")
    spacing = tuple(meta.get("spacing", (1.0, 1.0, 1.0)))
    origin = tuple(meta.get("origin", (0.0, 0.0, 0.0)))
    if as_mask:
        vals = np.rint(np.asarray(arr)).astype(np.int64)
        bad = np.unique(vals[(vals != 0) & (vals != 1)])
        if bad.size:
            raise NonBinaryMask(f"{json_path}: mask values outside {{0,1}}")
        return BinaryMask(vals.astype(np.uint8), spacing, origin)
    return Volume(np.asarray(arr, dtype=np.float32), spacing, origin)
