"""Reader/writer for the dense array container (NPY v1.0).

The on-disk contract is deliberately narrow: version (1, 0), little-endian
float32 or int32, C-order payload, header padded with spaces to 64-byte
alignment and terminated by a newline.  Files written here are byte-identical
to what ``numpy.save`` produces for the same array, but loading is done with
an explicit parser so that out-of-contract files fail with a typed error
instead of being silently accepted.
"""
from __future__ import annotations

import ast
import os
import struct

import numpy as np

from .errors import DtypeUnsupported, FortranOrder, MalformedHeader, NonFiniteData

MAGIC = b"\x93NUMPY"
_HEADER_ALIGN = 64
_DESCR_FOR_DTYPE = {"float32": "<f4", "int32": "<i4"}
_DTYPE_FOR_DESCR = {"<f4": np.dtype("<f4"), "<i4": np.dtype("<i4")}
MAX_RANK = 4


def _build_header(descr: str, shape: tuple[int, ...]) -> bytes:
    dict_src = "{'descr': %r, 'fortran_order': False, 'shape': %r, }" % (descr, shape)
    header = dict_src.encode("latin1")
    # magic(6) + version(2) + length field(2) + header must land on a 64-byte
    # boundary, with the final byte a newline.
    pad = _HEADER_ALIGN - ((len(MAGIC) + 2 + 2 + len(header) + 1) % _HEADER_ALIGN)
    pad %= _HEADER_ALIGN
    header += b" " * pad + b"\n"
    return MAGIC + bytes([1, 0]) + struct.pack("<H", len(header)) + header


def save_array(path: str | os.PathLike, arr: np.ndarray) -> None:
    """Write ``arr`` (float32 or int32, rank 1-4) as an NPY v1.0 file."""
    arr = np.asarray(arr)
    if arr.dtype.name not in _DESCR_FOR_DTYPE:
        raise DtypeUnsupported(f"cannot save dtype {arr.dtype}; use float32 or int32")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise MalformedHeader(f"rank {arr.ndim} outside supported range 1..{MAX_RANK}")
    if any(s < 1 for s in arr.shape):
        raise MalformedHeader(f"zero extent in shape {arr.shape}")
    descr = _DESCR_FOR_DTYPE[arr.dtype.name]
    payload = np.ascontiguousarray(arr).astype(descr, copy=False)
    with open(path, "wb") as fh:
        fh.write(_build_header(descr, arr.shape))
        fh.write(payload.tobytes("C"))


def load_array(path: str | os.PathLike) -> np.ndarray:
    """Load an NPY v1.0 file, validating the full container contract.

    Returns a C-ordered array of dtype float32 or int32.  Float payloads are
    rejected if they contain NaN/Inf.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 10 or raw[:6] != MAGIC:
        raise MalformedHeader(f"{path}: not an NPY file (bad magic)")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise MalformedHeader(f"{path}: unsupported NPY version {(major, minor)}")
    (hlen,) = struct.unpack("<H", raw[8:10])
    if len(raw) < 10 + hlen:
        raise MalformedHeader(f"{path}: truncated header")
    header = raw[10 : 10 + hlen]
    if not header.endswith(b"\n"):
        raise MalformedHeader(f"{path}: header not newline-terminated")
    if (10 + hlen) % _HEADER_ALIGN != 0:
        raise MalformedHeader(f"{path}: header not {_HEADER_ALIGN}-byte aligned")
    try:
        meta = ast.literal_eval(header.decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise MalformedHeader(f"{path}: undecodable header dict") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise MalformedHeader(f"{path}: header keys {sorted(meta)!r} != descr/fortran_order/shape")
    if meta["fortran_order"] is not False:
        raise FortranOrder(f"{path}: fortran_order must be False")
    descr = meta["descr"]
    if descr not in _DTYPE_FOR_DESCR:
        raise DtypeUnsupported(f"{path}: dtype {descr!r} not in (<f4, <i4)")
    shape = meta["shape"]
    if (
        not isinstance(shape, tuple)
        or not 1 <= len(shape) <= MAX_RANK
        or not all(isinstance(s, int) and s >= 1 for s in shape)
    ):
        raise MalformedHeader(f"{path}: bad shape {shape!r}")
    dtype = _DTYPE_FOR_DESCR[descr]
    count = int(np.prod(shape))
    payload = raw[10 + hlen :]
    if len(payload) != count * dtype.itemsize:
        raise MalformedHeader(
            f"{path}: payload is {len(payload)} bytes, expected {count * dtype.itemsize}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    if arr.dtype.kind == "f" and not np.isfinite(arr).all():
        raise NonFiniteData(f"{path}: float payload contains NaN/Inf")
    return arr
