"""Single-file container for named tensor blobs with a JSON metadata header.

Layout (all integers little-endian):

    bytes 0..7    magic ``b"TBLOB001"``
    bytes 8..15   uint64 header length H
    bytes 16..    H bytes of UTF-8 JSON:
                      {"meta": {...}, "tensors": [{"name", "dtype",
                       "shape", "offset", "nbytes"}, ...]}
    then          raw C-order blobs, concatenated in tensor-table order

Tensor entries are sorted by name and the JSON is canonicalised
(sorted keys, no extra whitespace), so identical contents always
produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import ParameterError

MAGIC = b"TBLOB001"

_ALLOWED_DTYPES = {"<f4", "<f8", "<i4", "<i8", "<u1", "|u1", "|b1"}


def _dtype_code(arr: np.ndarray) -> str:
    code = arr.dtype.str
    if code not in _ALLOWED_DTYPES:
        raise ParameterError(f"unsupported dtype {arr.dtype} for container tensor")
    return code


def to_bytes(tensors: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    """Serialize a name->array mapping (plus JSON-able metadata) to bytes."""
    table = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        code = _dtype_code(arr)
        raw = arr.tobytes()
        table.append(
            {
                "name": name,
                "dtype": code,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"meta": meta or {}, "tensors": table},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(blobs)


def from_bytes(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    """Inverse of :func:`to_bytes`; returns (tensors, meta)."""
    if data[:8] != MAGIC:
        raise ParameterError("not a tensor container (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    base = 16 + hlen
    tensors = {}
    for entry in header["tensors"]:
        raw = data[base + entry["offset"] : base + entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]))
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return tensors, header["meta"]


def save(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(tensors, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def tensors_sha256(tensors: dict[str, np.ndarray]) -> str:
    """Order-independent digest over names, dtypes, shapes and raw bytes."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        h.update(name.encode("utf-8"))
        h.update(arr.dtype.str.encode("ascii"))
        h.update(str(arr.shape).encode("ascii"))
        h.update(arr.tobytes())
    return h.hexdigest()
