"""Named-tensor checkpoint container.

Layout::

    8-byte magic | uint32 version | uint64 manifest length | JSON manifest | payloads

All integers and tensor payloads are little-endian.  The manifest lists
tensor names, shapes and dtypes in payload order, a SHA-256 of the payload
bytes and a free-form ``meta`` object.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"QEXPCKPT"
VERSION = 1
_HEADER = struct.Struct("<8sIQ")


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointHashError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def save_tensors(path, tensors: Mapping[str, np.ndarray], meta: dict | None = None,
                 version: int = VERSION) -> None:
    entries = []
    chunks = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        data = np.ascontiguousarray(le).tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "dtype": le.dtype.str, "nbytes": len(data)})
        chunks.append(data)
    payload = b"".join(chunks)
    manifest = {"tensors": entries, "sha256": hashlib.sha256(payload).hexdigest(),
                "meta": meta or {}}
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(tensors, meta)``; tensors keep manifest order."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointTruncatedError(f"{path}: file shorter than header")
    magic, version, mlen = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: version {version}, reader supports {VERSION}")
    start = _HEADER.size
    if len(raw) < start + mlen:
        raise CheckpointTruncatedError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(raw[start:start + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest ({exc})") from None
    payload = raw[start + mlen:]
    expected = sum(e["nbytes"] for e in manifest["tensors"])
    if len(payload) < expected:
        raise CheckpointTruncatedError(f"{path}: payload has {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise CheckpointShapeError(f"{path}: {len(payload) - expected} trailing payload bytes")
    if hashlib.sha256(payload).hexdigest() != manifest["sha256"]:
        raise CheckpointHashError(f"{path}: payload hash does not match manifest")
    tensors = {}
    offset = 0
    for e in manifest["tensors"]:
        dtype = np.dtype(e["dtype"])
        shape = tuple(e["shape"])
        if int(np.prod(shape, dtype=np.int64)) * dtype.itemsize != e["nbytes"]:
            raise CheckpointShapeError(f"{path}: tensor {e['name']!r} shape {shape} "
                                       f"inconsistent with {e['nbytes']} bytes")
        arr = np.frombuffer(payload, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)),
                            offset=offset).reshape(shape)
        tensors[e["name"]] = arr.astype(dtype.newbyteorder("="))
        offset += e["nbytes"]
    return tensors, manifest.get("meta", {})


def check_shapes(tensors: Mapping[str, np.ndarray], expected: Mapping[str, tuple]) -> None:
    """Raise :class:`CheckpointShapeError` unless names and shapes agree exactly."""
    if set(tensors) != set(expected):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise CheckpointShapeError(f"tensor names differ (missing {missing}, unexpected {extra})")
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != tuple(shape):
            raise CheckpointShapeError(
                f"tensor {name!r}: stored {tuple(tensors[name].shape)}, expected {tuple(shape)}")
