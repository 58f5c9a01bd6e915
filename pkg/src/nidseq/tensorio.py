"""Versioned binary container for named float tensors.

Layout: 4-byte magic, uint16 format version, uint32 header length, UTF-8 JSON
header listing tensor names and shapes plus free-form metadata, then the
tensors' values concatenated row-major as little-endian float32.
"""

from __future__ import annotations

import json
import struct
from typing import Any

import numpy as np

from nidseq._validation import DimensionMismatch

MAGIC = b"NSQT"
VERSION = 1

_PREFIX = struct.Struct("<4sHI")


def save_tensors(path: str, tensors: dict[str, np.ndarray], meta: dict[str, Any] | None = None) -> None:
    """Write named tensors and metadata to one binary file.

    Insertion order of `tensors` is preserved and is the payload order.
    Values are cast to float32; callers that compute in float64 lose
    precision here by design (storage format is fixed).
    """
    entries = []
    blobs = []
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype=np.float64).astype("<f4")
        entries.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = json.dumps({"tensors": entries, "meta": meta or {}}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_tensors(path: str) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Read a container written by save_tensors.

    Returns (tensors, meta) with tensors as float64 arrays in file order.
    Raises ValueError for a foreign or future-versioned file and
    DimensionMismatch when the payload does not match the header.
    """
    with open(path, "rb") as fh:
        prefix = fh.read(_PREFIX.size)
        if len(prefix) < _PREFIX.size:
            raise ValueError(f"{path}: too short to be a tensor container")
        magic, version, header_len = _PREFIX.unpack(prefix)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        header_raw = fh.read(header_len)
        if len(header_raw) < header_len:
            raise ValueError(f"{path}: truncated header")
        header = json.loads(header_raw.decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(int(d) for d in entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) < count * 4:
                raise DimensionMismatch(
                    f"{path}: tensor {entry['name']} needs {count} floats, file ended early"
                )
            tensors[entry["name"]] = (
                np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
            )
        trailing = fh.read(1)
        if trailing:
            raise DimensionMismatch(f"{path}: trailing bytes after declared tensors")
    return tensors, header.get("meta", {})
