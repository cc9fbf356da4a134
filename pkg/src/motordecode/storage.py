"""Deterministic on-disk bundles for cached stage outputs and models.

A bundle is one file: magic, a canonical JSON header describing metadata
and array layout, then raw little-endian array bytes. Identical content
produces identical bytes (no timestamps, no compression), so content
hashes are stable and cache keys honest.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"MDBU0001"

_ALLOWED_DTYPES = {"<f8", "<i8", "<i4", "<u1"}


def _canonical_json(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_bundle(path: Path | str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write arrays + JSON-safe metadata atomically."""
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        if dtype.str not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float64)
            dtype = arr.dtype.newbyteorder("<")
        arr = arr.astype(dtype, copy=False)
        raw = arr.tobytes()
        entries.append(
            {"name": name, "dtype": dtype.str, "shape": list(arr.shape), "offset": offset}
        )
        blobs.append(raw)
        offset += len(raw)
    header = _canonical_json({"meta": meta, "arrays": entries})

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for raw in blobs:
                fh.write(raw)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_bundle(path: Path | str) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a bundle file (bad magic)")
    (header_len,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    try:
        header = json.loads(data[start : start + header_len])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt bundle header: {exc}") from None
    body = start + header_len
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        begin = body + entry["offset"]
        end = begin + count * dtype.itemsize
        if end > len(data):
            raise DataError(f"{path}: truncated bundle (array {entry['name']})")
        arrays[entry["name"]] = (
            np.frombuffer(data[begin:end], dtype=dtype).reshape(entry["shape"]).copy()
        )
    return arrays, header["meta"]


def hash_bytes(*chunks: bytes) -> str:
    digest = hashlib.sha256()
    for chunk in chunks:
        digest.update(chunk)
    return digest.hexdigest()


def hash_obj(payload) -> str:
    """Stable hash of a JSON-serializable object."""
    return hash_bytes(_canonical_json(payload))


def hash_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_arrays(arrays: dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        digest.update(name.encode("utf-8"))
        digest.update(str(arr.dtype).encode("utf-8"))
        digest.update(str(arr.shape).encode("utf-8"))
        digest.update(arr.tobytes())
    return digest.hexdigest()
