"""Binary tensor container: magic 'CAMB', u32 version, named f32 records.

Record layout (all integers little-endian u32): name length, name bytes
(utf-8), rank, dims[rank], then the f32 payload. A checkpoint is a sequence
of named records; a single-tensor file is the same container with exactly
one record named ''.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"CAMB"
VERSION = 1


def save_records(path, records: dict[str, np.ndarray]) -> None:
    """Write named float32 arrays in insertion order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in records.items():
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4").tobytes())


def load_records(path) -> dict[str, np.ndarray]:
    """Read all records; raises TensorFormatError on bad magic/version/truncation."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported format version {version}")
    records: dict[str, np.ndarray] = {}
    offset = 8
    total = len(data)

    def need(n: int) -> None:
        if offset + n > total:
            raise TensorFormatError(f"{path}: truncated file")

    while offset < total:
        need(4)
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        need(name_len)
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        need(4)
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        need(4 * rank)
        dims = struct.unpack_from(f"<{rank}I", data, offset)
        offset += 4 * rank
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        need(4 * count)
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(dims)
        offset += 4 * count
        records[name] = arr.astype(np.float32)
    return records


def save_tensor(path, arr: np.ndarray) -> None:
    """Single-tensor file (one record with empty name)."""
    save_records(path, {"": arr})


def load_tensor(path) -> np.ndarray:
    records = load_records(path)
    if list(records.keys()) != [""]:
        raise TensorFormatError(f"{path}: expected a single-tensor file")
    return records[""]
