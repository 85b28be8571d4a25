"""EMB1 binary embedding table.

Layout: magic "EMB1", little-endian u32 count, u32 dim, then per record
[u16 id byte length, UTF-8 id, dim x float32 LE]. Vectors are unit norm.
This is the wire format shared with the recognition pipeline; the two
sides implement it independently.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"EMB1"


def write_emb1(path, ids, vectors) -> None:
    """Write unit-norm float32 vectors keyed by string ids."""
    ids = list(ids)
    arr = np.asarray(vectors, dtype="<f4")
    if arr.ndim != 2 or len(ids) != arr.shape[0]:
        raise ValueError("need one vector per id")
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"id collision: {dupes[:5]}")
    norms = np.linalg.norm(arr.astype(np.float64), axis=1)
    if np.abs(norms - 1.0).max() > 1e-3:
        raise ValueError("vectors must be unit norm")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", len(ids), arr.shape[1]))
        for key, vec in zip(ids, arr):
            raw = key.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"id too long: {key!r}")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(vec.tobytes())


def read_emb1(path):
    """Read an EMB1 file; returns (ids, float32 array of shape (n, dim))."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError("bad magic; not an EMB1 file")
        count, dim = struct.unpack("<II", fh.read(8))
        ids = []
        vectors = np.empty((count, dim), dtype="<f4")
        for i in range(count):
            (idlen,) = struct.unpack("<H", fh.read(2))
            ids.append(fh.read(idlen).decode("utf-8"))
            vectors[i] = np.frombuffer(fh.read(4 * dim), dtype="<f4")
    return ids, vectors
