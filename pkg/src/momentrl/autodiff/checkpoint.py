"""Binary checkpoint format for parameter stores.

Layout, all little-endian:

    magic   8 bytes  b"MRLCKPT1"
    version u32      format version (currently 1)
    meta    u32 length + UTF-8 payload (free-form JSON, e.g. the run config)
    steps   u64      optimizer step count
    count   u32      number of parameters, then per parameter:
        name  u16 length + UTF-8 bytes
        ndim  u8, dims u32 each
        values, first moments, second moments: float64 arrays back to back

Moments are included so training resumes bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from momentrl.autodiff.store import ParameterStore

MAGIC = b"MRLCKPT1"
VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, truncated, or mismatched checkpoint files."""


def save_checkpoint(store: ParameterStore, path: str | Path, meta: str = "") -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    meta_b = meta.encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_b)))
    chunks.append(meta_b)
    chunks.append(struct.pack("<Q", store.step_count))
    chunks.append(struct.pack("<I", len(store.names)))
    for name in store.names:
        name_b = name.encode("utf-8")
        shape = store.shape(name)
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", len(shape)))
        chunks.append(struct.pack(f"<{len(shape)}I", *shape) if shape else b"")
        m, v = store.moments(name)
        for arr in (store.value(name), m, v):
            chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    blob = b"".join(chunks)
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("checkpoint file is truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path) -> tuple[ParameterStore, str]:
    """Rebuild a frozen store (values and moments) plus the meta string."""
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = r.unpack("<I")
    meta = r.take(meta_len).decode("utf-8")
    (steps,) = r.unpack("<Q")
    (count,) = r.unpack("<I")

    store = ParameterStore()
    entries = []
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = tuple(r.unpack(f"<{ndim}I")) if ndim else ()
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arrays = []
        for _ in range(3):
            raw = r.take(8 * size)
            arrays.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape))
        store.add(name, shape)
        entries.append((name, arrays))
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after checkpoint payload")

    store.freeze()
    store.step_count = steps
    for name, (values, m, v) in entries:
        store.value(name)[...] = values
        mm, vv = store.moments(name)
        mm[...] = m
        vv[...] = v
    return store, meta
