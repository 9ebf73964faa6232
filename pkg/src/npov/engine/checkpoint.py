"""Binary checkpoint container: magic, version, JSON config, named f32 tensors."""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"WNCM1\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str, config: dict, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        blob = json.dumps(config, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, arr in tensors.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            a = np.asarray(arr, dtype="<f4")
            f.write(struct.pack("<B", a.ndim))
            for d in a.shape:
                f.write(struct.pack("<I", d))
            f.write(a.tobytes())


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointError("checkpoint is truncated or corrupt")
    return buf


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(
                f"unrecognized checkpoint magic {magic!r}; expected {MAGIC!r}"
            )
        (version,) = struct.unpack("<H", _read_exact(f, 2))
        if version != VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version}; this build reads version {VERSION}"
            )
        (clen,) = struct.unpack("<I", _read_exact(f, 4))
        config = json.loads(_read_exact(f, clen).decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        while True:
            head = f.read(4)
            if len(head) == 0:
                break
            if len(head) != 4:
                raise CheckpointError("checkpoint is truncated or corrupt")
            (nlen,) = struct.unpack("<I", head)
            name = _read_exact(f, nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1))
            shape = tuple(
                struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(rank)
            )
            count = 1
            for d in shape:
                count *= d
            raw = _read_exact(f, 4 * count)
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return config, tensors
