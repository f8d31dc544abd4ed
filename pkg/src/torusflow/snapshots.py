"""Flat binary field snapshots with a self-describing ASCII header.

Layout: magic line, one key=value header line, then raw float64 bytes in C
order.  A run directory additionally carries a line-oriented index file.
"""

from __future__ import annotations

import os

import numpy as np

MAGIC = b"TORUSFLOW-SNAP1\n"


def write_snapshot(path: str, name: str, t: float, array: np.ndarray) -> None:
    a = np.ascontiguousarray(array, dtype=np.float64)
    shape = "x".join(str(s) for s in a.shape)
    header = f"field={name} t={t!r} shape={shape} dtype=float64\n"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("ascii"))
        fh.write(a.tobytes())


def read_snapshot(path: str):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a snapshot file")
        header = fh.readline().decode("ascii").strip()
        meta = dict(kv.split("=", 1) for kv in header.split())
        shape = tuple(int(s) for s in meta["shape"].split("x"))
        data = np.frombuffer(fh.read(), dtype=np.float64).reshape(shape)
    return meta["field"], float(meta["t"]), data


def write_index(directory: str, entries: list[dict]) -> str:
    """entries: dicts with keys file, field, t, n; one key=value line each."""
    path = os.path.join(directory, "index.txt")
    with open(path, "w") as fh:
        for e in entries:
            fh.write(" ".join(f"{k}={e[k]}" for k in ("file", "field", "t", "n")) + "\n")
    return path


def read_index(directory: str) -> list[dict]:
    path = os.path.join(directory, "index.txt")
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(dict(kv.split("=", 1) for kv in line.split()))
    return out
