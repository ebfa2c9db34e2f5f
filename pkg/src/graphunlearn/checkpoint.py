"""Checkpoint persistence: a text manifest plus one raw float64 blob.

The manifest lists `name shape offset` per tensor (offset in 8-byte elements
into the blob, shape as AxB), preceded by optional `#meta key=value` lines.
The blob is little-endian 64-bit floats concatenated in manifest order.
"""

from __future__ import annotations

import os

import numpy as np

from .numerics import ContractError, ParamStore


def save_store(store: ParamStore, base_path, meta=None):
    names = store.names()
    with open(str(base_path) + ".manifest", "w", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"#meta {key}={value}\n")
        offset = 0
        for name in names:
            arr = store[name].data
            shape = "x".join(str(s) for s in arr.shape)
            fh.write(f"{name} {shape} {offset}\n")
            offset += arr.size
    blob = np.concatenate([store[name].data.reshape(-1) for name in names]) \
        if names else np.empty(0)
    blob.astype("<f8").tofile(str(base_path) + ".bin")


def load_store(base_path):
    """Returns (ParamStore, meta dict)."""
    meta = {}
    entries = []
    with open(str(base_path) + ".manifest", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#meta "):
                key, _, value = line[len("#meta "):].partition("=")
                meta[key] = value
                continue
            name, shape_s, offset_s = line.rsplit(" ", 2)
            shape = tuple(int(x) for x in shape_s.split("x")) if shape_s else ()
            entries.append((name, shape, int(offset_s)))
    blob = np.fromfile(str(base_path) + ".bin", dtype="<f8")
    store = ParamStore()
    for name, shape, offset in entries:
        size = int(np.prod(shape)) if shape else 1
        if offset + size > blob.size:
            raise ContractError(f"checkpoint blob truncated at {name}")
        store.add(name, blob[offset:offset + size].reshape(shape))
    return store, meta


def stores_equal(a: ParamStore, b: ParamStore) -> bool:
    if set(a.names()) != set(b.names()):
        return False
    return all(np.array_equal(a[n].data, b[n].data) for n in a.names())


def max_param_delta(a: ParamStore | None, b: ParamStore | None) -> float:
    if a is None or b is None:
        if a is None and b is None:
            return 0.0
        return float("inf")
    if set(a.names()) != set(b.names()):
        return float("inf")
    deltas = [np.max(np.abs(a[n].data - b[n].data)) if a[n].data.size else 0.0
              for n in a.names()]
    return float(max(deltas, default=0.0))


def files_identical(path_a, path_b) -> bool:
    with open(path_a, "rb") as fa, open(path_b, "rb") as fb:
        return fa.read() == fb.read()
