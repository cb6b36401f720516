"""Versioned binary checkpoint file shared by the NLU, policy, and value nets.

Layout: 8-byte magic ``PDLCKPT1``, little-endian uint32 header length, UTF-8
JSON header ``{"kind", "version", "arrays": [{"name", "shape"}], "meta"}``,
then the arrays' float64 data row-major, concatenated in header order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"PDLCKPT1"
VERSION = 1


def save_checkpoint(path, kind: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    header = {
        "kind": kind,
        "version": VERSION,
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()],
        "meta": meta,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a pipedial checkpoint")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length).decode())
        if header["version"] != VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype=np.float64, count=count)
            arrays[spec["name"]] = data.reshape(shape).copy()
    return header["kind"], arrays, header["meta"]
