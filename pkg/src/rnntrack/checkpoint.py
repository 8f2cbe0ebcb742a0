"""Versioned, byte-stable model checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"RNNTRKCK"
    uint32    format version (currently 1)
    uint32    header length in bytes
    header    UTF-8 JSON, keys sorted, no whitespace:
              {"iteration": int, "kind": str, "params": [{"name", "shape"}...],
               "sizes": {...}}
    payload   every parameter as float64 little-endian, row-major, in the
              order listed in the header

Nothing in the file depends on the platform or the wall clock, so saving
the same model twice produces identical bytes.
"""

import json
import struct

import numpy as np

from .errors import ParseError

MAGIC = b"RNNTRKCK"
VERSION = 1


def save_checkpoint(path, kind, sizes, params, iteration=0):
    """Write ``params`` (name -> `Param` or array) to ``path``."""
    entries, blobs = [], []
    for name, p in params.items():
        arr = np.ascontiguousarray(getattr(p, "value", p), dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes(order="C"))
    header = json.dumps(
        {"iteration": int(iteration), "kind": kind, "params": entries, "sizes": sizes},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Read a checkpoint. Returns ``(kind, sizes, arrays, iteration)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    arrays = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) * 8
        if offset + n > len(data):
            raise ParseError(f"{path}: truncated payload at {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(data[offset:offset + n], dtype="<f8").reshape(shape).copy()
        offset += n
    if offset != len(data):
        raise ParseError(f"{path}: trailing bytes after payload")
    return header["kind"], header["sizes"], arrays, header["iteration"]


def assign_params(params, arrays):
    """Copy loaded arrays into existing `Param` objects in place."""
    missing = set(params) ^ set(arrays)
    if missing:
        raise ParseError(f"checkpoint parameter mismatch: {sorted(missing)}")
    for name, p in params.items():
        if p.value.shape != arrays[name].shape:
            raise ParseError(f"shape mismatch for {name}: {p.value.shape} vs {arrays[name].shape}")
        p.value[...] = arrays[name]
