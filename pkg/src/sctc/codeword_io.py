"""Packed-bit codeword files.

Layout: the 8-byte magic ``SCTCBIT1``, a little-endian ``uint32`` header
length, a UTF-8 JSON header, then one ``np.packbits`` plane per entry of
``header["planes"]`` in that order.  Each plane entry records its name and
bit length, so files are self-describing.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigError

MAGIC = b"SCTCBIT1"


def write_bits(path, planes: dict[str, np.ndarray], meta: dict) -> None:
    header = dict(meta)
    header["planes"] = [{"name": k, "bits": int(np.asarray(v).size)} for k, v in planes.items()]
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for v in planes.values():
            v = np.asarray(v).ravel()
            if v.size and (v.min() < 0 or v.max() > 1):
                raise ValueError("planes must hold 0/1 values")
            fh.write(np.packbits(v.astype(np.uint8)).tobytes())


def read_bits(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ConfigError(f"{path}: not a packed-bit codeword file")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen].decode())
    pos = 12 + hlen
    planes = {}
    for entry in header["planes"]:
        n = entry["bits"]
        nbytes = (n + 7) // 8
        chunk = np.frombuffer(data[pos:pos + nbytes], dtype=np.uint8)
        if chunk.size != nbytes:
            raise ConfigError(f"{path}: truncated plane {entry['name']!r}")
        planes[entry["name"]] = np.unpackbits(chunk)[:n].astype(np.int8)
        pos += nbytes
    return planes, header


def to_messages(values: np.ndarray, erasures: np.ndarray | None) -> np.ndarray:
    """Values plus erasure plane to an erasure-message array (-1 = erased)."""
    out = np.asarray(values, dtype=np.int8).copy()
    if erasures is not None:
        out[np.asarray(erasures, dtype=bool)] = -1
    return out


def from_messages(msgs) -> tuple[np.ndarray, np.ndarray]:
    msgs = np.asarray(msgs, dtype=np.int8)
    erased = msgs < 0
    return np.where(erased, 0, msgs).astype(np.int8), erased.astype(np.int8)
