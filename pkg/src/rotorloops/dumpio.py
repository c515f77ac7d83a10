"""Versioned, checksummed binary container for sampled configurations.

Layout: an 8-byte magic, a little-endian uint32 header length, a JSON
header (format version, model metadata, array table, payload digest),
then the raw C-order array payload.  The loader verifies the digest and
refuses unknown format versions, so replays either reproduce the original
estimates bit for bit or fail loudly.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

MAGIC = b"RLDUMP01"
FORMAT_VERSION = 1


class DumpError(RuntimeError):
    pass


def save_dump(path, meta: dict, arrays: dict) -> None:
    """Write named arrays plus metadata; meta must be JSON-serializable."""
    table = {}
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        raw = arr.tobytes()
        table[name] = {"dtype": arr.dtype.str, "shape": list(arr.shape),
                       "offset": offset, "nbytes": len(raw)}
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format_version": FORMAT_VERSION,
        "meta": meta,
        "arrays": table,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    hraw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hraw)))
        fh.write(hraw)
        fh.write(payload)


def load_dump(path):
    """Read a dump; returns (meta, arrays). Raises DumpError on mismatch."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DumpError("not a configuration dump (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise DumpError(
                f"unsupported dump format version {header.get('format_version')}")
        payload = fh.read()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise DumpError("checksum mismatch: dump is corrupted")
    arrays = {}
    for name, spec in header["arrays"].items():
        start, n = spec["offset"], spec["nbytes"]
        arr = np.frombuffer(payload[start:start + n], dtype=np.dtype(spec["dtype"]))
        arrays[name] = arr.reshape(spec["shape"]).copy()
    return header["meta"], arrays
