"""Binary checkpoint format.

Layout::

    b"CLCKPT\\0\\0"                 8-byte magic
    uint32 little-endian          header length in bytes
    header                        UTF-8 JSON: {"version", "tensors": [{"name",
                                  "shape", "dtype", "trainable"}], "meta"}
    payloads                      each tensor as little-endian float32,
                                  C order, in header order

The JSON header is written with sorted keys and no whitespace, so equal
parameters and metadata always give identical bytes.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import CheckpointError
from .optim import ParamGroup

MAGIC = b"CLCKPT\0\0"
VERSION = 1
DTYPE = "<f4"


def dumps(params: ParamGroup, meta=None) -> bytes:
    entries = [
        {"name": n, "shape": list(t.shape), "dtype": "float32", "trainable": t.requires_grad}
        for n, t in params.items()
    ]
    header = json.dumps({"version": VERSION, "tensors": entries, "meta": meta or {}},
                        sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(t.data, dtype=DTYPE).tobytes() for t in params.tensors.values())
    return MAGIC + struct.pack("<I", len(header)) + header + body


def loads(blob: bytes):
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    params = ParamGroup()
    offset = 12 + hlen
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        nbytes = 4 * count
        if offset + nbytes > len(blob):
            raise CheckpointError(f"truncated payload for {e['name']}")
        arr = np.frombuffer(blob, dtype=DTYPE, count=count, offset=offset).astype(np.float32)
        params.add(e["name"], arr.reshape(e["shape"]), e["trainable"])
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError("trailing bytes after last payload")
    return params, header["meta"]


def save_checkpoint(path, params: ParamGroup, meta=None):
    with open(path, "wb") as fh:
        fh.write(dumps(params, meta))


def load_checkpoint(path):
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint {path} does not exist") from None
