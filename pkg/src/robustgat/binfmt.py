"""Versioned little-endian container for datasets, poisoned graphs and checkpoints.

Layout::

    magic  b"RGAT"            4 bytes
    version                   u32
    kind                      4 ascii bytes (DSET, PGRF, CKPT)
    meta length               u64
    meta                      utf-8 JSON; lists array names, dtypes, shapes
    arrays                    raw little-endian bytes, in meta order
    [footer]                  optional tagged section (tag, u64 count, i64[count])
"""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np

MAGIC = b"RGAT"
VERSION = 1
_HEAD = struct.Struct("<4sI4sQ")
_FOOT = struct.Struct("<4sQ")
_DTYPES = {"f8": "<f8", "i8": "<i8"}


class FormatError(ValueError):
    pass


def _code(a: np.ndarray) -> str:
    if a.dtype.kind == "f":
        return "f8"
    if a.dtype.kind in "iub":
        return "i8"
    raise FormatError(f"unsupported dtype {a.dtype}")


def dumps(kind: bytes, meta: dict, arrays: dict[str, np.ndarray], footer=None) -> bytes:
    arrays = {k: np.asarray(v) for k, v in arrays.items()}
    meta = dict(meta)
    meta["arrays"] = [[k, _code(a), list(a.shape)] for k, a in arrays.items()]
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(_HEAD.pack(MAGIC, VERSION, kind, len(blob)))
    buf.write(blob)
    for k, a in arrays.items():
        buf.write(np.ascontiguousarray(a, dtype=_DTYPES[_code(a)]).tobytes())
    if footer is not None:
        tag, ids = footer
        ids = np.asarray(ids, dtype="<i8")
        buf.write(_FOOT.pack(tag, ids.shape[0]))
        buf.write(ids.tobytes())
    return buf.getvalue()


def loads(data: bytes, kind: bytes):
    """Return ``(meta, arrays, footer)``; footer is ``(tag, ids)`` or None."""
    if len(data) < _HEAD.size:
        raise FormatError("truncated header")
    magic, version, got_kind, n_meta = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError("not a robustgat binary file")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version} (expected {VERSION})")
    if got_kind != kind:
        raise FormatError(f"expected {kind.decode()} section, found {got_kind.decode()}")
    off = _HEAD.size
    meta = json.loads(data[off : off + n_meta].decode())
    off += n_meta
    arrays = {}
    for name, code, shape in meta.pop("arrays"):
        dt = np.dtype(_DTYPES[code])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * dt.itemsize
        if off + nbytes > len(data):
            raise FormatError(f"truncated array {name!r}")
        arr = np.frombuffer(data, dtype=dt, count=count, offset=off).reshape(shape)
        arrays[name] = arr.astype(dt.newbyteorder("="))
        off += nbytes
    footer = None
    if off < len(data):
        tag, count = _FOOT.unpack_from(data, off)
        off += _FOOT.size
        ids = np.frombuffer(data, dtype="<i8", count=count, offset=off).astype(np.int64)
        off += 8 * count
        footer = (tag, ids)
    if off != len(data):
        raise FormatError("trailing bytes after payload")
    return meta, arrays, footer


def write(path, payload: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(payload)


def read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def checksum(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str((a.dtype.str, a.shape)).encode())
        h.update(a.tobytes())
    return h.hexdigest()
