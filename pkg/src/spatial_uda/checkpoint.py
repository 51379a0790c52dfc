"""Versioned binary checkpoint format.

Layout (all integers little-endian)::

    magic        8 bytes   b"UDACKPT\\x00"
    version      uint32    = 1
    n_tensors    uint32
    meta_len     uint32    then meta_len bytes of UTF-8 JSON (sorted keys)
    table        n_tensors entries:
                   name_len uint16, name (UTF-8)
                   dtype    uint8   (0=float64, 1=float32, 2=int64, 3=uint8)
                   ndim     uint8, then ndim x uint64 shape
                   offset   uint64  (from start of payload)
                   nbytes   uint64
    payload      tensors back to back, little-endian, row-major

Round-trips are bit-exact.
"""

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from .exceptions import FormatError

__all__ = ["save_checkpoint", "load_checkpoint", "checkpoint_bytes", "parse_checkpoint"]

MAGIC = b"UDACKPT\x00"
VERSION = 1
_DTYPES = [
    (torch.float64, "<f8"),
    (torch.float32, "<f4"),
    (torch.int64, "<i8"),
    (torch.uint8, "|u1"),
]


def _dtype_code(t):
    for code, (td, _) in enumerate(_DTYPES):
        if t.dtype == td:
            return code
    raise FormatError(f"unsupported tensor dtype {t.dtype}")


def checkpoint_bytes(tensors, meta=None):
    """Serialize ``{name: tensor}`` (insertion order kept) plus JSON metadata."""
    meta_raw = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    table, payload = [], []
    offset = 0
    for name, t in tensors.items():
        t = t.detach().cpu().contiguous()
        code = _dtype_code(t)
        raw = np.ascontiguousarray(t.numpy(), dtype=_DTYPES[code][1]).tobytes()
        nb = name.encode("utf-8")
        entry = struct.pack("<H", len(nb)) + nb + struct.pack("<BB", code, t.ndim)
        entry += struct.pack(f"<{t.ndim}Q", *t.shape) + struct.pack("<QQ", offset, len(raw))
        table.append(entry)
        payload.append(raw)
        offset += len(raw)
    head = MAGIC + struct.pack("<III", VERSION, len(tensors), len(meta_raw)) + meta_raw
    return head + b"".join(table) + b"".join(payload)


def parse_checkpoint(buf):
    """Inverse of :func:`checkpoint_bytes`; returns ``(tensors, meta)``."""
    if buf[:8] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    version, n, meta_len = struct.unpack_from("<III", buf, 8)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    pos = 20
    meta = json.loads(buf[pos : pos + meta_len].decode("utf-8"))
    pos += meta_len
    entries = []
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", buf, pos)
        name = buf[pos + 2 : pos + 2 + ln].decode("utf-8")
        pos += 2 + ln
        code, ndim = struct.unpack_from("<BB", buf, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        off, nbytes = struct.unpack_from("<QQ", buf, pos)
        pos += 16
        entries.append((name, code, shape, off, nbytes))
    tensors = OrderedDict()
    for name, code, shape, off, nbytes in entries:
        if code >= len(_DTYPES):
            raise FormatError(f"unknown dtype code {code} for {name}")
        start = pos + off
        if start + nbytes > len(buf):
            raise FormatError(f"truncated payload for {name}")
        arr = np.frombuffer(buf, dtype=_DTYPES[code][1], count=int(np.prod(shape, dtype=np.int64)), offset=start)
        tensors[name] = torch.from_numpy(arr.reshape(shape).copy())
    return tensors, meta


def save_checkpoint(path, tensors, meta=None):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(tensors, meta))
    tmp.replace(path)


def load_checkpoint(path):
    return parse_checkpoint(Path(path).read_bytes())
