"""Flat binary checkpoint format for named float32 arrays.

Layout, all integers little-endian:

    magic   4 bytes  b"ADPT"
    version u32      currently 1
    count   u32      number of arrays
    then per array:
      name_len u16, name bytes (UTF-8)
      rank     u8,  dims rank * u32
      data     prod(dims) * f32

Arrays are written in sorted name order so files are byte-stable for a
given parameter set.
"""

import hashlib
import os
import struct

import numpy as np

MAGIC = b"ADPT"
VERSION = 1


def save_checkpoint(path, params):
    """Write a dict of name -> ndarray as float32. Atomic via rename."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(params))
    for name in sorted(params):
        # asarray, not ascontiguousarray: the latter promotes rank 0 to rank 1
        arr = np.asarray(params[name], dtype=np.float32)
        enc = name.encode("utf-8")
        if len(enc) > 0xFFFF:
            raise ValueError(f"parameter name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise ValueError(f"rank too large for {name!r}")
        blob += struct.pack("<H", len(enc)) + enc
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(bytes(blob))
    os.replace(tmp, path)


def load_checkpoint(path):
    """Read a checkpoint back into a dict of name -> float32 ndarray."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}, not a checkpoint")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<B", data, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        params[name] = arr.copy()
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return params


def checkpoint_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
