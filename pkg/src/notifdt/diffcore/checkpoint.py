"""Self-describing binary checkpoint container.

Layout (little-endian throughout; documented in docs/FORMATS.md and stable
across versions):

    magic   4 bytes  b"NDTC"
    version u32      1
    cfg_len u32      length of the UTF-8 JSON config block
    config  bytes    json.dumps(config, sort_keys=True)
    count   u32      number of named tensors, in write order
    per tensor:
        name_len u16, name UTF-8
        dtype    u8   (0=float32, 1=float64, 2=int64)
        ndim     u8
        dims     u32 * ndim
        data     raw little-endian values, row-major
"""

import json
import struct

import numpy as np

MAGIC = b"NDTC"
VERSION = 1

_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8"}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2}


class CheckpointError(Exception):
    pass


def write_checkpoint(path, tensors, config):
    """tensors: ordered mapping name -> ndarray; config: JSON-safe dict."""
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _CODES:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype(_DTYPES[_CODES[arr.dtype]], copy=False).tobytes())


def read_checkpoint(path):
    """Returns (tensors: dict name -> ndarray, config: dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(raw):
            raise CheckpointError("truncated checkpoint")
        out = raw[off : off + n]
        off += n
        return out

    if take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, cfg_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    config = json.loads(take(cfg_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        code, ndim = struct.unpack("<BB", take(2))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dt = np.dtype(_DTYPES[code])
        n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(take(n * dt.itemsize), dtype=dt).reshape(dims)
        tensors[name] = data.astype(dt.newbyteorder("="), copy=True).reshape(dims)
    if off != len(raw):
        raise CheckpointError("trailing bytes after last tensor")
    return tensors, config
