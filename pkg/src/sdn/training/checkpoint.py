"""Binary checkpoint container.

Layout, little-endian throughout:
  magic "SDN1" | u32 version | u32 tensor count
  per tensor: u16 name length | name utf-8 | u8 dtype (0 = f32) | u8 rank |
              rank x u32 dims | raw f32 payload
  u32 config blob length | config utf-8 | u64 rng seed | u64 step counter

Tensors are written in sorted-name order so identical state produces
identical bytes (save -> load -> save round-trips bit for bit).
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SDN1"
VERSION = 1


def save_checkpoint(path, tensors, config_text, seed, step):
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<BB", 0, arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    cfg = config_text.encode("utf-8")
    blob += struct.pack("<I", len(cfg))
    blob += cfg
    blob += struct.pack("<QQ", int(seed), int(step))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, count, what):
        if self.pos + count > len(self.data):
            raise ValueError(f"truncated checkpoint while reading {what}")
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path):
    """Returns (tensors dict, config_text, seed, step)."""
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise ValueError(f"bad magic in {path}: not a checkpoint")
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode("utf-8")
        dtype, rank = r.unpack("<BB", "dtype/rank")
        if dtype != 0:
            raise ValueError(f"unsupported dtype {dtype} for tensor {name!r}")
        dims = r.unpack(f"<{rank}I", "dims") if rank else ()
        size = int(np.prod(dims)) if rank else 1
        payload = r.take(4 * size, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    (cfg_len,) = r.unpack("<I", "config length")
    config_text = r.take(cfg_len, "config blob").decode("utf-8")
    seed, step = r.unpack("<QQ", "seed/step")
    if r.pos != len(r.data):
        raise ValueError("trailing bytes after checkpoint footer")
    return tensors, config_text, seed, step
