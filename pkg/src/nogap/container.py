"""Binary container shared by datasets, field dumps and model checkpoints.

Layout (all integers little-endian)::

    magic      4 bytes        b"NGPD" for data, b"NGPC" for checkpoints
    version    uint32
    meta_len   uint32, then meta_len bytes of UTF-8 "key=value\\n" lines
    n_tensors  uint32
    per tensor:
        name_len uint16, name (UTF-8)
        rank     uint32, dims uint64 * rank
        payload  float64 * prod(dims)
    crc32      uint32 over every preceding byte
"""

from __future__ import annotations

import hashlib
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError

VERSION = 1
DATA_MAGIC = b"NGPD"
CHECKPOINT_MAGIC = b"NGPC"


def encode_meta(meta: dict) -> bytes:
    lines = []
    for key, value in meta.items():
        key, value = str(key), str(value)
        if "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"metadata entry {key!r} cannot be encoded")
        lines.append(f"{key}={value}\n")
    return "".join(lines).encode("utf-8")


def decode_meta(raw: bytes) -> dict:
    meta = {}
    for line in raw.decode("utf-8").splitlines():
        if line:
            key, _, value = line.partition("=")
            meta[key] = value
    return meta


def dumps(meta: dict, tensors: dict, magic: bytes = DATA_MAGIC) -> bytes:
    parts = [magic, struct.pack("<I", VERSION)]
    mb = encode_meta(meta)
    parts += [struct.pack("<I", len(mb)), mb, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
        nb = name.encode("utf-8")
        parts += [struct.pack("<H", len(nb)), nb, struct.pack("<I", arr.ndim)]
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes, magic: bytes = DATA_MAGIC):
    if len(blob) < 16:
        raise FormatError("container is truncated")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch (truncated or corrupt file)")
    if body[:4] != magic:
        raise FormatError(f"bad magic {body[:4]!r}, expected {magic!r}")
    try:
        (version,) = struct.unpack_from("<I", body, 4)
        if version != VERSION:
            raise FormatError(f"unsupported container version {version}")
        pos = 8
        (mlen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        meta = decode_meta(body[pos : pos + mlen])
        pos += mlen
        (count,) = struct.unpack_from("<I", body, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", body, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", body, pos)
            pos += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            if pos + 8 * n > len(body):
                raise FormatError(f"tensor {name!r} payload is truncated")
            tensors[name] = np.frombuffer(body, dtype="<f8", count=n, offset=pos).reshape(dims).astype(np.float64)
            pos += 8 * n
    except (struct.error, UnicodeDecodeError) as err:
        raise FormatError(f"malformed container: {err}") from err
    if pos != len(body):
        raise FormatError("trailing bytes after last tensor")
    return meta, tensors


def write(path, meta: dict, tensors: dict, magic: bytes = DATA_MAGIC) -> str:
    """Atomically write a container; returns its content hash."""
    blob = dumps(meta, tensors, magic)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return content_hash(blob)


def read(path, magic: bytes = DATA_MAGIC):
    return loads(Path(path).read_bytes(), magic)


def content_hash(blob: bytes) -> str:
    """Git-style blob hash (sha1 over ``b"blob <len>\\0" + content``)."""
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(blob))
    h.update(blob)
    return h.hexdigest()


def file_hash(path) -> str:
    return content_hash(Path(path).read_bytes())
