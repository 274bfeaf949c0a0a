"""AAV1 binary tensor container and multi-tensor checkpoint archive.

Single tensor layout:
    magic ``AAV1`` | u8 dtype tag (0 = f32) | u8 rank | rank x u32 LE dims |
    row-major little-endian payload.

Checkpoint archive layout:
    u32 LE JSON header length | UTF-8 JSON header | u32 LE tensor count |
    per tensor: u16 LE name length | name bytes (UTF-8) | AAV1 tensor.

Tensors are stored as f32; callers working in float64 round-trip through f32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"AAV1"
DTYPE_F32 = 0


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim > 255:
        raise ValueError("rank exceeds container limit")
    data = np.ascontiguousarray(arr, dtype="<f4")
    head = MAGIC + struct.pack("<BB", DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + dims + data.tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one tensor; returns (array, next offset)."""
    if buf[offset : offset + 4] != MAGIC:
        raise ValueError("bad AAV1 magic")
    tag, rank = struct.unpack_from("<BB", buf, offset + 4)
    if tag != DTYPE_F32:
        raise ValueError(f"unsupported dtype tag {tag}")
    dims = struct.unpack_from(f"<{rank}I", buf, offset + 6)
    start = offset + 6 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    end = start + 4 * count
    arr = np.frombuffer(buf[start:end], dtype="<f4").reshape(dims).astype(np.float64)
    return arr, end


def write_tensor(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(arr))


def read_tensor(path) -> np.ndarray:
    arr, _ = tensor_from_bytes(Path(path).read_bytes())
    return arr


def archive_to_bytes(header: dict, tensors: dict[str, np.ndarray]) -> bytes:
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<I", len(head)), head, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(tensor_to_bytes(arr))
    return b"".join(parts)


def archive_from_bytes(buf: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    (hlen,) = struct.unpack_from("<I", buf, 0)
    header = json.loads(buf[4 : 4 + hlen].decode("utf-8"))
    (count,) = struct.unpack_from("<I", buf, 4 + hlen)
    offset = 8 + hlen
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset : offset + nlen].decode("utf-8")
        offset += nlen
        tensors[name], offset = tensor_from_bytes(buf, offset)
    return header, tensors


def write_archive(path, header: dict, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(archive_to_bytes(header, tensors))


def read_archive(path) -> tuple[dict, dict[str, np.ndarray]]:
    return archive_from_bytes(Path(path).read_bytes())
