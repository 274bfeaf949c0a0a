"""PNG exchange helpers for the service API.

Grayscale frames quantize [0, 1] floats to 8 bits; masks use 0 = frozen,
255 = movable.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


def encode_gray(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected 2-D array, got shape {arr.shape}")
    u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_gray(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("L")
    return np.asarray(img, dtype=np.float64) / 255.0


def encode_mask(mask: np.ndarray) -> bytes:
    mask = np.asarray(mask, dtype=np.float64)
    return encode_gray(np.where(mask > 0, 1.0, 0.0))


def decode_mask(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("L")
    return (np.asarray(img) > 127).astype(np.float64)


def to_base64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def from_base64(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except Exception as exc:
        raise ValueError(f"invalid base64 payload: {exc}") from None
