"""Unsupervised motion-area mask construction and the non-movable-area freeze.

Masks are float64 (H, W) arrays of exactly 0.0 and 1.0, where 1 marks pixels
allowed to move. They exist at pixel resolution (from frame differencing) and
at latent resolution (max-pooled to match the encoder's downscale factor).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import check_video

# Paper-scale threshold is an integer on 0..255 intensities; pixel videos here
# are stored in [0, 1], so the default maps 5 -> 5/255.
DEFAULT_DIFF_THRESHOLD = 5.0 / 255.0

MIN_COMPONENT_AREA = 4

_FOREGROUND_8CONN = np.ones((3, 3), dtype=bool)
_BACKGROUND_4CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def check_mask(m: np.ndarray, name: str = "mask") -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D (H, W), got shape {m.shape}")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError(f"{name} must be binary 0/1")
    return m


def to_grayscale(video: np.ndarray) -> np.ndarray:
    """Single-channel passthrough, or RGB reduced with luma weights."""
    video = check_video(video)
    c = video.shape[1]
    if c == 1:
        return video
    if c == 3:
        w = np.array([0.299, 0.587, 0.114])
        return np.tensordot(w, video, axes=([0], [1]))[:, None, :, :]
    raise ValueError(f"unsupported channel count {c}; expected 1 or 3")


def frame_diff_mask(gray: np.ndarray, threshold: float = DEFAULT_DIFF_THRESHOLD) -> np.ndarray:
    """Union over consecutive frame pairs of |difference| strictly above threshold."""
    gray = check_video(gray, "gray")
    if gray.shape[0] < 2:
        raise ValueError(f"need at least 2 frames, got {gray.shape[0]}")
    if gray.shape[1] != 1:
        raise ValueError(f"expected 1 channel, got {gray.shape[1]}")
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    diffs = np.abs(np.diff(gray[:, 0], axis=0))
    return (diffs > threshold).any(axis=0).astype(np.float64)


def fill_contours(d: np.ndarray) -> np.ndarray:
    """Fill interior holes of the difference regions.

    Foreground components (8-connected) smaller than MIN_COMPONENT_AREA pixels
    are dropped first; then any 0-pixel not reachable from the image border
    through 0-pixels (4-connected background) becomes 1.
    """
    d = check_mask(d, "d")
    fg = d.astype(bool)
    labels, count = ndimage.label(fg, structure=_FOREGROUND_8CONN)
    if count:
        areas = np.bincount(labels.ravel())
        small = areas < MIN_COMPONENT_AREA
        small[0] = False
        fg[small[labels]] = False
    bg_labels, bg_count = ndimage.label(~fg, structure=_BACKGROUND_4CONN)
    border = np.zeros_like(fg)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    reachable = np.zeros(bg_count + 1, dtype=bool)
    reachable[np.unique(bg_labels[border & ~fg])] = True
    filled = fg | ~reachable[bg_labels]
    return filled.astype(np.float64)


def synthesize_mask(video: np.ndarray, threshold: float = DEFAULT_DIFF_THRESHOLD) -> np.ndarray:
    """Motion-area mask of a pixel video: grayscale, frame-difference, contour fill."""
    return fill_contours(frame_diff_mask(to_grayscale(video), threshold))


def downsample_mask(m: np.ndarray, factor: int) -> np.ndarray:
    """Max-pool to latent resolution: a cell is movable iff any covered pixel is.

    Max rather than mean keeps the mask conservative; freezing a truly moving
    cell causes boundary artifacts, while over-permitting motion does not.
    """
    m = check_mask(m)
    h, w = m.shape
    if h % factor or w % factor:
        raise ValueError(f"mask shape {m.shape} not divisible by factor {factor}")
    return m.reshape(h // factor, factor, w // factor, factor).max(axis=(1, 3))


def freeze_latent(z0: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Reset non-movable pixels of every frame to the first frame's values.

    z0' = (1 - m) * z0[0] + m * z0, broadcast over frames and channels.
    """
    z0 = check_video(z0, "z0")
    m = check_mask(m)
    if m.shape != z0.shape[2:]:
        raise ValueError(f"mask shape {m.shape} != latent spatial shape {z0.shape[2:]}")
    return (1.0 - m) * z0[0:1] + m * z0
