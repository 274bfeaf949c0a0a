"""Evaluation metrics for generated videos.

Frame Consistency substitutes pooled-pixel features for a pretrained image
encoder, keeping the consecutive-cosine structure; its absolute values are
not comparable to encoder-based numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import check_video, encode_image
from .inference import GenerationRequest
from .masks import DEFAULT_DIFF_THRESHOLD, check_mask, frame_diff_mask, to_grayscale
from .strength import strength

POOL = 8


@dataclass
class EvalRecord:
    request: GenerationRequest
    generated: np.ndarray  # pixel video (N, 1, H, W)
    target_strength: float


def motion_mask_precision(
    generated: np.ndarray, mask: np.ndarray, threshold: float = DEFAULT_DIFF_THRESHOLD
) -> float:
    """Fraction of detected moving pixels that fall inside the given mask.

    A video with no detected motion violates no mask constraint and scores
    1.0; callers should flag such records separately.
    """
    generated = check_video(generated, "generated")
    mask = check_mask(mask)
    if mask.shape != generated.shape[2:]:
        raise ValueError(f"mask shape {mask.shape} != video spatial shape {generated.shape[2:]}")
    moving = frame_diff_mask(to_grayscale(generated), threshold)
    total = moving.sum()
    if total == 0:
        return 1.0
    return float((moving * mask).sum() / total)


def motion_strength_error(records: list[EvalRecord]) -> float:
    """Mean squared error between realized and requested motion strength."""
    if not records:
        raise ValueError("records must be non-empty")
    errs = [
        (strength(encode_image(r.generated)) - r.target_strength) ** 2 for r in records
    ]
    return float(np.mean(errs))


def _pooled_features(video: np.ndarray) -> np.ndarray:
    gray = to_grayscale(video)[:, 0]
    n, h, w = gray.shape
    if h % POOL or w % POOL:
        raise ValueError(f"frame size {h}x{w} not divisible by pooling factor {POOL}")
    pooled = gray.reshape(n, h // POOL, POOL, w // POOL, POOL).mean(axis=(2, 4))
    return pooled.reshape(n, -1)


def frame_consistency(generated: np.ndarray) -> float:
    """Mean cosine similarity of consecutive pooled-grayscale frame features."""
    generated = check_video(generated, "generated")
    if generated.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    feats = _pooled_features(generated)
    sims = []
    for a, b in zip(feats[:-1], feats[1:]):
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 and nb == 0.0:
            sims.append(1.0)
        elif na == 0.0 or nb == 0.0:
            sims.append(0.0)
        else:
            sims.append(float(a @ b / (na * nb)))
    return float(np.mean(sims))
