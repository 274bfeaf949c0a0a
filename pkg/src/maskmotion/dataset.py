"""Procedural moving-shape videos with analytic ground-truth motion masks.

Each video shows 1-3 solid shapes on a uniform background; at most one shape
moves (translation, growth, or shrinkage at constant speed). Shapes are
rendered from half-open geometric predicates on the pixel grid, so the swept
region of the mover is known exactly and doubles as the ground-truth mask.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .rng import Rng

SHAPE_KINDS = ("square", "circle", "triangle")
MOTION_CLASSES = ("static", "left", "right", "up", "down", "grow", "shrink")
NULL_CLASS_ID = 0
CLASS_NAMES = ("null",) + MOTION_CLASSES

_TRANSLATE = {"left": (0.0, -1.0), "right": (0.0, 1.0), "up": (-1.0, 0.0), "down": (1.0, 0.0)}


def class_id_of(motion_class: str) -> int:
    return 1 + MOTION_CLASSES.index(motion_class)


@dataclass(frozen=True)
class ShapeVideoSpec:
    kind: str
    size: float
    row: float  # top-left corner of the initial bounding box
    col: float
    motion_class: str
    speed: float  # px per source frame; 0 iff static
    intensity: float
    background: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DatasetItem:
    video: np.ndarray  # (frames, 1, H, W) in [0, 1]
    spec: ShapeVideoSpec
    gt_mask: np.ndarray  # (H, W) swept region of the mover; all zeros when static


def _shape_state(spec: ShapeVideoSpec, frame: int) -> tuple[float, float, float]:
    """Center (cy, cx) and size at a source frame index."""
    cy = spec.row + (spec.size - 1.0) / 2.0
    cx = spec.col + (spec.size - 1.0) / 2.0
    size = spec.size
    if spec.motion_class in _TRANSLATE:
        dy, dx = _TRANSLATE[spec.motion_class]
        cy += dy * spec.speed * frame
        cx += dx * spec.speed * frame
    elif spec.motion_class == "grow":
        size += 2.0 * spec.speed * frame
    elif spec.motion_class == "shrink":
        size -= 2.0 * spec.speed * frame
    return cy, cx, size


def footprint(spec: ShapeVideoSpec, image_size: int, frame: int = 0) -> np.ndarray:
    """Boolean pixel mask of the shape at one source frame."""
    cy, cx, size = _shape_state(spec, frame)
    ys, xs = np.mgrid[0:image_size, 0:image_size].astype(np.float64)
    half = size / 2.0
    if spec.kind == "square":
        # half-open box keeps pixel counts stable under fractional centers
        inside = (ys - cy >= -half) & (ys - cy < half) & (xs - cx >= -half) & (xs - cx < half)
    elif spec.kind == "circle":
        inside = (ys - cy) ** 2 + (xs - cx) ** 2 < half**2
    elif spec.kind == "triangle":
        # isoceles, apex up; width grows linearly from apex to base
        rel = ys - (cy - half)
        inside = (rel >= 0) & (ys - cy < half) & (np.abs(xs - cx) < rel / 2.0)
    else:
        raise ValueError(f"unknown shape kind {spec.kind!r}")
    return inside


def _in_frame(spec: ShapeVideoSpec, image_size: int, frames: int) -> bool:
    for f in (0, frames - 1):
        cy, cx, size = _shape_state(spec, f)
        half = size / 2.0
        if size < 2.0:
            return False
        if cy - half < 0 or cy + half > image_size or cx - half < 0 or cx + half > image_size:
            return False
    return True


def swept_mask(spec: ShapeVideoSpec, image_size: int, frame_indices) -> np.ndarray:
    """Union of the shape's footprint over the given source-frame indices."""
    acc = np.zeros((image_size, image_size), dtype=bool)
    for f in frame_indices:
        acc |= footprint(spec, image_size, f)
    return acc.astype(np.float64)


def render_video(
    mover: ShapeVideoSpec, image_size: int, frames: int, distractors=()
) -> np.ndarray:
    video = np.full((frames, 1, image_size, image_size), mover.background, dtype=np.float64)
    static_layer = np.zeros((image_size, image_size), dtype=bool)
    values = np.zeros((image_size, image_size), dtype=np.float64)
    for d in distractors:
        fp = footprint(d, image_size, 0)
        static_layer |= fp
        values[fp] = d.intensity
    for f in range(frames):
        frame = video[f, 0]
        frame[static_layer] = values[static_layer]
        frame[footprint(mover, image_size, f)] = mover.intensity
    return video


class InfeasibleSpecError(RuntimeError):
    """No in-frame, non-overlapping placement found within the retry budget."""


def _sample_mover(image_size: int, frames: int, rng: Rng) -> ShapeVideoSpec:
    motion_class = MOTION_CLASSES[rng.integers(0, len(MOTION_CLASSES))]
    kind = SHAPE_KINDS[rng.integers(0, len(SHAPE_KINDS))]
    size = float(rng.integers(6, 11))
    if motion_class == "static":
        speed = 0.0
    elif motion_class in _TRANSLATE:
        speed = (0.5, 1.0)[rng.integers(0, 2)]
    else:
        speed = (0.1, 0.2)[rng.integers(0, 2)]
    intensity = 0.55 + 0.45 * rng.uniform()
    bg = 0.05 + 0.25 * rng.uniform()
    row = float(rng.integers(0, max(1, image_size - int(size))))
    col = float(rng.integers(0, max(1, image_size - int(size))))
    return ShapeVideoSpec(kind, size, row, col, motion_class, speed, intensity, bg)


def generate_dataset(count: int, image_size: int, source_frames: int, rng: Rng) -> list[DatasetItem]:
    """Deterministic dataset of moving-shape videos with exact swept-region masks."""
    if image_size % 2:
        raise ValueError("image_size must be divisible by 2")
    if source_frames < 24:
        raise ValueError("source_frames must be >= 24")
    items = []
    for _ in range(count):
        mover = None
        for _attempt in range(100):
            cand = _sample_mover(image_size, source_frames, rng)
            if _in_frame(cand, image_size, source_frames):
                mover = cand
                break
        if mover is None:
            raise InfeasibleSpecError("could not place a mover inside the frame")
        sweep = swept_mask(mover, image_size, range(source_frames)).astype(bool)
        occupied = sweep.copy()

        distractors: list[ShapeVideoSpec] = []
        n_extra = rng.integers(0, 3)
        for _d in range(n_extra):
            for _attempt in range(100):
                kind = SHAPE_KINDS[rng.integers(0, len(SHAPE_KINDS))]
                size = float(rng.integers(5, 10))
                row = float(rng.integers(0, image_size - int(size)))
                col = float(rng.integers(0, image_size - int(size)))
                intensity = 0.55 + 0.45 * rng.uniform()
                cand = ShapeVideoSpec(kind, size, row, col, "static", 0.0, intensity, mover.background)
                fp = footprint(cand, image_size, 0)
                if not fp.any() or (fp & occupied).any():
                    continue
                occupied |= fp
                distractors.append(cand)
                break

        video = render_video(mover, image_size, source_frames, distractors)
        gt = (
            np.zeros((image_size, image_size), dtype=np.float64)
            if mover.motion_class == "static"
            else sweep.astype(np.float64)
        )
        items.append(DatasetItem(video=video, spec=mover, gt_mask=gt))
    return items


def sample_clip(video: np.ndarray, stride: int, length: int, rng: Rng) -> np.ndarray:
    """Clip of ``length`` frames at a fixed stride from a random valid offset."""
    source = video.shape[0]
    span = (length - 1) * stride
    if span >= source:
        raise ValueError(f"need more than {span} source frames for length {length} stride {stride}, got {source}")
    offset = rng.integers(0, source - span)
    return video[offset : offset + span + 1 : stride][:length]
