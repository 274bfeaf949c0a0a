"""Ablation harness: matched-seed variant training and metric comparison.

Two mechanism axes are ablated. The mask axis compares no mask conditioning,
mask conditioning alone, and mask conditioning with the non-movable-area
freeze (the full method). The strength axis compares no speed control,
conditioning on the clip sampling stride (the frame-rate analog), strength
conditioning, and strength conditioning plus the strength loss.

Inference settings follow each variant's training: only the freeze-trained
variant applies the hard output freeze, since it is part of that mechanism;
the others return the raw sampled video so the metrics measure what the
conditioning achieved.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import build_schedule, decode_latent, encode_image
from .dataset import DatasetItem, class_id_of, sample_clip
from .evaluation import EvalRecord, motion_mask_precision, motion_strength_error
from .inference import GenerationRequest, generate
from .masks import downsample_mask, freeze_latent
from .model import DenoiserModel
from .rng import Rng
from .strength import strength
from .training import TrainConfig, train


@dataclass(frozen=True)
class VariantSpec:
    mask_mode: str
    strength_mode: str
    lam: float
    hard_freeze: bool


# "full" is the complete method and serves both tables:
# mask ordering uses (no_mask, mask_guidance, full); strength ordering uses
# (no_strength, fps_stride, strength, full).
VARIANTS: dict[str, VariantSpec] = {
    "no_mask": VariantSpec("none", "strength", 0.001, hard_freeze=False),
    "mask_guidance": VariantSpec("guidance", "strength", 0.001, hard_freeze=False),
    "full": VariantSpec("freeze", "strength", 0.001, hard_freeze=True),
    "no_strength": VariantSpec("freeze", "none", 0.0, hard_freeze=True),
    "fps_stride": VariantSpec("freeze", "stride", 0.0, hard_freeze=True),
    "strength": VariantSpec("freeze", "strength", 0.0, hard_freeze=True),
}

MASK_ORDER = ("no_mask", "mask_guidance", "full")
STRENGTH_ORDER = ("no_strength", "fps_stride", "strength", "full")


def variant_config(base: TrainConfig, name: str) -> TrainConfig:
    spec = VARIANTS[name]
    return replace(base, mask_mode=spec.mask_mode, strength_mode=spec.strength_mode, lam=spec.lam)


def train_variants(base: TrainConfig, dataset: list[DatasetItem], names=None, progress=None):
    """Train each variant with the shared seed/config; returns name -> (model, meta)."""
    out = {}
    for name in names or VARIANTS:
        model, _metrics, meta = train(variant_config(base, name), dataset)
        out[name] = (model, meta)
        if progress is not None:
            progress(name)
    return out


@dataclass
class EvalCase:
    image: np.ndarray  # (H, W) reference, frame 0 of the clip
    mask: np.ndarray  # (H, W) ground-truth motion area
    class_id: int
    stride: int
    s_target: float
    frames: int
    seed: int


def build_eval_cases(
    items: list[DatasetItem],
    rng: Rng,
    frames: int = 8,
    strides: tuple[int, ...] = (1, 2, 3),
) -> list[EvalCase]:
    """One case per moving-shape item, cycling through clip strides.

    The target strength is the strength of the ground-truth clip's latent;
    static items are skipped because mask precision is vacuous on them.
    """
    cases = []
    idx = 0
    for item in items:
        if item.spec.motion_class == "static":
            continue
        stride = strides[idx % len(strides)]
        clip = sample_clip(item.video, stride, frames, rng)
        cases.append(
            EvalCase(
                image=clip[0, 0].copy(),
                mask=item.gt_mask,
                class_id=class_id_of(item.spec.motion_class),
                stride=stride,
                s_target=strength(encode_image(clip)),
                frames=frames,
                seed=1_000_000 + idx,
            )
        )
        idx += 1
    return cases


@dataclass
class VariantResult:
    mask_precision: float
    strength_error: float
    no_motion_count: int


@dataclass
class AblationReport:
    rows: dict[str, VariantResult]

    def to_dict(self) -> dict:
        return {
            name: {
                "mask_precision": r.mask_precision,
                "strength_error": r.strength_error,
                "no_motion_count": r.no_motion_count,
            }
            for name, r in self.rows.items()
        }


def evaluate_variant(
    name: str,
    model: DenoiserModel,
    cases: list[EvalCase],
    steps: int = 50,
    diff_threshold: float | None = None,
    sched=None,
) -> VariantResult:
    from .masks import DEFAULT_DIFF_THRESHOLD, frame_diff_mask, to_grayscale

    spec = VARIANTS[name]
    threshold = DEFAULT_DIFF_THRESHOLD if diff_threshold is None else diff_threshold
    sched = sched or build_schedule(1000, 1e-4, 0.02)
    precisions = []
    records = []
    no_motion = 0
    for case in cases:
        if spec.strength_mode == "strength":
            cond = case.s_target
        elif spec.strength_mode == "stride":
            cond = float(case.stride)
        else:
            cond = 0.0
        req = GenerationRequest(
            image=case.image,
            mask=None if spec.mask_mode == "none" else case.mask,
            class_id=case.class_id,
            strength_value=cond,
            frames=case.frames,
            steps=steps,
            seed=case.seed,
        )
        video = generate(req, model, sched, hard_freeze=spec.hard_freeze)
        moving = frame_diff_mask(to_grayscale(video), threshold)
        if moving.sum() == 0:
            no_motion += 1
        precisions.append(motion_mask_precision(video, case.mask, threshold))
        records.append(EvalRecord(request=req, generated=video, target_strength=case.s_target))
    return VariantResult(
        mask_precision=float(np.mean(precisions)),
        strength_error=motion_strength_error(records),
        no_motion_count=no_motion,
    )


def run_ablations(
    models: dict[str, DenoiserModel],
    cases: list[EvalCase],
    steps: int = 50,
    required=None,
) -> AblationReport:
    """Evaluate every required variant; raises on missing checkpoints."""
    required = tuple(required) if required is not None else tuple(VARIANTS)
    missing = [n for n in required if n not in models]
    if missing:
        raise ValueError(f"missing ablation variants: {missing}")
    sched = build_schedule(1000, 1e-4, 0.02)
    rows = {}
    for name in required:
        rows[name] = evaluate_variant(name, models[name], cases, steps=steps, sched=sched)
    return AblationReport(rows=rows)
