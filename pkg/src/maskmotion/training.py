"""Training loop: batch preparation, AdamW, metrics logging, checkpointing.

Every stochastic choice flows through one Rng seeded from the config, in a
fixed draw order, so a (seed, config) pair fully determines the resulting
checkpoint bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from . import aav1
from .core import build_schedule, encode_image
from .dataset import DatasetItem, CLASS_NAMES, class_id_of, sample_clip
from .masks import DEFAULT_DIFF_THRESHOLD, downsample_mask, freeze_latent, synthesize_mask
from .model import DenoiserConfig, DenoiserModel, build_model, parameter_gradients
from .rng import Rng
from .strength import strength

MASK_MODES = ("none", "guidance", "freeze")
STRENGTH_MODES = ("none", "stride", "strength")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 2
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    lam: float = 0.001
    diff_threshold: float = DEFAULT_DIFF_THRESHOLD
    clip_length: int = 8
    strides: tuple[int, ...] = (1, 2, 3)
    class_dropout: float = 0.1
    mask_dropout: float = 0.1
    seed: int = 0
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    mask_mode: str = "freeze"
    strength_mode: str = "strength"
    model: DenoiserConfig = field(default_factory=DenoiserConfig)

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.strides:
            raise ValueError("strides must be non-empty")
        if not (0.0 <= self.class_dropout <= 1.0 and 0.0 <= self.mask_dropout <= 1.0):
            raise ValueError("dropout probabilities must be in [0, 1]")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")
        if self.strength_mode not in STRENGTH_MODES:
            raise ValueError(f"strength_mode must be one of {STRENGTH_MODES}")
        self.model.validate()
        return self


def paper_scale_preset() -> TrainConfig:
    """Full-scale hyperparameters: lr 5e-5, 10k iterations."""
    return TrainConfig(learning_rate=5e-5, iterations=10000)


def config_to_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["strides"] = list(cfg.strides)
    return d


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    model = DenoiserConfig(**d.pop("model", {}))
    if "strides" in d:
        d["strides"] = tuple(d["strides"])
    return TrainConfig(model=model, **d)


@dataclass
class TrainBatch:
    z0_prime: np.ndarray  # (N, C, h, w) freeze-processed clean latent
    mask: np.ndarray  # (h, w) latent-resolution motion mask
    t: int
    eps: np.ndarray
    s_target: float
    class_id: int
    s_condition: float  # value fed to the strength embedding (target, stride, or 0)


def make_train_batch(item: DatasetItem, cfg: TrainConfig, rng: Rng) -> TrainBatch:
    """One training sample; draw order: stride, clip offset, dropouts, t, eps."""
    stride = cfg.strides[rng.integers(0, len(cfg.strides))]
    clip = sample_clip(item.video, stride, cfg.clip_length, rng)
    drop_class = rng.uniform() < cfg.class_dropout
    drop_mask = rng.uniform() < cfg.mask_dropout

    z0 = encode_image(clip)
    hw = z0.shape[2]
    if cfg.mask_mode == "none" or drop_mask:
        mask = np.ones((hw, hw))
    else:
        mask = downsample_mask(synthesize_mask(clip, cfg.diff_threshold), 2)

    z0_prime = freeze_latent(z0, mask) if cfg.mask_mode == "freeze" else z0
    s_target = strength(z0_prime)
    class_id = 0 if drop_class else class_id_of(item.spec.motion_class)
    t = rng.integers(1, cfg.timesteps + 1)
    eps = rng.gaussian(z0_prime.shape)

    if cfg.strength_mode == "strength":
        s_condition = s_target
    elif cfg.strength_mode == "stride":
        s_condition = float(stride)
    else:
        s_condition = 0.0
    return TrainBatch(z0_prime, mask, t, eps, s_target, class_id, s_condition)


class AdamW:
    """Decoupled weight decay Adam over a named parameter dict."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, weight_decay=0.01, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
            p -= self.lr * (update + self.weight_decay * p)


@dataclass(frozen=True)
class LossReport:
    l_eps: float
    l_s: float
    lam: float
    l: float

    @staticmethod
    def combine(l_eps: float, l_s: float, lam: float) -> "LossReport":
        return LossReport(l_eps=l_eps, l_s=l_s, lam=lam, l=l_eps + lam * l_s)


def train(cfg: TrainConfig, dataset: list[DatasetItem], log_path=None, progress=None):
    """Train a denoiser; returns (model, metrics, meta).

    metrics is one LossReport per iteration; meta records the strength range
    seen during training (used by clients to bound strength controls).
    """
    cfg = cfg.validate()
    if not dataset:
        raise ValueError("dataset must be non-empty")
    sched = build_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    rng = Rng(cfg.seed)
    model = build_model(cfg.model, rng)
    opt = AdamW(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.weight_decay)

    metrics: list[LossReport] = []
    s_seen: list[float] = []
    log_file = open(log_path, "w") if log_path else None
    try:
        for it in range(1, cfg.iterations + 1):
            grads_sum = None
            le_sum = 0.0
            ls_sum = 0.0
            for _ in range(cfg.batch_size):
                item = dataset[rng.integers(0, len(dataset))]
                batch = make_train_batch(item, cfg, rng)
                s_seen.append(batch.s_target)
                grads, le, ls = parameter_gradients(model, batch, cfg.lam, sched)
                le_sum += le
                ls_sum += ls
                if grads_sum is None:
                    grads_sum = grads
                else:
                    for k in grads_sum:
                        grads_sum[k] += grads[k]
            inv = 1.0 / cfg.batch_size
            for k in grads_sum:
                grads_sum[k] *= inv
            opt.step(model.params, grads_sum)
            report = LossReport.combine(le_sum * inv, ls_sum * inv, cfg.lam)
            metrics.append(report)
            if log_file:
                log_file.write(json.dumps({"iteration": it, **asdict(report)}) + "\n")
            if progress is not None:
                progress(it / cfg.iterations)
    finally:
        if log_file:
            log_file.close()

    meta = {
        "strength_min": float(min(s_seen)) if s_seen else 0.0,
        "strength_max": float(max(s_seen)) if s_seen else 0.0,
        "iterations": cfg.iterations,
        "seed": cfg.seed,
    }
    return model, metrics, meta


def save_checkpoint(path, model: DenoiserModel, meta: dict | None = None) -> None:
    header = {
        "format": "maskmotion-checkpoint",
        "config": asdict(model.config),
        "classes": list(CLASS_NAMES),
        "meta": meta or {},
    }
    aav1.write_archive(path, header, model.params)


def load_checkpoint(path) -> tuple[DenoiserModel, dict]:
    header, tensors = aav1.read_archive(path)
    if header.get("format") != "maskmotion-checkpoint":
        raise ValueError(f"{path} is not a checkpoint archive")
    cfg = DenoiserConfig(**header["config"])
    model = DenoiserModel(config=cfg, params=tensors)
    return model, header


def save_dataset(path, items: list[DatasetItem]) -> None:
    root = Path(path)
    (root / "videos").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    specs = []
    for i, item in enumerate(items):
        aav1.write_tensor(root / "videos" / f"{i:04d}.aav1", item.video)
        aav1.write_tensor(root / "masks" / f"{i:04d}.aav1", item.gt_mask)
        specs.append(item.spec.to_dict())
    (root / "specs.json").write_text(json.dumps(specs, indent=1))


def load_dataset(path) -> list[DatasetItem]:
    from .dataset import ShapeVideoSpec

    root = Path(path)
    specs = json.loads((root / "specs.json").read_text())
    items = []
    for i, spec in enumerate(specs):
        video = aav1.read_tensor(root / "videos" / f"{i:04d}.aav1")
        gt = aav1.read_tensor(root / "masks" / f"{i:04d}.aav1")
        items.append(DatasetItem(video=video, spec=ShapeVideoSpec(**spec), gt_mask=gt))
    return items
