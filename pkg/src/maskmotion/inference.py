"""Generation requests: single-mask animation and layered composition."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NoiseSchedule, build_schedule, ddim_sample, decode_latent, encode_image
from .masks import check_mask, downsample_mask, freeze_latent
from .model import DenoiserModel
from .rng import Rng, splitmix64

LATENT_FACTOR = 2


@dataclass
class GenerationRequest:
    image: np.ndarray  # (H, W) grayscale in [0, 1]
    mask: np.ndarray | None = None  # (H, W) pixel-resolution motion mask; None = all movable
    class_id: int = 0
    strength_value: float = 0.0
    frames: int = 8
    steps: int = 50
    seed: int = 0

    def validate(self) -> "GenerationRequest":
        self.image = np.asarray(self.image, dtype=np.float64)
        if self.image.ndim != 2:
            raise ValueError(f"image must be 2-D (H, W), got shape {self.image.shape}")
        if self.image.min() < 0.0 or self.image.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        if self.mask is not None:
            self.mask = check_mask(self.mask)
            if self.mask.shape != self.image.shape:
                raise ValueError(f"mask shape {self.mask.shape} != image shape {self.image.shape}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.strength_value < 0:
            raise ValueError("strength_value must be non-negative")
        return self


@dataclass
class CompositionLayer:
    mask: np.ndarray
    class_id: int
    strength_value: float


@dataclass
class CompositionRequest:
    image: np.ndarray
    layers: list[CompositionLayer] = field(default_factory=list)
    frames: int = 8
    steps: int = 50
    seed: int = 0


def default_schedule() -> NoiseSchedule:
    return build_schedule(1000, 1e-4, 0.02)


def sample_video_latent(
    req: GenerationRequest,
    model: DenoiserModel,
    sched: NoiseSchedule,
    progress=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw DDIM output for a request; returns (latent, z_ref, latent mask)."""
    req.validate()
    z_ref = encode_image(req.image[None, None])
    mask_px = req.mask if req.mask is not None else np.ones_like(req.image)
    mask_lat = downsample_mask(mask_px, LATENT_FACTOR)
    rng = Rng(req.seed)
    z = ddim_sample(
        model,
        z_ref,
        mask_lat,
        req.class_id,
        req.strength_value,
        req.frames,
        req.steps,
        sched,
        rng,
        progress=progress,
    )
    return z, z_ref, mask_lat


def generate(
    req: GenerationRequest,
    model: DenoiserModel,
    sched: NoiseSchedule | None = None,
    hard_freeze: bool = True,
    progress=None,
) -> np.ndarray:
    """Animate a reference image; returns a pixel video (frames, 1, H, W) in [0, 1].

    The output's first frame is pinned to the encoded-decoded reference, and
    with ``hard_freeze`` every non-movable latent cell is reset to the
    reference values, so pixels outside the (decoded) mask are bit-identical
    across frames. Conditioning alone cannot guarantee the frozen-outside
    contract on a model this small, hence the explicit enforcement.
    """
    sched = sched or default_schedule()
    z, z_ref, mask_lat = sample_video_latent(req, model, sched, progress=progress)
    z[0] = z_ref[0]
    if hard_freeze:
        z = freeze_latent(z, mask_lat)
    return np.clip(decode_latent(z), 0.0, 1.0)


def layer_seed(seed: int, index: int) -> int:
    return splitmix64(seed + index + 1)


def compose(
    req: CompositionRequest,
    model: DenoiserModel,
    sched: NoiseSchedule | None = None,
    progress=None,
) -> np.ndarray:
    """Sequential multi-region animation: generate per layer, merge by mask.

    Later layers take precedence where masks overlap. Every layer is animated
    from the original reference image; merge masks are applied at pixel
    resolution exactly as given.
    """
    if not req.layers:
        raise ValueError("composition needs at least one layer")
    sched = sched or default_schedule()
    base_req = GenerationRequest(image=req.image, frames=req.frames, steps=req.steps).validate()
    base_frame = np.clip(decode_latent(encode_image(base_req.image[None, None])), 0.0, 1.0)
    merged = np.repeat(base_frame, req.frames, axis=0)
    for k, layer in enumerate(req.layers):
        sub = GenerationRequest(
            image=req.image,
            mask=layer.mask,
            class_id=layer.class_id,
            strength_value=layer.strength_value,
            frames=req.frames,
            steps=req.steps,
            seed=layer_seed(req.seed, k),
        )
        video = generate(sub, model, sched)
        m = check_mask(layer.mask)
        merged = (1.0 - m) * merged + m * video
        if progress is not None:
            progress((k + 1) / len(req.layers))
    return merged
