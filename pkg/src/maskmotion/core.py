"""Latent video diffusion core: schedule, forward process, DDIM sampling.

Video tensors are plain float64 numpy arrays of shape (frames, channels, H, W).
Pixel-space videos live in [0, 1]; latent videos are unconstrained. The latent
space is 2x average-pooled pixel space, a fixed stand-in for a learned
autoencoder that keeps low-level detail and is cheap to invert for display.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Rng

# Default schedule. T follows standard practice; beta_end is chosen so the
# terminal signal sqrt(abar_T) ~ 0.22 stays well above the denoiser's
# achievable prediction error at this scale -- shared-noise inference relies
# on that residual reference signal surviving the sampling trajectory.
DEFAULT_TIMESTEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.006


def check_video(v: np.ndarray, name: str = "video") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 4 or min(v.shape) < 1:
        raise ValueError(f"{name} must have shape (N, C, H, W) with positive dims, got {v.shape}")
    return v


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep noise levels; ``alpha_bar[t-1]`` is the cumulative product for timestep t."""

    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray


def build_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule with cumulative alpha-bar products.

    Defaults match the standard 1000-step linear schedule diffusion models
    commonly train with.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - beta)
    return NoiseSchedule(T=T, beta=beta, alpha_bar=alpha_bar)


def _abar(sched: NoiseSchedule, t: int) -> float:
    if not (1 <= t <= sched.T):
        raise ValueError(f"timestep {t} outside [1, {sched.T}]")
    return float(sched.alpha_bar[t - 1])


def forward_noise(z0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form noising: sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps."""
    z0 = check_video(z0, "z0")
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != z0.shape:
        raise ValueError(f"eps shape {eps.shape} != z0 shape {z0.shape}")
    ab = _abar(sched, t)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def estimate_z0(zt: np.ndarray, eps_pred: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Invert the forward process given a noise prediction: (zt - sqrt(1-abar)*eps) / sqrt(abar)."""
    zt = check_video(zt, "zt")
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    if eps_pred.shape != zt.shape:
        raise ValueError(f"eps_pred shape {eps_pred.shape} != zt shape {zt.shape}")
    ab = _abar(sched, t)
    return (zt - np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(ab)


def shared_noise_init(z_ref: np.ndarray, n_frames: int, sched: NoiseSchedule, rng: Rng) -> np.ndarray:
    """Terminal latent for sampling: the noised reference plus per-frame fresh noise.

    Every frame shares the same sqrt(abar_T) * z_ref base signal; the noise
    component is drawn independently per frame. Sampling always starts here,
    never from pure Gaussian noise, because the schedule leaves residual
    signal at the terminal timestep.
    """
    z_ref = check_video(z_ref, "z_ref")
    if z_ref.shape[0] != 1:
        raise ValueError(f"z_ref must have exactly 1 frame, got {z_ref.shape[0]}")
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    ab_T = float(sched.alpha_bar[-1])
    eps = rng.gaussian((n_frames,) + z_ref.shape[1:])
    return np.sqrt(ab_T) * z_ref + np.sqrt(1.0 - ab_T) * eps


def ddim_timesteps(T: int, steps: int) -> list[int]:
    """Descending, uniformly strided (up to rounding) timesteps ending at T."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ts = sorted({max(1, int(round(k * T / steps))) for k in range(1, steps + 1)}, reverse=True)
    return ts


def ddim_sample(
    model,
    z_ref: np.ndarray,
    mask_latent: np.ndarray,
    class_id: int,
    strength_value: float,
    n_frames: int,
    steps: int,
    sched: NoiseSchedule,
    rng: Rng,
    progress=None,
) -> np.ndarray:
    """Deterministic DDIM (eta = 0) from a shared-noise initial latent.

    At every step the denoiser sees the clean reference latent prepended in
    the temporal dimension, so the model input holds n_frames + 1 frames; the
    reference frame's prediction is discarded. Returns the last n_frames of
    the denoised latent.

    ``model`` needs a ``forward(z_in, mask, t, strength_value, class_id)``
    method returning a noise prediction of the same frame count as ``z_in``.
    """
    z_ref = check_video(z_ref, "z_ref")
    z = shared_noise_init(z_ref, n_frames, sched, rng)
    ts = ddim_timesteps(sched.T, steps)
    for i, t in enumerate(ts):
        z_in = np.concatenate([z_ref, z], axis=0)
        eps = model.forward(z_in, mask_latent, t, strength_value, class_id)
        if eps.shape != z_in.shape:
            raise ValueError(f"model output shape {eps.shape} != input shape {z_in.shape}")
        eps = eps[1:]
        z0_hat = estimate_z0(z, eps, t, sched)
        t_next = ts[i + 1] if i + 1 < len(ts) else 0
        ab_next = float(sched.alpha_bar[t_next - 1]) if t_next >= 1 else 1.0
        z = np.sqrt(ab_next) * z0_hat + np.sqrt(1.0 - ab_next) * eps
        if progress is not None:
            progress((i + 1) / len(ts))
    return z


def encode_image(pixels: np.ndarray) -> np.ndarray:
    """2x2 non-overlapping average pooling per channel per frame."""
    pixels = check_video(pixels, "pixels")
    n, c, h, w = pixels.shape
    if h % 2 or w % 2:
        raise ValueError(f"H and W must be divisible by 2, got {h}x{w}")
    return pixels.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def decode_latent(latent: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 2x upsampling; the display inverse of encode_image."""
    latent = check_video(latent, "latent")
    return latent.repeat(2, axis=2).repeat(2, axis=3)
