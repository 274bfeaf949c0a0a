"""Motion strength metric, losses, and sinusoidal conditioning embeddings."""

from __future__ import annotations

import numpy as np

from .core import check_video

# Latent strengths on this data live in roughly [0, 0.3]; sinusoidal
# embeddings discriminate best on inputs of order 1..1000, so strength is
# scaled by a fixed factor before embedding.
STRENGTH_EMBED_SCALE = 100.0


def strength(z: np.ndarray) -> float:
    """Mean absolute inter-frame difference, reduced to a scalar.

    The per-pair difference tensor is reduced by its elementwise mean, which
    makes the value intensive (independent of resolution) and usable as a
    scalar conditioning signal.
    """
    z = check_video(z)
    if z.shape[0] < 2:
        raise ValueError(f"need at least 2 frames, got {z.shape[0]}")
    return float(np.mean(np.abs(np.diff(z, axis=0))))


def strength_grad(z: np.ndarray) -> np.ndarray:
    """d strength / d z; sign-of-difference terms scaled by the mean reduction."""
    z = check_video(z)
    n = z.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 frames, got {n}")
    scale = 1.0 / ((n - 1) * int(np.prod(z.shape[1:])))
    sgn = np.sign(np.diff(z, axis=0))
    g = np.zeros_like(z)
    g[1:] += sgn
    g[:-1] -= sgn
    return scale * g


def strength_loss(z0: np.ndarray, z0_hat: np.ndarray) -> float:
    """Squared error between the two videos' motion strengths."""
    z0 = check_video(z0, "z0")
    z0_hat = check_video(z0_hat, "z0_hat")
    if z0.shape != z0_hat.shape:
        raise ValueError(f"shape mismatch {z0.shape} vs {z0_hat.shape}")
    return (strength(z0) - strength(z0_hat)) ** 2


def strength_loss_grad(z0: np.ndarray, z0_hat: np.ndarray) -> np.ndarray:
    """d strength_loss / d z0_hat."""
    return 2.0 * (strength(z0_hat) - strength(z0)) * strength_grad(z0_hat)


def combined_loss(l_eps: float, l_s: float, lam: float) -> float:
    """Total training loss: noise prediction loss plus scaled strength loss."""
    if l_eps < 0 or l_s < 0:
        raise ValueError("loss terms must be non-negative")
    return l_eps + lam * l_s


def sinusoidal_embedding(x: float, dim: int) -> np.ndarray:
    """Half sin, half cos over geometrically spaced frequencies (base 10000)."""
    if dim % 2:
        raise ValueError(f"embedding dim must be even, got {dim}")
    half = dim // 2
    if half == 1:
        freqs = np.ones(1)
    else:
        freqs = 10000.0 ** (-np.arange(half, dtype=np.float64) / (half - 1))
    ang = float(x) * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    return sinusoidal_embedding(float(t), dim)


def strength_embedding(s: float, dim: int) -> np.ndarray:
    """Strength conditioning vector; same form as the timestep embedding."""
    if s < 0:
        raise ValueError("strength must be non-negative")
    return sinusoidal_embedding(s * STRENGTH_EMBED_SCALE, dim)
