"""Trainable noise-prediction network for latent videos.

A flat residual stack of spatial 3x3 convolutions each followed by a temporal
kernel-3 convolution over the frame axis, conditioned through a per-channel
bias projected from the concatenated timestep, strength, and motion-class
embeddings. The motion-area mask rides along as an extra input channel whose
input-convolution kernel slice starts at exactly zero, so mask conditioning
begins as a no-op and is learned.

Forward and backward passes are written out by hand in numpy; the backward
pass is verified against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import NoiseSchedule, check_video
from .masks import check_mask
from .rng import Rng
from .strength import strength, strength_embedding, strength_grad, timestep_embedding


class DivergenceError(RuntimeError):
    """Raised when a training loss stops being finite."""


@dataclass(frozen=True)
class DenoiserConfig:
    latent_channels: int = 1
    base_width: int = 32
    num_res_blocks: int = 2
    embed_dim: int = 64
    num_classes: int = 8  # class 0 is the reserved null class
    frames: int = 8
    latent_hw: int = 16

    def validate(self) -> "DenoiserConfig":
        if self.embed_dim % 2:
            raise ValueError("embed_dim must be even")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2 (null class plus at least one)")
        if min(self.latent_channels, self.base_width, self.num_res_blocks, self.frames, self.latent_hw) < 1:
            raise ValueError("config dimensions must be positive")
        return self


def _param_shapes(cfg: DenoiserConfig) -> dict[str, tuple]:
    cin = cfg.latent_channels + 1  # + mask channel
    w = cfg.base_width
    shapes: dict[str, tuple] = {"in.w": (w, cin, 3, 3), "in.b": (w,)}
    for k in range(cfg.num_res_blocks):
        shapes[f"blocks.{k}.spatial.w"] = (w, w, 3, 3)
        shapes[f"blocks.{k}.spatial.b"] = (w,)
        shapes[f"blocks.{k}.temporal.w"] = (w, w, 3)
        shapes[f"blocks.{k}.temporal.b"] = (w,)
    shapes["out.w"] = (cfg.latent_channels, w, 3, 3)
    shapes["out.b"] = (cfg.latent_channels,)
    shapes["class.table"] = (cfg.num_classes, cfg.embed_dim)
    shapes["proj.w"] = (w, 3 * cfg.embed_dim)
    shapes["proj.b"] = (w,)
    return shapes


def param_count(cfg: DenoiserConfig) -> int:
    return sum(int(np.prod(s)) for s in _param_shapes(cfg).values())


_FAN_IN = {
    "in": lambda cfg: (cfg.latent_channels + 1) * 9,
    "spatial": lambda cfg: cfg.base_width * 9,
    "temporal": lambda cfg: cfg.base_width * 3,
    "out": lambda cfg: cfg.base_width * 9,
    "class": lambda cfg: cfg.embed_dim,
    "proj": lambda cfg: 3 * cfg.embed_dim,
}


@dataclass
class DenoiserModel:
    config: DenoiserConfig
    params: dict[str, np.ndarray] = field(repr=False)

    @property
    def param_count(self) -> int:
        return param_count(self.config)

    def forward(self, z_in, mask, t, strength_value, class_id) -> np.ndarray:
        eps, _ = _forward(self.params, self.config, z_in, mask, t, strength_value, class_id, cache=False)
        return eps


def build_model(cfg: DenoiserConfig, rng: Rng) -> DenoiserModel:
    """Initialize parameters with fan-in-scaled uniforms; zero the mask kernel slice."""
    cfg = cfg.validate()
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(cfg).items():
        kind = name.split(".")[-2] if name.count(".") > 1 else name.split(".")[0]
        bound = 1.0 / np.sqrt(_FAN_IN[kind](cfg))
        params[name] = (rng.uniform(shape) * 2.0 - 1.0) * bound
    params["in.w"][:, cfg.latent_channels, :, :] = 0.0
    return DenoiserModel(config=cfg, params=params)


# -- layer primitives ---------------------------------------------------------


def _conv2d(x, w, b=None):
    # x (F, Cin, H, W), w (Cout, Cin, 3, 3); stride 1, same padding
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        y += b[None, :, None, None]
    return np.ascontiguousarray(y)


def _conv2d_bwd(dy, x, w):
    dx = _conv2d(dy, w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


def _tconv(x, w, b=None):
    # x (F, Cin, H, W), w (Cout, Cin, 3); kernel 3 over the frame axis, zero-padded
    xp = np.pad(x, ((1, 1), (0, 0), (0, 0), (0, 0)))
    win = sliding_window_view(xp, 3, axis=0)  # (F, Cin, H, W, 3)
    y = np.tensordot(win, w, axes=([1, 4], [1, 2])).transpose(0, 3, 1, 2)
    if b is not None:
        y += b[None, :, None, None]
    return np.ascontiguousarray(y)


def _tconv_bwd(dy, x, w):
    dx = _tconv(dy, w.transpose(1, 0, 2)[:, :, ::-1])
    xp = np.pad(x, ((1, 1), (0, 0), (0, 0), (0, 0)))
    win = sliding_window_view(xp, 3, axis=0)
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _silu(x):
    return x * _sigmoid(x)


def _silu_grad(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


# -- forward / backward -------------------------------------------------------


def _embed_vector(cfg, t, strength_value, class_id):
    if not (0 <= class_id < cfg.num_classes):
        raise ValueError(f"class_id {class_id} outside [0, {cfg.num_classes})")
    return np.concatenate(
        [
            timestep_embedding(t, cfg.embed_dim),
            strength_embedding(strength_value, cfg.embed_dim),
            np.zeros(cfg.embed_dim),  # class row added by caller from the table
        ]
    )


def _forward(params, cfg, z_in, mask, t, strength_value, class_id, cache: bool):
    z_in = check_video(z_in, "z_in")
    mask = check_mask(mask)
    hw = (cfg.latent_hw, cfg.latent_hw)
    if z_in.shape[1] != cfg.latent_channels or z_in.shape[2:] != hw:
        raise ValueError(f"z_in shape {z_in.shape} incompatible with config")
    if mask.shape != hw:
        raise ValueError(f"mask shape {mask.shape} incompatible with config")

    frames = z_in.shape[0]
    x = np.concatenate([z_in, np.broadcast_to(mask, (frames, 1) + hw)], axis=1)

    e = _embed_vector(cfg, t, strength_value, class_id)
    e[2 * cfg.embed_dim :] = params["class.table"][class_id]
    pre = params["proj.w"] @ e + params["proj.b"]
    bias = _silu(pre)

    h = _conv2d(x, params["in.w"], params["in.b"])
    c: dict = {"x": x, "e": e, "pre": pre, "h": [h]} if cache else None
    for k in range(cfg.num_res_blocks):
        y1 = _conv2d(h, params[f"blocks.{k}.spatial.w"], params[f"blocks.{k}.spatial.b"])
        y2 = _tconv(y1, params[f"blocks.{k}.temporal.w"], params[f"blocks.{k}.temporal.b"])
        y3 = y2 + bias[None, :, None, None]
        h = h + _silu(y3)
        if cache:
            c["h"].append(h)
            c[f"y1.{k}"] = y1
            c[f"y3.{k}"] = y3
    eps = _conv2d(h, params["out.w"], params["out.b"])
    return eps, c


def _backward(params, cfg, c, d_eps):
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    h_last = c["h"][cfg.num_res_blocks]
    d_h, grads["out.w"], grads["out.b"] = _conv2d_bwd(d_eps, h_last, params["out.w"])
    d_bias = np.zeros(cfg.base_width)
    for k in reversed(range(cfg.num_res_blocks)):
        d_y3 = d_h * _silu_grad(c[f"y3.{k}"])
        d_bias += d_y3.sum(axis=(0, 2, 3))
        d_y1, dw, db = _tconv_bwd(d_y3, c[f"y1.{k}"], params[f"blocks.{k}.temporal.w"])
        grads[f"blocks.{k}.temporal.w"] = dw
        grads[f"blocks.{k}.temporal.b"] = db
        d_h_conv, dw, db = _conv2d_bwd(d_y1, c["h"][k], params[f"blocks.{k}.spatial.w"])
        grads[f"blocks.{k}.spatial.w"] = dw
        grads[f"blocks.{k}.spatial.b"] = db
        d_h = d_h + d_h_conv
    _, grads["in.w"], grads["in.b"] = _conv2d_bwd(d_h, c["x"], params["in.w"])

    d_pre = d_bias * _silu_grad(c["pre"])
    grads["proj.w"] = np.outer(d_pre, c["e"])
    grads["proj.b"] = d_pre
    d_e = params["proj.w"].T @ d_pre
    return grads, d_e[2 * cfg.embed_dim :]


def loss_and_gradients(
    model: DenoiserModel,
    z0_prime: np.ndarray,
    mask: np.ndarray,
    t: int,
    eps: np.ndarray,
    s_target: float,
    class_id: int,
    lam: float,
    sched: NoiseSchedule,
    s_condition: float | None = None,
):
    """Total loss and parameter gradients for one training sample.

    The noise-prediction loss is the mean squared error over the last N
    frames (the clean reference frame carries no noise target and is
    excluded); the strength loss flows through the one-step clean-latent
    estimate back into the noise prediction.

    Returns (grads, l_eps, l_s).
    """
    cfg = model.config
    ab = float(sched.alpha_bar[t - 1])
    zt = np.sqrt(ab) * z0_prime + np.sqrt(1.0 - ab) * eps
    z_in = np.concatenate([z0_prime[0:1], zt], axis=0)
    cond = s_target if s_condition is None else s_condition

    eps_full, cache = _forward(model.params, cfg, z_in, mask, t, cond, class_id, cache=True)
    eps_hat = eps_full[1:]

    n_el = eps.size
    resid = eps_hat - eps
    l_eps = float(np.mean(resid**2))

    z0_hat = (zt - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)
    s_hat = strength(z0_hat)
    l_s = (s_target - s_hat) ** 2

    total = l_eps + lam * l_s
    if not np.isfinite(total):
        raise DivergenceError(f"non-finite loss at t={t}: l_eps={l_eps}, l_s={l_s}")

    d_eps_hat = 2.0 * resid / n_el
    if lam != 0.0:
        dls_dz0hat = 2.0 * (s_hat - s_target) * strength_grad(z0_hat)
        d_eps_hat = d_eps_hat + lam * dls_dz0hat * (-np.sqrt(1.0 - ab) / np.sqrt(ab))

    d_full = np.concatenate([np.zeros_like(eps_full[0:1]), d_eps_hat], axis=0)
    grads, d_class_row = _backward(model.params, cfg, cache, d_full)
    grads["class.table"][class_id] += d_class_row
    return grads, l_eps, l_s


def parameter_gradients(model: DenoiserModel, batch, lam: float, sched: NoiseSchedule):
    """Gradients of l_eps + lam * l_s for one TrainBatch; see training.TrainBatch."""
    return loss_and_gradients(
        model,
        batch.z0_prime,
        batch.mask,
        batch.t,
        batch.eps,
        batch.s_target,
        batch.class_id,
        lam,
        sched,
        s_condition=batch.s_condition,
    )
