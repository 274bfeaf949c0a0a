"""Mask- and strength-guided latent video diffusion on moving-shape data."""

__version__ = "0.1.0"
