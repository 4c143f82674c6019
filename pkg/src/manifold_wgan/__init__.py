"""Manifold-valued image generation with Wasserstein GANs."""

__version__ = "0.1.0"
