"""Diffusion-model probabilistic constellation shaping for QAM link simulation."""

__version__ = "0.1.0"
