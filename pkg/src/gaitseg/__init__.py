"""Unsupervised switching-autoregressive segmentation of wrist accelerometry, with gait detection baselines."""

__version__ = "0.1.0"
