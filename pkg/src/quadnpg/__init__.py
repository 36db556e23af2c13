"""Quadrotor control learned with deterministic per-sample natural gradients."""

__version__ = "0.1.0"
