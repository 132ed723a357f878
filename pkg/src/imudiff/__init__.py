"""Toy motion diffusion with an acceleration loss, virtual IMUs and a HAR harness."""

__version__ = "0.1.0"
