"""Bimodal shared-workspace training testbed on a procedural shapes dataset."""

__version__ = "0.1.0"
