"""Multiscale follower-leader swarm toolkit.

Agent-based velocity-jump simulation, angle-resolved kinetic transport, and
the derived macroscopic systems (diffusive and hyperbolic), with shared
kernels, fields, and a cross-scale comparison harness.
"""

from .params import ModelParams, RateShape

__version__ = "0.1.0"

__all__ = ["ModelParams", "RateShape", "__version__"]
