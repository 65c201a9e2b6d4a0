"""Desk-scale Animat training pipeline.

Builds stochastic neuron simulators from (synthetic) multi-electrode spike
recordings, trains goal-directed policies through them with a discrete
soft actor-critic, refreshes the simulators during training (parameter
shadowing), and statistically compares mapping and shadowing conditions.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
