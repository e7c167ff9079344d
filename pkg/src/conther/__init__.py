"""Contextual TD3 with hindsight relabeling on a kinematic reaching arm."""

from conther.kern import COMPILED as KERNELS_COMPILED

__version__ = "0.1.0"

__all__ = ["KERNELS_COMPILED", "__version__"]
