"""Nonsmooth speed-gradient control: Brockett integrator and vibrating string."""

__version__ = "0.1.0"

from ._kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
