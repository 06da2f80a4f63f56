"""BiGRU + multi-head attention health-state classifier for SSD telemetry."""

from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
