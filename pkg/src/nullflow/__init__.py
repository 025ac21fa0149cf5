"""Flows of partially null and pseudo null curves in Minkowski 4-space."""

from .frames import FrameKind

__version__ = "0.1.0"

__all__ = ["FrameKind", "__version__"]
