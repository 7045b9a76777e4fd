"""Monotone P1 finite elements for parabolic Hamilton-Jacobi-Bellman equations."""

from ._core import *  # noqa: F401,F403
from ._core import (
    CertificationError,
    ConfigurationError,
    Discretization,
    MeshPattern,
    MonotonicityError,
    SplittingMode,
)

__all__ = [name for name in dir() if not name.startswith("_")]
