"""Harmonic maps and convexity checks in Busemann non-positively curved spaces."""

from ._bnpc import *  # noqa: F401,F403
from ._bnpc import generators  # noqa: F401

__all__ = [name for name in dir() if not name.startswith("_")]
