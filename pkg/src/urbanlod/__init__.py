"""Multi-scale urban environment generation and crowd/epidemic simulation."""

from __future__ import annotations

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: E402

__all__ = ["__version__", "KERNEL_BACKEND"]
