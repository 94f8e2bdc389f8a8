"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when
``URBANLOD_KERNELS=python`` is set, the numpy fallback is used.  Both
produce identical results.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("URBANLOD_KERNELS", "").lower() != "python":
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

micro_run = _impl.micro_run
macro_claim = _impl.macro_claim
macro_release = _impl.macro_release


def get_backend(name: str | None = None):
    """Return the kernel module named ``name`` ('cython' or 'python'), default the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
