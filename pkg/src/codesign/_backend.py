"""Kernel backend selection.

The compiled extension is used when importable; set ``CODESIGN_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if not os.environ.get("CODESIGN_PURE_PYTHON"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

jacobi_eigh = _impl.jacobi_eigh
cholesky = _impl.cholesky
best_flip_ascent = _impl.best_flip_ascent

__all__ = ["BACKEND", "jacobi_eigh", "cholesky", "best_flip_ascent"]
