"""Kernel dispatch: compiled extension if importable, numpy fallback otherwise.

Set ``GBPLL_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("GBPLL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py
else:
    _impl = _kernels_py

farthest_pairs = _impl.farthest_pairs
lloyd2 = _impl.lloyd2
nnls_gram = _impl.nnls_gram

__all__ = ["BACKEND", "farthest_pairs", "lloyd2", "nnls_gram"]
