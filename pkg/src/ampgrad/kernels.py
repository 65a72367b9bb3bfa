"""Kernel backend selection.

The compiled extension is used when it imports cleanly; setting
``AMPGRAD_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

if os.environ.get("AMPGRAD_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "python"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
bn_stats = _impl.bn_stats
bn_forward = _impl.bn_forward
bn_backward = _impl.bn_backward

__all__ = ["BACKEND", "im2col", "col2im", "maxpool_forward", "maxpool_backward", "bn_stats",
           "bn_forward", "bn_backward"]
