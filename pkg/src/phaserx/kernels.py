"""Kernel backend selection.

The compiled Cython module is used when it was built and imports cleanly;
otherwise the numpy fallback is used.  Setting ``PHASERX_PURE_PYTHON=1``
forces the fallback (handy for benchmarking and for cross-checking the two).
"""

import os

from . import _fallback

BACKEND = "numpy"
_impl = _fallback

if os.environ.get("PHASERX_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback

dwconv_forward = _impl.dwconv_forward
dwconv_backward = _impl.dwconv_backward
gconv_forward = _impl.gconv_forward
gconv_backward = _impl.gconv_backward
layernorm_forward = _impl.layernorm_forward
layernorm_backward = _impl.layernorm_backward
gelu_forward = _impl.gelu_forward
gelu_backward = _impl.gelu_backward

__all__ = [
    "BACKEND",
    "dwconv_forward",
    "dwconv_backward",
    "gconv_forward",
    "gconv_backward",
    "layernorm_forward",
    "layernorm_backward",
    "gelu_forward",
    "gelu_backward",
]
