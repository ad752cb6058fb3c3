"""Phase-equivariant neural OFDM receivers on cyclic groups, with a from-scratch autodiff core."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402,F401
