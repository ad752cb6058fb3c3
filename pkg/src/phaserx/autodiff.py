"""Minimal reverse-mode automatic differentiation.

The op vocabulary is closed: exactly what the receiver and its training loss
need, plus a few helpers (``reshape``, ``concat``, ``take``, ``sum``, ``mul``,
``scale``) used for plumbing and tests.  There is no general broadcasting.

Layout convention for grid-shaped tensors is channels-last,
``(batch?, group, F, T, C)``: pointwise layers contract the last axis,
the spatial depthwise convolution runs over axes ``(-3, -2)`` and group
operations act on axis ``-4``.
"""

from __future__ import annotations

import contextlib
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def _finite_checks() -> bool:
    return getattr(_state, "check_finite", False)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording in the current thread (inference mode)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def check_finite(enabled: bool = True):
    """Raise ``FloatingPointError`` whenever an op produces NaN or Inf."""
    prev = _finite_checks()
    _state.check_finite = enabled
    try:
        yield
    finally:
        _state.check_finite = prev


class Tensor:
    """Dense real array that can take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad", "_node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        # ascontiguousarray would promote 0-d losses to shape (1,)
        self.data = arr if arr.flags.c_contiguous else arr.copy(order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


@dataclass(eq=False)
class Node:
    """One recorded operation: inputs, output and the vector-Jacobian product."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Recorded operations in topological order (inputs before outputs)."""

    nodes: list[Node] = field(default_factory=list)

    @classmethod
    def from_loss(cls, loss: Tensor) -> "Tape":
        order: list[Node] = []
        seen: set[int] = set()
        if loss._node is None:
            return cls(order)
        stack: list[tuple[Node, bool]] = [(loss._node, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for inp in node.inputs:
                if inp._node is not None and id(inp._node) not in seen:
                    stack.append((inp._node, False))
        return cls(order)


@dataclass(eq=False)
class Parameter:
    """A named trainable tensor with its AdamW moment buffers."""

    name: str
    tensor: Tensor
    m: np.ndarray = None  # type: ignore[assignment]
    v: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        self.tensor.requires_grad = True
        if self.m is None:
            self.m = np.zeros_like(self.tensor.data)
        if self.v is None:
            self.v = np.zeros_like(self.tensor.data)

    @property
    def shape(self):
        return self.tensor.shape


def _record(op: str, out_data: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    if _finite_checks() and not np.all(np.isfinite(out_data)):
        raise FloatingPointError(f"{op} produced non-finite values")
    out = Tensor(out_data)
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = Node(op, tuple(inputs), out, vjp)
    return out


def backward(loss: Tensor) -> Tape:
    """Populate ``.grad`` on every leaf tensor with ``requires_grad`` that feeds ``loss``.

    Gradients add into any existing ``.grad`` buffer; call ``zero_grad`` between
    steps.  Returns the replayed tape.
    """
    if loss.data.size != 1 or loss.ndim > 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = Tape.from_loss(loss)
    if loss._node is None:
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1
        return tape
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = pending.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp._node is None:
                inp.grad = gi.astype(inp.dtype, copy=True) if inp.grad is None else inp.grad + gi
            else:
                key = id(inp)
                pending[key] = gi if key not in pending else pending[key] + gi
    return tape


# ---------------------------------------------------------------- initialisers


def init_tensor(shape, scheme: str, rng: np.random.Generator, fan_in: int | None = None,
                dtype=np.float64) -> Tensor:
    """Create a tensor filled by ``zeros``, ``uniform_fanin`` or ``normal_scaled``.

    ``fan_in`` defaults to ``shape[0]`` for 2-D ``(in, out)`` weights and to the
    product of the trailing axes for depthwise kernels ``(C, kf, kt)``.
    """
    shape = tuple(int(s) for s in shape)
    if not shape:
        raise ValueError("shape must be non-empty")
    if any(s <= 0 for s in shape):
        raise ValueError(f"zero-length axis in shape {shape}")
    if scheme == "zeros":
        return Tensor(np.zeros(shape, dtype=dtype))
    if fan_in is None:
        if len(shape) == 2:
            fan_in = shape[0]
        elif len(shape) > 2:
            fan_in = int(np.prod(shape[1:]))
        else:
            raise ValueError(f"cannot derive fan-in for shape {shape}; pass fan_in")
    if scheme == "uniform_fanin":
        bound = 1.0 / math.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))
    if scheme == "normal_scaled":
        return Tensor(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape).astype(dtype))
    raise ValueError(f"unknown init scheme {scheme!r}")


# ------------------------------------------------------------------------ ops


def _check_dtype(*tensors: Tensor) -> None:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise TypeError(f"mixed precision is not supported: {sorted(map(str, dtypes))}")


def pointwise_linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias`` over the last axis, shared across all other axes."""
    c_in, c_out = weight.shape
    if x.shape[-1] != c_in or bias.shape != (c_out,):
        raise ValueError(f"pointwise_linear shape mismatch: x{x.shape} W{weight.shape} b{bias.shape}")
    _check_dtype(x, weight, bias)
    x2 = x.data.reshape(-1, c_in)
    out = (x2 @ weight.data + bias.data).reshape(x.shape[:-1] + (c_out,))

    def vjp(g):
        g2 = g.reshape(-1, c_out)
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _record("pointwise_linear", out, (x, weight, bias), vjp)


def depthwise_conv_ft(x: Tensor, kernel: Tensor, dilation=(1, 1)) -> Tensor:
    """Per-channel "same" correlation over (F, T) with zero padding.

    ``x`` is ``(..., F, T, C)`` and ``kernel`` is ``(C, k_f, k_t)`` with odd
    sizes; any leading axes (batch, group) share the kernel.
    """
    c, kf, kt = kernel.shape
    if kf % 2 == 0 or kt % 2 == 0:
        raise ValueError(f"kernel sizes must be odd, got ({kf}, {kt})")
    if x.ndim < 3 or x.shape[-1] != c:
        raise ValueError(f"depthwise_conv_ft shape mismatch: x{x.shape} kernel{kernel.shape}")
    _check_dtype(x, kernel)
    df, dt = (int(d) for d in dilation)
    f, t = x.shape[-3], x.shape[-2]
    x4 = x.data.reshape(-1, f, t, c)
    w = np.ascontiguousarray(kernel.data.transpose(1, 2, 0))
    out = kernels.dwconv_forward(x4, w, df, dt).reshape(x.shape)

    def vjp(g):
        gx, gw = kernels.dwconv_backward(np.ascontiguousarray(g.reshape(x4.shape)), x4, w, df, dt)
        return (gx.reshape(x.shape) if x.requires_grad else None,
                gw.transpose(2, 0, 1) if kernel.requires_grad else None)

    return _record("depthwise_conv_ft", out, (x, kernel), vjp)


def circular_group_conv(x: Tensor, kernel: Tensor) -> Tensor:
    """Depthwise circular convolution along the group axis (-4).

    ``out[g] = sum_j kernel[:, j] * x[(g - j) mod G]`` with ``kernel`` of shape
    ``(C, k_g)`` and ``1 <= k_g <= G``.
    """
    if x.ndim < 4:
        raise ValueError(f"expected (..., G, F, T, C), got {x.shape}")
    g_order, c = x.shape[-4], x.shape[-1]
    if kernel.ndim != 2 or kernel.shape[0] != c:
        raise ValueError(f"group kernel must be (C={c}, k_g), got {kernel.shape}")
    kg = kernel.shape[1]
    if not 1 <= kg <= g_order:
        raise ValueError(f"group kernel size {kg} must lie in [1, {g_order}]")
    _check_dtype(x, kernel)
    x4 = x.data.reshape(-1, g_order, x.shape[-3] * x.shape[-2], c)
    out = kernels.gconv_forward(x4, kernel.data).reshape(x.shape)

    def vjp(g):
        gx, gw = kernels.gconv_backward(np.ascontiguousarray(g.reshape(x4.shape)), x4, kernel.data)
        return (gx.reshape(x.shape) if x.requires_grad else None,
                gw if kernel.requires_grad else None)

    return _record("circular_group_conv", out, (x, kernel), vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise over the channel (last) axis with population variance."""
    c = x.shape[-1]
    if c == 0:
        raise ValueError("layer_norm over an empty channel axis")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"layer_norm affine shape mismatch for C={c}")
    _check_dtype(x, gamma, beta)
    x2 = x.data.reshape(-1, c)
    out, xhat, rstd = kernels.layernorm_forward(x2, gamma.data, beta.data, float(eps))

    def vjp(g):
        gx, gg, gb = kernels.layernorm_backward(np.ascontiguousarray(g.reshape(-1, c)), xhat, rstd,
                                                gamma.data)
        return (gx.reshape(x.shape) if x.requires_grad else None,
                gg if gamma.requires_grad else None,
                gb if beta.requires_grad else None)

    return _record("layer_norm", out.reshape(x.shape), (x, gamma, beta), vjp)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)``."""
    flat = x.data.reshape(-1)
    out = kernels.gelu_forward(flat).reshape(x.shape)

    def vjp(g):
        return (kernels.gelu_backward(np.ascontiguousarray(g.reshape(-1)), flat).reshape(x.shape),)

    return _record("gelu", out, (x,), vjp)


def mean_over_group(x: Tensor) -> Tensor:
    """Average over the group axis (-4), removing it."""
    if x.ndim < 4:
        raise ValueError(f"expected (..., G, F, T, C), got {x.shape}")
    g_order = x.shape[-4]
    out = x.data.mean(axis=-4)

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, -4) / g_order, x.shape).copy(),)

    return _record("mean_over_group", out, (x,), vjp)


def residual_add(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise ValueError(f"residual_add shape mismatch: {x.shape} vs {y.shape}")
    _check_dtype(x, y)
    return _record("residual_add", x.data + y.data, (x, y), lambda g: (g, g))


def bce_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy, ``max(z,0) - z*y + log1p(exp(-|z|))``."""
    y = labels.data if isinstance(labels, Tensor) else np.asarray(labels)
    if y.shape != logits.shape:
        raise ValueError(f"labels shape {y.shape} != logits shape {logits.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary (0 or 1)")
    z = logits.data
    y = y.astype(z.dtype)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = np.asarray(loss.mean(dtype=np.float64), dtype=z.dtype)
    if not np.isfinite(out):
        raise FloatingPointError("bce_with_logits produced a non-finite loss")

    def vjp(g):
        sig = 0.5 * (1.0 + np.tanh(0.5 * z))
        return ((sig - y) * (g / z.size),)

    return _record("bce_with_logits", out, (logits,), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return _record("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    _check_dtype(*tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, sizes, axis=axis))

    return _record("concat", out, tuple(tensors), vjp)


def take(x: Tensor, indices, axis: int) -> Tensor:
    """Select ``indices`` along ``axis`` (used to drop pilot columns)."""
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(x.data, idx, axis=axis)

    def vjp(g):
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (gx,)

    return _record("take", out, (x,), vjp)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=x.dtype)
    return _record("sum", out, (x,), lambda g: (np.full(x.shape, g, dtype=x.dtype),))


def mul(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if x.shape != y.shape:
        raise ValueError(f"mul shape mismatch: {x.shape} vs {y.shape}")
    _check_dtype(x, y)
    return _record("mul", x.data * y.data, (x, y), lambda g: (g * y.data, g * x.data))


def scale(x: Tensor, factor: float) -> Tensor:
    f = float(factor)
    return _record("scale", x.data * f, (x,), lambda g: (g * f,))


# -------------------------------------------------------------- verification


@dataclass
class FiniteDiffReport:
    max_rel_error: dict[str, float]
    tol: float

    @property
    def passed(self) -> bool:
        return all(e < self.tol for e in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def finite_diff_check(fn: Callable[[], Tensor], params, h: float = 1e-6,
                      tol: float = 1e-5) -> FiniteDiffReport:
    """Compare autodiff gradients of ``fn()`` against central differences.

    ``params`` is a sequence of float64 tensors or a mapping ``name -> tensor``.
    The error for each parameter is ``max|g_ad - g_fd| / max(max|g_ad|, max|g_fd|, 1e-12)``.
    """
    named = dict(params) if isinstance(params, dict) else {f"p{i}": p for i, p in enumerate(params)}
    for name, p in named.items():
        if p.dtype != np.float64:
            raise TypeError(f"finite_diff_check needs float64 tensors, {name} is {p.dtype}")
        p.requires_grad = True
        p.grad = None

    def value() -> float:
        with no_grad(), check_finite():
            v = float(fn().data)
        if not math.isfinite(v):
            raise FloatingPointError("non-finite loss during finite differences")
        return v

    with check_finite():
        backward(fn())
    errors: dict[str, float] = {}
    for name, p in named.items():
        g_ad = p.grad if p.grad is not None else np.zeros_like(p.data)
        g_fd = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = value()
            flat[i] = orig - h
            down = value()
            flat[i] = orig
            g_fd.reshape(-1)[i] = (up - down) / (2 * h)
        denom = max(np.abs(g_ad).max(), np.abs(g_fd).max(), 1e-12)
        errors[name] = float(np.abs(g_ad - g_fd).max() / denom)
    return FiniteDiffReport(errors, tol)
