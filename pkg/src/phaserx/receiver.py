"""Phase-equivariant ConvNeXt receiver (PConvNeXt).

The input grid is lifted to ``n`` phase-rotated copies, each copy is mapped
pointwise to a latent, processed by residual blocks whose only cross-copy
mixing is a circular convolution over the group axis, averaged over the
group and projected to bit LLRs.  With ``group_order == 1`` the model is a
plain ConvNeXt-style receiver and the group convolutions disappear.

Input feature channels, per group element ``k`` (A = rx antennas)::

    [Re(z_k y_0), Im(z_k y_0), ..., Re(z_k y_{A-1}), Im(z_k y_{A-1}),
     Re(z_k h_0), Im(z_k h_0), ..., Re(z_k h_{A-1}), Im(z_k h_{A-1}),
     Re(pilots), Im(pilots)]

where ``h`` is the LS estimate and ``pilots`` the known pilot grid (zero at
data positions, never rotated).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .groups import CyclicGroup, roots_of_unity
from .phy import ResourceGridSpec, ls_estimate


@dataclass(frozen=True)
class StageConfig:
    num_blocks: int
    channels: int
    dilation: tuple[int, int] = (1, 1)


DEFAULT_STAGES = (
    StageConfig(5, 32, (1, 1)),
    StageConfig(4, 48, (2, 2)),
    StageConfig(3, 32, (1, 1)),
)


@dataclass(frozen=True)
class ReceiverConfig:
    group_order: int = 1
    group_kernel: int | None = None  # defaults to group_order
    stages: tuple[StageConfig, ...] = DEFAULT_STAGES
    ft_kernel: tuple[int, int] = (5, 9)
    bottleneck_ratio: int = 4
    input_channels: int = 10
    bits_per_symbol: int = 2
    ln_eps: float = 1e-6

    def __post_init__(self):
        if self.group_order < 1:
            raise ValueError("group_order must be >= 1")
        kg = self.kernel_size
        if not 1 <= kg <= self.group_order:
            raise ValueError(f"group_kernel {kg} must lie in [1, {self.group_order}]")
        if not self.stages:
            raise ValueError("at least one stage is required")
        if any(k % 2 == 0 for k in self.ft_kernel):
            raise ValueError("ft_kernel sizes must be odd")

    @property
    def kernel_size(self) -> int:
        return self.group_order if self.group_kernel is None else self.group_kernel

    @property
    def has_group_conv(self) -> bool:
        return self.group_order > 1

    def scaled(self, width: float) -> "ReceiverConfig":
        """Same architecture with every stage width multiplied by ``width``."""
        stages = tuple(replace(s, channels=max(1, int(round(s.channels * width)))) for s in self.stages)
        return replace(self, stages=stages)


def input_channels_for(rx_antennas: int) -> int:
    return 4 * rx_antennas + 2


def tiny_config(group_order: int = 1, group_kernel: int | None = None, **kw) -> ReceiverConfig:
    """Width-quartered default architecture (about 15K parameters)."""
    return ReceiverConfig(group_order=group_order, group_kernel=group_kernel, **kw).scaled(0.25)


# --------------------------------------------------------------- parameter table


def param_table(config: ReceiverConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """Every parameter as ``(name, shape, init)`` in canonical order."""
    table: list[tuple[str, tuple[int, ...], str]] = []
    r = config.bottleneck_ratio
    kf, kt = config.ft_kernel

    def linear(prefix, c_in, c_out, init="uniform_fanin"):
        table.append((f"{prefix}.weight", (c_in, c_out), init))
        table.append((f"{prefix}.bias", (c_out,), "zeros"))

    def norm(prefix, c):
        table.append((f"{prefix}.weight", (c,), "ones"))
        table.append((f"{prefix}.bias", (c,), "zeros"))

    c_prev = config.stages[0].channels
    linear("input.linear", config.input_channels, c_prev)
    norm("input.norm", c_prev)
    for s, stage in enumerate(config.stages, start=1):
        c = stage.channels
        if s > 1:
            linear(f"resample{s - 1}.linear", c_prev, c)
            norm(f"resample{s - 1}.norm", c)
        for b in range(stage.num_blocks):
            p = f"stage{s}.block{b}"
            if config.has_group_conv:
                table.append((f"{p}.gconv.weight", (c, config.kernel_size), "group_identity"))
            table.append((f"{p}.dwconv.weight", (c, kf, kt), "uniform_fanin"))
            norm(f"{p}.norm", c)
            linear(f"{p}.pwconv1", c, r * c)
            linear(f"{p}.pwconv2", r * c, c)
        c_prev = c
    norm("output.norm", c_prev)
    linear("output.linear", c_prev, config.bits_per_symbol, init="zeros")
    return table


def param_count(config: ReceiverConfig) -> int:
    """Closed-form scalar parameter count.

    input  : C_in*C1 + C1 (linear) + 2*C1 (norm)
    block  : k_g*C (group conv, only if n > 1) + kf*kt*C (no bias) + 2C (norm)
             + 2*r*C^2 + r*C + C (inverted bottleneck)
    resample a->b : a*b + b + 2b
    output : 2*C_last + C_last*k + k
    """
    r = config.bottleneck_ratio
    kf, kt = config.ft_kernel
    c1 = config.stages[0].channels
    total = config.input_channels * c1 + 3 * c1
    c_prev = c1
    for s, stage in enumerate(config.stages):
        c = stage.channels
        if s > 0:
            total += c_prev * c + 3 * c
        block = kf * kt * c + 2 * c + 2 * r * c * c + r * c + c
        if config.has_group_conv:
            block += config.kernel_size * c
        total += stage.num_blocks * block
        c_prev = c
    k = config.bits_per_symbol
    return total + 2 * c_prev + c_prev * k + k


def group_kernel_param_count(config: ReceiverConfig) -> int:
    if not config.has_group_conv:
        return 0
    return config.kernel_size * sum(s.num_blocks * s.channels for s in config.stages)


def init_params(config: ReceiverConfig, rng: np.random.Generator,
                dtype=np.float32) -> "OrderedDict[str, Parameter]":
    """Fresh parameters.

    Group kernels start as the identity (offset-zero tap 1, others 0) so a
    fresh C_n model processes each group copy exactly like its C_1 twin; the
    output projection starts at zero, giving zero LLRs.
    """
    params: OrderedDict[str, Parameter] = OrderedDict()
    for name, shape, init in param_table(config):
        if init == "ones":
            t = Tensor(np.ones(shape, dtype=dtype))
        elif init == "group_identity":
            w = np.zeros(shape, dtype=dtype)
            w[:, 0] = 1.0
            t = Tensor(w)
        elif init == "uniform_fanin" and len(shape) == 3:
            t = ad.init_tensor(shape, init, rng, fan_in=shape[1] * shape[2], dtype=dtype)
        else:
            t = ad.init_tensor(shape, init, rng, dtype=dtype)
        params[name] = Parameter(name, t)
    return params


def randomize_params(params, rng: np.random.Generator, scale: float = 0.5) -> None:
    """Overwrite every parameter with random values (for property tests).

    Norm gains are drawn around 1, everything else around 0.
    """
    for name, p in params.items():
        d = p.tensor.data
        noise = rng.standard_normal(d.shape) * scale
        if name.endswith("norm.weight"):
            noise += 1.0
        elif name.endswith("gconv.weight"):
            noise /= np.sqrt(d.shape[1])
        d[...] = noise.astype(d.dtype)


# ----------------------------------------------------------------- feature layer


def build_input_features(y: np.ndarray, ls: np.ndarray, spec: ResourceGridSpec,
                         group: CyclicGroup, dtype=np.float32) -> Tensor:
    """Lifted real-valued input, shape ``batch + (n, F, T, 4A + 2)``.

    The LS estimate is rotated together with the received grid; the pilot
    pattern is shared by every group element.
    """
    y = np.asarray(y)
    ls = np.asarray(ls)
    a, f, t = spec.rx_antennas, spec.num_subcarriers, spec.num_symbols
    if y.shape[-3:] != (a, f, t) or ls.shape != y.shape:
        raise ValueError(f"expected (..., {a}, {f}, {t}) grids, got y{y.shape} ls{ls.shape}")
    batch = y.shape[:-3]
    n = group.n
    roots = group.roots.reshape((n,) + (1,) * 3)
    c_in = input_channels_for(a)
    out = np.empty(batch + (n, f, t, c_in), dtype=dtype)
    for part, src in ((0, y), (2 * a, ls)):
        rot = np.expand_dims(src, -4) * roots  # batch + (n, A, F, T)
        rot = np.moveaxis(rot, -3, -1)  # batch + (n, F, T, A)
        out[..., part:part + 2 * a:2] = rot.real
        out[..., part + 1:part + 2 * a:2] = rot.imag
    pg = spec.pilot_grid()
    out[..., 4 * a] = pg.real
    out[..., 4 * a + 1] = pg.imag
    return Tensor(out)


def received_features(y: np.ndarray, spec: ResourceGridSpec, group: CyclicGroup,
                      dtype=np.float32) -> Tensor:
    """Convenience: LS-estimate ``y`` and build the lifted features."""
    return build_input_features(y, ls_estimate(y, spec), spec, group, dtype)


# ------------------------------------------------------------------------ model


def _linear(x, params, prefix):
    return ad.pointwise_linear(x, params[f"{prefix}.weight"].tensor, params[f"{prefix}.bias"].tensor)


def _norm(x, params, prefix, eps):
    return ad.layer_norm(x, params[f"{prefix}.weight"].tensor, params[f"{prefix}.bias"].tensor, eps)


def pconvnext_block(x: Tensor, params, prefix: str, dilation=(1, 1), eps: float = 1e-6) -> Tensor:
    """group conv -> (F, T) depthwise conv -> LayerNorm -> PW x4 -> GELU -> PW -> + x."""
    h = x
    gname = f"{prefix}.gconv.weight"
    if gname in params:
        h = ad.circular_group_conv(h, params[gname].tensor)
    h = ad.depthwise_conv_ft(h, params[f"{prefix}.dwconv.weight"].tensor, dilation)
    h = _norm(h, params, f"{prefix}.norm", eps)
    h = _linear(h, params, f"{prefix}.pwconv1")
    h = ad.gelu(h)
    h = _linear(h, params, f"{prefix}.pwconv2")
    return ad.residual_add(x, h)


def forward(features: Tensor, params, config: ReceiverConfig, data_symbols=None) -> Tensor:
    """Bit LLRs ``batch + (F, T_data, k)`` (positive favours bit 0).

    ``data_symbols`` lists the OFDM-symbol columns to keep; pilot columns are
    dropped from the output when it is given.
    """
    if features.shape[-1] != config.input_channels:
        raise ValueError(f"features have {features.shape[-1]} channels, config expects "
                         f"{config.input_channels}")
    if features.shape[-4] != config.group_order:
        raise ValueError(f"features have group axis {features.shape[-4]}, config expects "
                         f"{config.group_order}")
    expected = {name for name, _, _ in param_table(config)}
    if set(params) != expected:
        missing = sorted(expected - set(params))[:3]
        extra = sorted(set(params) - expected)[:3]
        raise ValueError(f"params do not match config (missing {missing}, unexpected {extra})")
    eps = config.ln_eps
    h = _linear(features, params, "input.linear")
    h = _norm(h, params, "input.norm", eps)
    for s, stage in enumerate(config.stages, start=1):
        if s > 1:
            h = _linear(h, params, f"resample{s - 1}.linear")
            h = _norm(h, params, f"resample{s - 1}.norm", eps)
        for b in range(stage.num_blocks):
            h = pconvnext_block(h, params, f"stage{s}.block{b}", stage.dilation, eps)
    h = _norm(h, params, "output.norm", eps)
    h = ad.mean_over_group(h)
    h = _linear(h, params, "output.linear")
    if data_symbols is not None:
        h = ad.take(h, data_symbols, axis=-2)
    return h


@dataclass
class Receiver:
    """A configured model bound to a resource-grid layout."""

    config: ReceiverConfig
    spec: ResourceGridSpec
    params: "OrderedDict[str, Parameter]" = field(default_factory=OrderedDict)

    def __post_init__(self):
        self.group = roots_of_unity(self.config.group_order)

    @property
    def dtype(self):
        first = next(iter(self.params.values()))
        return first.tensor.dtype

    def features(self, y: np.ndarray) -> Tensor:
        return received_features(y, self.spec, self.group, self.dtype)

    def llrs(self, y: np.ndarray, grad: bool = False) -> Tensor:
        feats = self.features(y)
        if grad:
            return forward(feats, self.params, self.config, self.spec.data_symbols)
        with ad.no_grad():
            return forward(feats, self.params, self.config, self.spec.data_symbols)
