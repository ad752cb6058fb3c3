"""Simulated training data, loss, AdamW and the training loop.

The model emits LLRs with "positive favours bit 0", so the logit fed to the
binary cross-entropy (probability of bit 1) is ``-LLR``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import phy
from .autodiff import Parameter, Tensor
from .groups import CyclicGroup, roots_of_unity
from .receiver import ReceiverConfig, build_input_features, forward, init_params

PRECISIONS = {"f32": np.float32, "f64": np.float64}


class DivergenceError(RuntimeError):
    """Training produced NaN losses or stayed far above the initial loss."""


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, names):
        self.names = list(names)
        shown = ", ".join(self.names[:5])
        more = f" (+{len(self.names) - 5} more)" if len(self.names) > 5 else ""
        super().__init__(f"non-finite gradient in {shown}{more}; step aborted")


@dataclass(frozen=True)
class GridConfig:
    """Resource-grid layout, kept as plain values so it can be written to a config file."""

    constellation: str = "qpsk"
    num_subcarriers: int = 64
    num_symbols: int = 14
    pilot_symbols: tuple[int, ...] = (2, 11)
    rx_antennas: int = 2

    def spec(self) -> phy.ResourceGridSpec:
        return phy.make_grid_spec(self.constellation, self.num_subcarriers, self.num_symbols,
                                  self.pilot_symbols, self.rx_antennas)

    @property
    def bits_per_symbol(self) -> int:
        return phy.CONSTELLATION_BITS[self.constellation]


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 5000
    batch_size: int = 16
    ebno_min_db: float = 0.0
    ebno_max_db: float = 12.0
    lr: float = 1e-3
    milestones: tuple[int, ...] | None = None  # None: 2/3 and 5/6 of steps
    lr_factor: float = 0.1
    weight_decay: float = 0.01
    seed: int = 0
    precision: str = "f32"
    random_global_phase: bool = True
    channel: phy.ChannelModel = field(default_factory=phy.ChannelModel)
    grid: GridConfig = field(default_factory=GridConfig)
    divergence_factor: float = 10.0
    divergence_patience: int = 100

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 < self.lr_factor < 1:
            raise ValueError("lr_factor must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.ebno_max_db < self.ebno_min_db:
            raise ValueError("ebno_max_db is below ebno_min_db")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")
        ms = self.resolved_milestones()
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly increasing, got {ms}")

    def resolved_milestones(self) -> tuple[int, ...]:
        if self.milestones is not None:
            return tuple(int(m) for m in self.milestones)
        # very short runs can round both defaults onto the same step
        return tuple(sorted({int(round(self.steps * 2 / 3)), int(round(self.steps * 5 / 6))}))

    @property
    def dtype(self):
        return PRECISIONS[self.precision]


def lr_at(step: int, config: TrainConfig) -> float:
    """Piecewise-constant schedule: ``lr * factor^(milestones passed)``."""
    if step < 0:
        raise ValueError("step must be non-negative")
    passed = sum(1 for m in config.resolved_milestones() if step >= m)
    return config.lr * config.lr_factor ** passed


# ------------------------------------------------------------------ simulation


@dataclass
class SimBlocks:
    """One batch of simulated grids (one block = one resource grid)."""

    bits: np.ndarray  # (B, F, T_data, k) uint8
    x: np.ndarray  # (B, F, T) transmitted grid
    h: np.ndarray  # (B, A, F, T) effective channel, global phase included
    y: np.ndarray  # (B, A, F, T)
    noise_var: np.ndarray  # (B,)
    ebno_db: np.ndarray  # (B,)


def simulate_blocks(rng: np.random.Generator, channel: phy.ChannelModel, spec: phy.ResourceGridSpec,
                    ebno_db, random_global_phase: bool = False) -> SimBlocks:
    """bits -> symbols -> grid -> channel -> noise -> optional global phase.

    ``ebno_db`` has one entry per block.  The global phase ``e^{i theta}``,
    ``theta ~ U(-pi, pi)``, multiplies the received grid; it is folded into
    the returned ``h`` so a perfect-CSI receiver sees the true channel.
    """
    ebno_db = np.atleast_1d(np.asarray(ebno_db, dtype=float))
    b = ebno_db.size
    const = spec.constellation
    k = const.bits_per_symbol
    bits = rng.integers(0, 2, size=(b, spec.num_subcarriers, spec.num_data_symbols, k), dtype=np.uint8)
    symbols = phy.map_bits(bits.reshape(b, -1), const)
    x = phy.assemble_grid(symbols, spec)
    nv = phy.ebno_to_noise_var(ebno_db, const)
    ch = phy.sample_channel(channel, spec, rng, batch_shape=(b,), noise_var=nv)
    y = phy.apply_channel(x, ch, rng)
    h = ch.h
    if random_global_phase:
        theta = rng.uniform(-np.pi, np.pi, size=b)
        rot = np.exp(1j * theta)[:, None, None, None]
        y = y * rot
        h = h * rot
    return SimBlocks(bits, x, h, y, nv, ebno_db)


@dataclass
class Batch:
    features: Tensor
    labels: np.ndarray  # (B, F, T_data, k)
    mask: np.ndarray  # (F, T) True at data positions
    blocks: SimBlocks


def sample_ebno(rng: np.random.Generator, config: TrainConfig, size: int) -> np.ndarray:
    return rng.uniform(config.ebno_min_db, config.ebno_max_db, size=size)


def generate_batch(rng: np.random.Generator, channel: phy.ChannelModel, spec: phy.ResourceGridSpec,
                   ebno_sampler: Callable[[np.random.Generator, int], np.ndarray] | np.ndarray,
                   random_global_phase: bool, batch_size: int = 16,
                   group: CyclicGroup | None = None, dtype=np.float32) -> Batch:
    """Features, label bits and data mask for one training batch.

    ``ebno_sampler`` is either a callable ``(rng, size) -> dB values`` or a
    fixed array of per-element Eb/N0 values.
    """
    if callable(ebno_sampler):
        ebno = ebno_sampler(rng, batch_size)
    else:
        ebno = np.broadcast_to(np.asarray(ebno_sampler, dtype=float), (batch_size,))
    blocks = simulate_blocks(rng, channel, spec, ebno, random_global_phase)
    group = group or roots_of_unity(1)
    ls = phy.ls_estimate(blocks.y, spec)
    feats = build_input_features(blocks.y, ls, spec, group, dtype)
    return Batch(feats, blocks.bits, spec.data_mask(), blocks)


def receiver_loss(features: Tensor, labels: np.ndarray, params, config: ReceiverConfig,
                  spec: phy.ResourceGridSpec) -> Tensor:
    """Mean BCE of the data-position LLRs against the transmitted bits."""
    llr = forward(features, params, config, spec.data_symbols)
    return ad.bce_with_logits(ad.scale(llr, -1.0), labels)


# ------------------------------------------------------------------- optimiser


def adamw_step(params, lr: float, step: int, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One AdamW update in place using each parameter's ``tensor.grad``.

    ``step`` is 1-based (the bias-correction exponent).  Parameters without a
    gradient are treated as having a zero gradient.  If any gradient is
    non-finite nothing is modified and :class:`NonFiniteGradientError` is
    raised.
    """
    if step < 1:
        raise ValueError("adamw step counter is 1-based")
    items = list(params.values()) if isinstance(params, dict) else list(params)
    bad = [p.name for p in items if p.tensor.grad is not None and not np.all(np.isfinite(p.tensor.grad))]
    if bad:
        raise NonFiniteGradientError(bad)
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for p in items:
        w = p.tensor.data
        g = p.tensor.grad
        if g is None:
            g = np.zeros_like(w)
        if weight_decay:
            w -= w.dtype.type(lr * weight_decay) * w
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * (g * g)
        m_hat = p.m / c1
        v_hat = p.v / c2
        w -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(w.dtype, copy=False)


# --------------------------------------------------------------------- trainer


@dataclass
class TrainResult:
    params: dict
    losses: list[float]
    steps: int


class Trainer:
    """Stateful training loop that can be checkpointed between steps.

    Initial parameters and the data stream come from two independent children
    of ``SeedSequence(config.seed)``, so models of different group order
    trained with the same seed see exactly the same batches.
    """

    def __init__(self, receiver_config: ReceiverConfig, config: TrainConfig, params=None):
        spec = config.grid.spec()
        if receiver_config.input_channels != 4 * spec.rx_antennas + 2:
            raise ValueError("receiver input_channels does not match the grid's rx antennas")
        if receiver_config.bits_per_symbol != spec.constellation.bits_per_symbol:
            raise ValueError("receiver bits_per_symbol does not match the constellation")
        self.receiver_config = receiver_config
        self.config = config
        self.spec = spec
        self.group = roots_of_unity(receiver_config.group_order)
        init_ss, data_ss = np.random.SeedSequence(config.seed).spawn(2)
        if params is None:
            params = init_params(receiver_config, np.random.default_rng(init_ss), config.dtype)
        self.params = params
        self.rng = np.random.default_rng(data_ss)
        self.step = 0
        self.losses: list[float] = []
        self.initial_loss: float | None = None
        self.bad_steps = 0

    def next_batch(self) -> Batch:
        cfg = self.config
        return generate_batch(self.rng, cfg.channel, self.spec, lambda r, s: sample_ebno(r, cfg, s),
                              cfg.random_global_phase, cfg.batch_size, self.group, cfg.dtype)

    def train_step(self) -> float:
        batch = self.next_batch()
        for p in self.params.values():
            p.tensor.zero_grad()
        loss = receiver_loss(batch.features, batch.labels, self.params, self.receiver_config, self.spec)
        value = float(loss.data)
        if not math.isfinite(value):
            raise DivergenceError(f"loss is {value} at step {self.step}")
        ad.backward(loss)
        try:
            adamw_step(self.params, lr_at(self.step, self.config), self.step + 1,
                       weight_decay=self.config.weight_decay)
        except NonFiniteGradientError as exc:
            raise DivergenceError(f"step {self.step}: {exc}") from exc
        self._watch(value)
        self.step += 1
        self.losses.append(value)
        return value

    def _watch(self, value: float) -> None:
        if self.initial_loss is None:
            self.initial_loss = value
            return
        if value > self.config.divergence_factor * self.initial_loss:
            self.bad_steps += 1
            if self.bad_steps >= self.config.divergence_patience:
                raise DivergenceError(
                    f"loss above {self.config.divergence_factor:g}x the initial loss "
                    f"({self.initial_loss:.4g}) for {self.bad_steps} consecutive steps")
        else:
            self.bad_steps = 0

    def run(self, steps: int | None = None, callback=None) -> TrainResult:
        """Train until ``steps`` more steps are done (default: up to ``config.steps``)."""
        target = self.config.steps if steps is None else self.step + steps
        while self.step < target:
            value = self.train_step()
            if callback is not None:
                callback(self.step, value)
        return TrainResult(self.params, list(self.losses), self.step)


def train(receiver_config: ReceiverConfig, config: TrainConfig, callback=None) -> TrainResult:
    """Train a fresh receiver for ``config.steps`` steps."""
    return Trainer(receiver_config, config).run(callback=callback)
