"""Monte Carlo BER sweeps for the neural receiver and the two classical bounds.

One block is one resource grid's worth of data bits.  Every Eb/N0 point has
its own random stream derived from the master seed and the point index, so
results do not depend on how many worker threads run or in which order the
points finish.  All methods evaluated in one call see the same simulated
blocks (common random numbers), which makes paired comparisons meaningful.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import phy
from .receiver import Receiver
from .training import SimBlocks, simulate_blocks

BASELINES = ("perfect_csi", "ls_maxlog")

LLRFunction = Callable[[SimBlocks, phy.ResourceGridSpec], np.ndarray]


@dataclass(frozen=True)
class StopRule:
    """Stop a point after ``max_blocks`` blocks or ``target_error_blocks`` erroneous ones."""

    max_blocks: int = 2000
    target_error_blocks: int = 200
    blocks_per_batch: int = 16

    def __post_init__(self):
        if self.max_blocks < 1 or self.target_error_blocks < 1 or self.blocks_per_batch < 1:
            raise ValueError("stop-rule counts must be positive")


@dataclass
class SweepRecord:
    method: str
    ebno_db: float
    bits_tested: int
    bit_errors: int
    blocks_tested: int
    error_blocks: int
    seed: int
    wall_time_s: float = 0.0

    def __post_init__(self):
        if not 0 <= self.bit_errors <= self.bits_tested:
            raise ValueError("bit_errors must lie in [0, bits_tested]")
        if not 0 <= self.error_blocks <= self.blocks_tested:
            raise ValueError("error_blocks must lie in [0, blocks_tested]")

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_tested if self.bits_tested else 0.0

    def stderr(self) -> float:
        """Binomial standard error of the BER estimate."""
        p = self.ber
        return float(np.sqrt(p * (1 - p) / self.bits_tested)) if self.bits_tested else 0.0


# ---------------------------------------------------------------- LLR methods


def _data_positions(arr: np.ndarray, spec: phy.ResourceGridSpec) -> np.ndarray:
    return arr[..., spec.data_symbols]


def perfect_csi_llrs(blocks: SimBlocks, spec: phy.ResourceGridSpec) -> np.ndarray:
    """MRC with the true channel followed by max-log demapping."""
    x_hat, eff = phy.mrc_equalize(blocks.y, blocks.h, blocks.noise_var)
    return phy.maxlog_demap(_data_positions(x_hat, spec), spec.constellation, _data_positions(eff, spec))


def ls_maxlog_llrs(blocks: SimBlocks, spec: phy.ResourceGridSpec) -> np.ndarray:
    """MRC with the interpolated LS estimate treated as the true channel."""
    h_ls = phy.ls_estimate(blocks.y, spec)
    x_hat, eff = phy.mrc_equalize(blocks.y, h_ls, blocks.noise_var)
    return phy.maxlog_demap(_data_positions(x_hat, spec), spec.constellation, _data_positions(eff, spec))


def neural_llrs(receiver: Receiver) -> LLRFunction:
    def fn(blocks: SimBlocks, spec: phy.ResourceGridSpec) -> np.ndarray:
        return np.asarray(receiver.llrs(blocks.y).data, dtype=float)
    return fn


def baseline_methods() -> dict[str, LLRFunction]:
    return {"perfect_csi": perfect_csi_llrs, "ls_maxlog": ls_maxlog_llrs}


# ------------------------------------------------------------------- engine


def point_seed(master_seed: int, index: int) -> int:
    """64-bit seed for Eb/N0 point ``index`` mixed from the master seed."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def worker_count(requested: int | None = None) -> int:
    """Thread count: ``requested``, else ``PHASERX_THREADS``, else the CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("PHASERX_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"PHASERX_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _run_point(methods: dict[str, LLRFunction], ebno_db: float, spec: phy.ResourceGridSpec,
               channel: phy.ChannelModel, stop: StopRule, seed: int,
               random_global_phase: bool) -> list[SweepRecord]:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    counts = {m: [0, 0, 0, 0] for m in methods}  # bits, errors, blocks, error blocks
    active = set(methods)
    done_blocks = 0
    while active and done_blocks < stop.max_blocks:
        n = min(stop.blocks_per_batch, stop.max_blocks - done_blocks)
        blocks = simulate_blocks(rng, channel, spec, np.full(n, ebno_db), random_global_phase)
        done_blocks += n
        for name in sorted(active):
            err = phy.bit_errors(methods[name](blocks, spec), blocks.bits)
            c = counts[name]
            c[0] += err.size
            c[1] += int(err.sum())
            c[2] += n
            c[3] += int(err.reshape(n, -1).any(axis=1).sum())
            if c[3] >= stop.target_error_blocks:
                active.discard(name)
    elapsed = time.perf_counter() - start
    return [SweepRecord(m, float(ebno_db), c[0], c[1], c[2], c[3], seed, elapsed)
            for m, c in counts.items()]


def evaluate(methods: dict[str, LLRFunction], ebno_list, spec: phy.ResourceGridSpec,
             channel: phy.ChannelModel, stop: StopRule = StopRule(), seed: int = 0,
             random_global_phase: bool = False, workers: int | None = None) -> list[SweepRecord]:
    """Evaluate several methods on shared blocks; records sorted by (method, Eb/N0)."""
    ebno_list = [float(v) for v in ebno_list]
    if not ebno_list:
        raise ValueError("empty Eb/N0 list")
    if not methods:
        raise ValueError("no methods to evaluate")
    jobs = [(v, point_seed(seed, i)) for i, v in enumerate(ebno_list)]
    nthreads = min(worker_count(workers), len(jobs))

    def job(arg):
        v, s = arg
        return _run_point(methods, v, spec, channel, stop, s, random_global_phase)

    if nthreads == 1:
        results = [job(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            results = list(pool.map(job, jobs))
    order = {m: i for i, m in enumerate(methods)}
    records = [r for point in results for r in point]
    records.sort(key=lambda r: (order[r.method], r.ebno_db))
    return records


def run_sweep(method: str, ebno_list, spec: phy.ResourceGridSpec, channel: phy.ChannelModel,
              stop: StopRule = StopRule(), seed: int = 0, receiver: Receiver | None = None,
              random_global_phase: bool = False, workers: int | None = None) -> list[SweepRecord]:
    """BER curve for one method: ``perfect_csi``, ``ls_maxlog`` or ``neural:<id>``."""
    if method.startswith("neural"):
        if receiver is None:
            raise FileNotFoundError(f"method {method!r} needs a trained receiver checkpoint")
        fn = neural_llrs(receiver)
    elif method in BASELINES:
        fn = baseline_methods()[method]
    else:
        raise ValueError(f"unknown method {method!r}")
    return evaluate({method: fn}, ebno_list, spec, channel, stop, seed, random_global_phase, workers)


def run_baselines(spec: phy.ResourceGridSpec, channel: phy.ChannelModel, ebno_list, seed: int = 0,
                  stop: StopRule = StopRule(), random_global_phase: bool = False,
                  workers: int | None = None) -> list[SweepRecord]:
    """Perfect-CSI and LS records on identical channel and noise realizations."""
    return evaluate(baseline_methods(), ebno_list, spec, channel, stop, seed, random_global_phase, workers)


def mean_ber(records) -> dict[str, float]:
    """Arithmetic mean of per-point BERs for each method."""
    per: dict[str, list[float]] = {}
    for r in records:
        per.setdefault(r.method, []).append(r.ber)
    return {m: float(np.mean(v)) for m, v in per.items()}
