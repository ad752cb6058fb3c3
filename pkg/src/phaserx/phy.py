"""Classical physical-layer blocks working directly on the OFDM resource grid.

Arrays are complex and indexed ``(..., rx_antenna, subcarrier, ofdm_symbol)``;
any leading axes are batch axes.  LLRs follow one convention everywhere:
positive means bit 0 is more likely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONSTELLATION_BITS = {"qpsk": 2, "qam16": 4, "qam64": 6, "qam256": 8}

# fixed seed for the pilot sequence ("PILT")
PILOT_SEED = 0x50494C54


def _gray_pam_levels(m: int) -> np.ndarray:
    """Amplitude for every m-bit pattern (MSB first), Gray ordered, 0 -> positive.

    Recursion ``(1-2c0) * (2^(m-1) - (1-2c1) * (2^(m-2) - ...))`` as in the
    3GPP square-QAM tables.
    """
    levels = np.zeros(1 << m)
    for pattern in range(1 << m):
        bits = [(pattern >> (m - 1 - i)) & 1 for i in range(m)]
        amp = 1.0
        for i in range(m - 1, 0, -1):
            amp = (1 << (m - i)) - (1 - 2 * bits[i]) * amp
        levels[pattern] = (1 - 2 * bits[0]) * amp
    return levels


@dataclass(frozen=True)
class Constellation:
    """Square Gray-coded QAM with unit average energy.

    ``points[label]`` is the symbol for the integer ``label`` whose bits, MSB
    first, are ``labels[label]``.  Even-indexed bits select the in-phase level
    and odd-indexed bits the quadrature level.
    """

    name: str
    bits_per_symbol: int
    points: np.ndarray
    labels: np.ndarray
    scale: float
    pam_levels: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.points.shape[0]


def make_constellation(name: str) -> Constellation:
    key = name.lower()
    if key not in CONSTELLATION_BITS:
        raise ValueError(f"unsupported constellation {name!r}; choose from {sorted(CONSTELLATION_BITS)}")
    k = CONSTELLATION_BITS[key]
    m = k // 2
    pam = _gray_pam_levels(m)
    size = 1 << k
    labels = ((np.arange(size)[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)
    i_pattern = np.zeros(size, dtype=int)
    q_pattern = np.zeros(size, dtype=int)
    for b in range(m):
        i_pattern = (i_pattern << 1) | labels[:, 2 * b]
        q_pattern = (q_pattern << 1) | labels[:, 2 * b + 1]
    raw = pam[i_pattern] + 1j * pam[q_pattern]
    scale = 1.0 / np.sqrt(np.mean(np.abs(raw) ** 2))
    points = raw * scale
    points.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(key, k, points, labels, float(scale), pam * scale)


def bits_to_labels(bits: np.ndarray, k: int) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] % k:
        raise ValueError(f"bit count {bits.shape[-1]} is not divisible by {k}")
    grouped = bits.reshape(bits.shape[:-1] + (-1, k)).astype(np.int64)
    return grouped @ (1 << np.arange(k - 1, -1, -1))


def map_bits(bits: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Map consecutive ``k``-bit groups (last axis) to complex symbols."""
    return constellation.points[bits_to_labels(bits, constellation.bits_per_symbol)]


def hard_demap(symbols: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Nearest-point bit decisions, last axis ``k`` bits per symbol flattened."""
    s = np.asarray(symbols)
    idx = np.argmin(np.abs(s[..., None] - constellation.points) ** 2, axis=-1)
    bits = constellation.labels[idx]
    return bits.reshape(s.shape[:-1] + (-1,))


# ----------------------------------------------------------------- resource grid


@dataclass(frozen=True)
class ResourceGridSpec:
    """Layout of one transmitted slot: pilots occupy whole OFDM-symbol columns."""

    num_subcarriers: int
    num_symbols: int
    pilot_symbols: tuple[int, ...]
    pilot_values: np.ndarray  # (F, len(pilot_symbols))
    constellation: Constellation
    rx_antennas: int

    def __post_init__(self):
        if any(not 0 <= t < self.num_symbols for t in self.pilot_symbols):
            raise ValueError(f"pilot indices {self.pilot_symbols} outside [0, {self.num_symbols})")
        if len(set(self.pilot_symbols)) != len(self.pilot_symbols):
            raise ValueError("duplicate pilot indices")
        if self.pilot_values.shape != (self.num_subcarriers, len(self.pilot_symbols)):
            raise ValueError("pilot_values must have shape (F, number of pilot symbols)")

    @property
    def data_symbols(self) -> np.ndarray:
        return np.array([t for t in range(self.num_symbols) if t not in self.pilot_symbols], dtype=int)

    @property
    def num_data_symbols(self) -> int:
        return self.num_symbols - len(self.pilot_symbols)

    @property
    def symbols_per_grid(self) -> int:
        return self.num_subcarriers * self.num_data_symbols

    @property
    def bits_per_grid(self) -> int:
        return self.symbols_per_grid * self.constellation.bits_per_symbol

    def pilot_grid(self) -> np.ndarray:
        """(F, T) complex grid with pilot values at pilot positions, 0 elsewhere."""
        grid = np.zeros((self.num_subcarriers, self.num_symbols), dtype=complex)
        grid[:, list(self.pilot_symbols)] = self.pilot_values
        return grid

    def data_mask(self) -> np.ndarray:
        mask = np.ones((self.num_subcarriers, self.num_symbols), dtype=bool)
        mask[:, list(self.pilot_symbols)] = False
        return mask


def pilot_sequence(num_subcarriers: int, num_pilots: int, seed: int = PILOT_SEED) -> np.ndarray:
    """Unit-magnitude QPSK pilots drawn from a fixed seeded stream."""
    rng = np.random.default_rng(seed)
    phase = rng.integers(0, 4, size=(num_subcarriers, num_pilots))
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * phase))


def make_grid_spec(constellation: str | Constellation = "qpsk", num_subcarriers: int = 64,
                   num_symbols: int = 14, pilot_symbols=(2, 11), rx_antennas: int = 2) -> ResourceGridSpec:
    const = constellation if isinstance(constellation, Constellation) else make_constellation(constellation)
    pilots = tuple(int(t) for t in pilot_symbols)
    return ResourceGridSpec(num_subcarriers, num_symbols, pilots,
                            pilot_sequence(num_subcarriers, len(pilots)), const, rx_antennas)


def assemble_grid(symbols: np.ndarray, spec: ResourceGridSpec) -> np.ndarray:
    """Place data symbols (f-major, t-minor) and pilots into ``(..., F, T)`` grids."""
    symbols = np.asarray(symbols)
    if symbols.shape[-1] != spec.symbols_per_grid:
        raise ValueError(f"expected {spec.symbols_per_grid} data symbols, got {symbols.shape[-1]}")
    lead = symbols.shape[:-1]
    grid = np.zeros(lead + (spec.num_subcarriers, spec.num_symbols), dtype=complex)
    grid[..., spec.data_symbols] = symbols.reshape(lead + (spec.num_subcarriers, spec.num_data_symbols))
    grid[..., list(spec.pilot_symbols)] = spec.pilot_values
    return grid


def extract_data(grid: np.ndarray, spec: ResourceGridSpec) -> np.ndarray:
    """Inverse of :func:`assemble_grid` on the data positions."""
    data = np.asarray(grid)[..., spec.data_symbols]
    return data.reshape(data.shape[:-2] + (-1,))


# ---------------------------------------------------------------------- channels


@dataclass(frozen=True)
class ChannelModel:
    """Block-fading channel description.

    ``kind`` is one of ``awgn``, ``rayleigh``, ``rician`` or ``tdl``.  Rician
    uses ``los_magnitude`` m and ``scatter_var`` sigma^2 with a line-of-sight
    phase drawn from U(-pi, pi) per block.  TDL uses integer-sample
    ``tap_delays`` with ``tap_powers`` summing to one.
    """

    kind: str = "rayleigh"
    los_magnitude: float = 1.0
    scatter_var: float = 0.5
    tap_delays: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    tap_powers: tuple[float, ...] = (0.5, 0.25, 0.15, 0.1)
    block_fading: bool = True

    def __post_init__(self):
        if self.kind not in ("awgn", "rayleigh", "rician", "tdl"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.los_magnitude < 0 or self.scatter_var < 0:
            raise ValueError("Rician parameters must be non-negative")
        if self.kind == "tdl":
            if len(self.tap_delays) != len(self.tap_powers):
                raise ValueError("tap_delays and tap_powers differ in length")
            if abs(sum(self.tap_powers) - 1.0) > 1e-9:
                raise ValueError("TDL tap powers must sum to 1")


@dataclass
class ChannelRealization:
    h: np.ndarray  # (..., A, F, T) complex
    noise_var: np.ndarray | float = 0.0


def complex_normal(rng: np.random.Generator, shape, var=1.0) -> np.ndarray:
    """Circularly symmetric CN(0, var): real and imaginary parts each N(0, var/2)."""
    std = np.sqrt(np.asarray(var) / 2.0)
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channel(model: ChannelModel, spec: ResourceGridSpec, rng: np.random.Generator,
                   batch_shape=(), noise_var=0.0) -> ChannelRealization:
    """Draw one block-fading realization per batch element, shape ``batch + (A, F, T)``."""
    batch_shape = tuple(batch_shape)
    a, f, t = spec.rx_antennas, spec.num_subcarriers, spec.num_symbols
    full = batch_shape + (a, f, t)
    if model.kind == "awgn":
        h = np.ones(full, dtype=complex)
    elif model.kind == "rayleigh":
        h = np.broadcast_to(complex_normal(rng, batch_shape + (a, 1, 1)), full).copy()
    elif model.kind == "rician":
        theta = rng.uniform(-np.pi, np.pi, size=batch_shape + (1, 1, 1))
        scatter = complex_normal(rng, batch_shape + (a, 1, 1), model.scatter_var)
        h = np.broadcast_to(model.los_magnitude * np.exp(1j * theta) + scatter, full).copy()
    else:
        delays = np.asarray(model.tap_delays, dtype=float)
        powers = np.asarray(model.tap_powers, dtype=float)
        gains = complex_normal(rng, batch_shape + (a, delays.size), powers)
        steer = np.exp(-2j * np.pi * np.arange(f)[:, None] * delays[None, :] / f)  # (F, L)
        freq = gains @ steer.T  # (..., A, F)
        h = np.broadcast_to(freq[..., None], full).copy()
    return ChannelRealization(h, noise_var)


def _noise_shape(noise_var, ndim_batch):
    nv = np.asarray(noise_var, dtype=float)
    return nv.reshape(nv.shape + (1,) * (3 + ndim_batch - nv.ndim)) if nv.ndim else nv


def apply_channel(x: np.ndarray, ch: ChannelRealization, rng: np.random.Generator) -> np.ndarray:
    """``y_a = h_a * x + w_a`` with ``w ~ CN(0, N0)`` for every rx antenna.

    ``x`` is ``batch + (F, T)``; ``noise_var`` may be a scalar or one value per
    batch element.
    """
    x = np.asarray(x)
    y = ch.h * x[..., None, :, :]
    nv = np.asarray(ch.noise_var, dtype=float)
    if np.any(nv < 0):
        raise ValueError("noise variance must be non-negative")
    if np.any(nv > 0):
        nv = nv.reshape(nv.shape + (1,) * (y.ndim - nv.ndim)) if nv.ndim else nv
        y = y + complex_normal(rng, y.shape, nv)
    return y


def ebno_to_noise_var(ebno_db, constellation: Constellation):
    """``N0 = 1 / (k * 10^(EbN0/10))`` for unit symbol energy; pilots not counted."""
    return 1.0 / (constellation.bits_per_symbol * 10.0 ** (np.asarray(ebno_db, dtype=float) / 10.0))


# ------------------------------------------------------------------- estimation


def _interp_matrix(spec: ResourceGridSpec) -> np.ndarray:
    # (T, P) weights: linear between pilots, constant beyond the outermost ones
    pilots = np.asarray(spec.pilot_symbols, dtype=float)
    order = np.argsort(pilots)
    w = np.zeros((spec.num_symbols, pilots.size))
    t = np.arange(spec.num_symbols, dtype=float)
    for col, p in enumerate(order):
        unit = np.zeros(pilots.size)
        unit[col] = 1.0
        w[:, p] = np.interp(t, pilots[order], unit)
    return w


def ls_estimate(y: np.ndarray, spec: ResourceGridSpec) -> np.ndarray:
    """Least-squares channel estimate over the whole grid.

    ``y / p`` at pilot columns, then per subcarrier linear interpolation in
    time between pilot columns and constant extrapolation outside them.
    """
    if not spec.pilot_symbols:
        raise ValueError("LS estimation needs at least one pilot symbol")
    if np.any(spec.pilot_values == 0):
        raise ValueError("zero pilot value")
    at_pilots = np.asarray(y)[..., list(spec.pilot_symbols)] / spec.pilot_values
    return at_pilots @ _interp_matrix(spec).T


def mrc_equalize(y: np.ndarray, h: np.ndarray, noise_var):
    """Maximal-ratio combining over the rx-antenna axis (-3).

    Returns ``(x_hat, eff_noise_var)`` with shape ``(..., F, T)``.  Positions
    where every antenna has ``h == 0`` are unrecoverable: ``x_hat = 0`` and
    the effective noise variance is ``inf`` (the demapper then yields LLR 0).
    """
    gain = np.sum(np.abs(h) ** 2, axis=-3)
    num = np.sum(np.conj(h) * y, axis=-3)
    dead = gain == 0
    safe = np.where(dead, 1.0, gain)
    x_hat = np.where(dead, 0.0, num / safe)
    nv = np.asarray(noise_var, dtype=float)
    if nv.ndim:
        nv = nv.reshape(nv.shape + (1,) * (gain.ndim - nv.ndim))
    eff = np.where(dead, np.inf, nv / safe)
    return x_hat, eff


def _axis_llr(v: np.ndarray, levels: np.ndarray, m: int) -> np.ndarray:
    # per-axis max-log distances; returns (..., m) unnormalised LLRs
    d = (v[..., None] - levels) ** 2
    patterns = np.arange(levels.size)
    out = np.empty(v.shape + (m,))
    for b in range(m):
        one = ((patterns >> (m - 1 - b)) & 1).astype(bool)
        out[..., b] = d[..., one].min(axis=-1) - d[..., ~one].min(axis=-1)
    return out


def maxlog_demap(x_hat: np.ndarray, constellation: Constellation, eff_noise_var) -> np.ndarray:
    """Max-log LLRs ``(min_{b=1}|x-s|^2 - min_{b=0}|x-s|^2) / N0``, shape ``(..., k)``.

    Square Gray QAM separates into independent in-phase and quadrature PAM
    problems, which gives the same minima as the full 2-D search.
    """
    nv = np.asarray(eff_noise_var, dtype=float)
    if np.any(nv <= 0):
        raise ValueError("effective noise variance must be positive")
    x_hat = np.asarray(x_hat)
    k = constellation.bits_per_symbol
    m = k // 2
    li = _axis_llr(x_hat.real, constellation.pam_levels, m)
    lq = _axis_llr(x_hat.imag, constellation.pam_levels, m)
    llr = np.empty(x_hat.shape + (k,))
    llr[..., 0::2] = li
    llr[..., 1::2] = lq
    return llr / np.broadcast_to(nv, x_hat.shape)[..., None]


def maxlog_demap_bruteforce(x_hat: np.ndarray, constellation: Constellation, eff_noise_var) -> np.ndarray:
    """Reference max-log demapper searching all 2^k points."""
    x_hat = np.asarray(x_hat)
    d = np.abs(x_hat[..., None] - constellation.points) ** 2
    k = constellation.bits_per_symbol
    out = np.empty(x_hat.shape + (k,))
    for b in range(k):
        one = constellation.labels[:, b].astype(bool)
        out[..., b] = d[..., one].min(axis=-1) - d[..., ~one].min(axis=-1)
    return out / np.broadcast_to(np.asarray(eff_noise_var, dtype=float), x_hat.shape)[..., None]


def hard_bits(llrs: np.ndarray) -> np.ndarray:
    return (np.asarray(llrs) < 0).astype(np.uint8)


def bit_errors(llrs: np.ndarray, true_bits: np.ndarray) -> np.ndarray:
    """Boolean error map; an LLR of exactly 0 always counts as an error."""
    llrs = np.asarray(llrs)
    true_bits = np.asarray(true_bits)
    if llrs.shape != true_bits.shape:
        raise ValueError(f"shape mismatch {llrs.shape} vs {true_bits.shape}")
    return (llrs == 0) | ((llrs < 0) != (true_bits == 1))


def count_errors(llrs: np.ndarray, true_bits: np.ndarray) -> tuple[int, int]:
    err = bit_errors(llrs, true_bits)
    return int(err.size), int(err.sum())
