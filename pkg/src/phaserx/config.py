"""INI run configuration.

Schema (every key optional; missing keys take the defaults shown)::

    [receiver]
    group_order = 1
    group_kernel = auto            ; or an integer in [1, group_order]
    stages = 5x32@1,1; 4x48@2,2; 3x32@1,1   ; blocks x channels @ dilation
    width = 1.0                    ; multiplies every stage width
    ft_kernel = 5,9
    bottleneck_ratio = 4
    ln_eps = 1e-6

    [grid]
    constellation = qpsk           ; qpsk | qam16 | qam64 | qam256
    num_subcarriers = 64
    num_symbols = 14
    pilot_symbols = 2,11
    rx_antennas = 2

    [channel]
    kind = rayleigh                ; awgn | rayleigh | rician | tdl
    los_magnitude = 1.0
    scatter_var = 0.5
    tap_delays = 0,1,2,3
    tap_powers = 0.5,0.25,0.15,0.1

    [training]
    steps = 5000
    batch_size = 16
    ebno_min_db = 0
    ebno_max_db = 12
    lr = 0.001
    milestones = auto              ; or e.g. 3333,4167
    lr_factor = 0.1
    weight_decay = 0.01
    seed = 0
    precision = f32                ; f32 | f64
    random_global_phase = true
    divergence_factor = 10
    divergence_patience = 100

    [sweep]
    ebno = 0,2,4,6,8,10,12
    max_blocks = 2000
    target_error_blocks = 200
    blocks_per_batch = 16
    random_global_phase = false

The receiver's input width and output bits are derived from ``[grid]``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

from .phy import ChannelModel
from .receiver import DEFAULT_STAGES, ReceiverConfig, StageConfig, input_channels_for
from .training import GridConfig, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    ebno: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    max_blocks: int = 2000
    target_error_blocks: int = 200
    blocks_per_batch: int = 16
    random_global_phase: bool = False


@dataclass(frozen=True)
class RunConfig:
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @property
    def grid(self) -> GridConfig:
        return self.train.grid

    @property
    def channel(self) -> ChannelModel:
        return self.train.channel

    def with_overrides(self, **kw) -> "RunConfig":
        """Apply command-line style overrides and re-derive dependent fields."""
        rec, tr, sw = self.receiver, self.train, self.sweep
        if kw.get("group_order") is not None:
            n = int(kw["group_order"])
            kg = rec.group_kernel if rec.group_kernel is not None and rec.group_kernel <= n else None
            rec = replace(rec, group_order=n, group_kernel=kg)
        if kw.get("group_kernel") is not None:
            rec = replace(rec, group_kernel=int(kw["group_kernel"]))
        if kw.get("seed") is not None:
            tr = replace(tr, seed=int(kw["seed"]))
        if kw.get("precision") is not None:
            tr = replace(tr, precision=kw["precision"])
        if kw.get("channel") is not None:
            tr = replace(tr, channel=replace(tr.channel, kind=kw["channel"]))
        if kw.get("constellation") is not None:
            tr = replace(tr, grid=replace(tr.grid, constellation=kw["constellation"]))
        if kw.get("ebno") is not None:
            sw = replace(sw, ebno=tuple(float(v) for v in kw["ebno"]))
        return RunConfig(_sync_receiver(rec, tr.grid), tr, sw)


def _sync_receiver(rec: ReceiverConfig, grid: GridConfig) -> ReceiverConfig:
    return replace(rec, input_channels=input_channels_for(grid.rx_antennas),
                   bits_per_symbol=grid.bits_per_symbol)


# ------------------------------------------------------------------ formatting


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _fmt_seq(values) -> str:
    return ",".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def parse_stages(text: str) -> tuple[StageConfig, ...]:
    """``"5x32@1,1; 4x48@2,2"`` -> stage tuple."""
    stages = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            shape, _, dil = part.partition("@")
            blocks, _, channels = shape.lower().partition("x")
            dilation = _ints(dil) if dil else (1, 1)
            if len(dilation) != 2:
                raise ValueError
            stages.append(StageConfig(int(blocks), int(channels), dilation))
        except ValueError:
            raise ConfigError(f"bad stage description {part!r}; expected e.g. 5x32@1,1") from None
    if not stages:
        raise ConfigError("stages must list at least one stage")
    return tuple(stages)


def format_stages(stages) -> str:
    return "; ".join(f"{s.num_blocks}x{s.channels}@{s.dilation[0]},{s.dilation[1]}" for s in stages)


def dumps(cfg: RunConfig) -> str:
    """Canonical INI text; ``loads(dumps(c)) == c``."""
    rec, tr, sw = cfg.receiver, cfg.train, cfg.sweep
    cp = configparser.ConfigParser()
    cp["receiver"] = {
        "group_order": str(rec.group_order),
        "group_kernel": "auto" if rec.group_kernel is None else str(rec.group_kernel),
        "stages": format_stages(rec.stages),
        "ft_kernel": _fmt_seq(rec.ft_kernel),
        "bottleneck_ratio": str(rec.bottleneck_ratio),
        "ln_eps": repr(rec.ln_eps),
    }
    g = tr.grid
    cp["grid"] = {
        "constellation": g.constellation,
        "num_subcarriers": str(g.num_subcarriers),
        "num_symbols": str(g.num_symbols),
        "pilot_symbols": _fmt_seq(g.pilot_symbols),
        "rx_antennas": str(g.rx_antennas),
    }
    c = tr.channel
    cp["channel"] = {
        "kind": c.kind,
        "los_magnitude": repr(float(c.los_magnitude)),
        "scatter_var": repr(float(c.scatter_var)),
        "tap_delays": _fmt_seq(float(v) for v in c.tap_delays),
        "tap_powers": _fmt_seq(float(v) for v in c.tap_powers),
    }
    cp["training"] = {
        "steps": str(tr.steps),
        "batch_size": str(tr.batch_size),
        "ebno_min_db": repr(float(tr.ebno_min_db)),
        "ebno_max_db": repr(float(tr.ebno_max_db)),
        "lr": repr(float(tr.lr)),
        "milestones": "auto" if tr.milestones is None else _fmt_seq(tr.milestones),
        "lr_factor": repr(float(tr.lr_factor)),
        "weight_decay": repr(float(tr.weight_decay)),
        "seed": str(tr.seed),
        "precision": tr.precision,
        "random_global_phase": str(tr.random_global_phase).lower(),
        "divergence_factor": repr(float(tr.divergence_factor)),
        "divergence_patience": str(tr.divergence_patience),
    }
    cp["sweep"] = {
        "ebno": _fmt_seq(float(v) for v in sw.ebno),
        "max_blocks": str(sw.max_blocks),
        "target_error_blocks": str(sw.target_error_blocks),
        "blocks_per_batch": str(sw.blocks_per_batch),
        "random_global_phase": str(sw.random_global_phase).lower(),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    known = {"receiver", "grid", "channel", "training", "sweep"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for name in known:
        if not cp.has_section(name):
            cp.add_section(name)
    try:
        return _build(cp)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _build(cp: configparser.ConfigParser) -> RunConfig:
    d_rec, d_tr, d_sw = ReceiverConfig(), TrainConfig(), SweepConfig()
    d_grid, d_ch = d_tr.grid, d_tr.channel

    r = cp["receiver"]
    _reject_unknown(r, {"group_order", "group_kernel", "stages", "width", "ft_kernel",
                        "bottleneck_ratio", "ln_eps"})
    kg = r.get("group_kernel", "auto").strip().lower()
    stages = parse_stages(r["stages"]) if "stages" in r else DEFAULT_STAGES
    rec = ReceiverConfig(
        group_order=r.getint("group_order", d_rec.group_order),
        group_kernel=None if kg == "auto" else int(kg),
        stages=stages,
        ft_kernel=_ints(r["ft_kernel"]) if "ft_kernel" in r else d_rec.ft_kernel,
        bottleneck_ratio=r.getint("bottleneck_ratio", d_rec.bottleneck_ratio),
        ln_eps=r.getfloat("ln_eps", d_rec.ln_eps),
    )
    width = r.getfloat("width", 1.0)
    if width != 1.0:
        rec = rec.scaled(width)

    g = cp["grid"]
    _reject_unknown(g, {"constellation", "num_subcarriers", "num_symbols", "pilot_symbols", "rx_antennas"})
    grid = GridConfig(
        constellation=g.get("constellation", d_grid.constellation).strip().lower(),
        num_subcarriers=g.getint("num_subcarriers", d_grid.num_subcarriers),
        num_symbols=g.getint("num_symbols", d_grid.num_symbols),
        pilot_symbols=_ints(g["pilot_symbols"]) if "pilot_symbols" in g else d_grid.pilot_symbols,
        rx_antennas=g.getint("rx_antennas", d_grid.rx_antennas),
    )
    if grid.constellation not in ("qpsk", "qam16", "qam64", "qam256"):
        raise ConfigError(f"unknown constellation {grid.constellation!r}")

    c = cp["channel"]
    _reject_unknown(c, {"kind", "los_magnitude", "scatter_var", "tap_delays", "tap_powers"})
    channel = ChannelModel(
        kind=c.get("kind", d_ch.kind).strip().lower(),
        los_magnitude=c.getfloat("los_magnitude", d_ch.los_magnitude),
        scatter_var=c.getfloat("scatter_var", d_ch.scatter_var),
        tap_delays=_floats(c["tap_delays"]) if "tap_delays" in c else d_ch.tap_delays,
        tap_powers=_floats(c["tap_powers"]) if "tap_powers" in c else d_ch.tap_powers,
    )

    t = cp["training"]
    _reject_unknown(t, {"steps", "batch_size", "ebno_min_db", "ebno_max_db", "lr", "milestones",
                        "lr_factor", "weight_decay", "seed", "precision", "random_global_phase",
                        "divergence_factor", "divergence_patience"})
    ms = t.get("milestones", "auto").strip().lower()
    train = TrainConfig(
        steps=t.getint("steps", d_tr.steps),
        batch_size=t.getint("batch_size", d_tr.batch_size),
        ebno_min_db=t.getfloat("ebno_min_db", d_tr.ebno_min_db),
        ebno_max_db=t.getfloat("ebno_max_db", d_tr.ebno_max_db),
        lr=t.getfloat("lr", d_tr.lr),
        milestones=None if ms == "auto" else _ints(ms),
        lr_factor=t.getfloat("lr_factor", d_tr.lr_factor),
        weight_decay=t.getfloat("weight_decay", d_tr.weight_decay),
        seed=t.getint("seed", d_tr.seed),
        precision=t.get("precision", d_tr.precision).strip().lower(),
        random_global_phase=t.getboolean("random_global_phase", d_tr.random_global_phase),
        channel=channel,
        grid=grid,
        divergence_factor=t.getfloat("divergence_factor", d_tr.divergence_factor),
        divergence_patience=t.getint("divergence_patience", d_tr.divergence_patience),
    )

    s = cp["sweep"]
    _reject_unknown(s, {"ebno", "max_blocks", "target_error_blocks", "blocks_per_batch",
                        "random_global_phase"})
    sweep = SweepConfig(
        ebno=_floats(s["ebno"]) if "ebno" in s else d_sw.ebno,
        max_blocks=s.getint("max_blocks", d_sw.max_blocks),
        target_error_blocks=s.getint("target_error_blocks", d_sw.target_error_blocks),
        blocks_per_batch=s.getint("blocks_per_batch", d_sw.blocks_per_batch),
        random_global_phase=s.getboolean("random_global_phase", d_sw.random_global_phase),
    )
    return RunConfig(_sync_receiver(rec, grid), train, sweep)


def _reject_unknown(section, allowed: set[str]) -> None:
    extra = set(section.keys()) - allowed
    if extra:
        raise ConfigError(f"unknown keys in [{section.name}]: {sorted(extra)}")


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def default_config() -> RunConfig:
    return loads("")
