"""``phaserx`` command line.

Exit status: 0 success, 1 verification failure (or diverged training),
2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import checkpoint as ckpt_mod
from . import config as cfgmod
from . import kernels
from . import receiver as rx
from . import report, sweep, verification
from .training import DivergenceError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _ebno_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--ebno expects a comma list of dB values, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("--ebno list is empty")
    return values


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _common(p: argparse.ArgumentParser, model: bool = True) -> None:
    p.add_argument("--config", type=Path, help="INI run configuration")
    p.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--precision", choices=("f32", "f64"))
    p.add_argument("--channel", choices=("awgn", "rayleigh", "rician", "tdl"))
    p.add_argument("--constellation", choices=("qpsk", "qam16", "qam64", "qam256"))
    if model:
        p.add_argument("--group-order", type=_positive)
        p.add_argument("--group-kernel", type=_positive)


def _sweep_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ebno", type=_ebno_list, help="comma list of Eb/N0 points in dB")
    p.add_argument("--max-blocks", type=_positive)
    p.add_argument("--target-error-blocks", type=_positive)
    p.add_argument("--threads", type=_positive, help="worker threads (default: PHASERX_THREADS or CPU count)")
    p.add_argument("--global-phase", action="store_true", help="apply a random global phase per block")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phaserx", description="Phase-equivariant neural OFDM receiver toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a receiver and write a checkpoint")
    _common(p)
    p.add_argument("--steps", type=int, help="override the number of training steps")
    p.add_argument("--resume", type=Path, help="continue from a checkpoint")
    p.add_argument("--log-every", type=_positive, default=100)

    p = sub.add_parser("sweep", help="BER sweep of a trained receiver")
    _common(p, model=False)
    _sweep_args(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--with-baselines", action="store_true", help="also evaluate perfect-CSI and LS on the same blocks")

    p = sub.add_parser("baselines", help="BER sweep of the perfect-CSI and LS receivers")
    _common(p, model=False)
    _sweep_args(p)

    p = sub.add_parser("verify", help="run property-check suites")
    p.add_argument("suite", nargs="?", default="all", choices=verification.SUITES + ("all",))
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", type=Path, help="also write verify.json here")

    p = sub.add_parser("report", help="re-render SVG and manifest from a sweep CSV")
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--out", type=Path, help="output directory (default: the CSV's directory)")
    p.add_argument("--config", type=Path, help="config to record in the manifest")

    p = sub.add_parser("param-count", help="print the parameter count of a configuration")
    p.add_argument("--config", type=Path)
    p.add_argument("--group-order", type=_positive)
    p.add_argument("--group-kernel", type=_positive)
    p.add_argument("--constellation", choices=("qpsk", "qam16", "qam64", "qam256"))
    p.add_argument("--breakdown", action="store_true", help="list every parameter tensor")
    return ap


# ------------------------------------------------------------------ helpers


def _load_run(args, base: cfgmod.RunConfig | None = None) -> cfgmod.RunConfig:
    run = cfgmod.load(args.config) if getattr(args, "config", None) else (base or cfgmod.default_config())
    try:
        run = run.with_overrides(
            group_order=getattr(args, "group_order", None),
            group_kernel=getattr(args, "group_kernel", None),
            seed=getattr(args, "seed", None),
            precision=getattr(args, "precision", None),
            channel=getattr(args, "channel", None),
            constellation=getattr(args, "constellation", None),
            ebno=getattr(args, "ebno", None),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return run


def _stop_rule(args, run: cfgmod.RunConfig) -> sweep.StopRule:
    sw = run.sweep
    return sweep.StopRule(args.max_blocks or sw.max_blocks, args.target_error_blocks or sw.target_error_blocks,
                          sw.blocks_per_batch)


def _out_dir(args, default: str) -> Path:
    out = args.out or Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _now() -> str:
    return report._now()


# ----------------------------------------------------------------- commands


def cmd_train(args) -> int:
    started = _now()
    if args.resume:
        trainer = ckpt_mod.to_trainer(ckpt_mod.load_checkpoint(args.resume))
        run = cfgmod.RunConfig(trainer.receiver_config, trainer.config)
        if args.steps is not None:
            trainer.config = replace(trainer.config, steps=args.steps)
            run = replace(run, train=trainer.config)
    else:
        run = _load_run(args)
        if args.steps is not None:
            run = replace(run, train=replace(run.train, steps=args.steps))
        from .training import Trainer
        trainer = Trainer(run.receiver, run.train)
    out = _out_dir(args, "phaserx-train")
    total = trainer.config.steps
    t0 = time.perf_counter()

    def log(step, loss):
        if step % args.log_every == 0 or step == total:
            print(f"step {step}/{total} loss {loss:.5f} ({time.perf_counter() - t0:.1f}s)", flush=True)

    status = EXIT_OK
    try:
        trainer.run(callback=log)
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        status = EXIT_FAIL
    ck = ckpt_mod.from_trainer(trainer, run)
    ck_path = out / "checkpoint.prx"
    ckpt_mod.save_checkpoint(ck_path, ck)
    cfg_path = out / "config.ini"
    cfg_path.write_text(ck.config_text, encoding="utf-8")
    loss_path = out / "losses.csv"
    loss_path.write_text("step,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(trainer.losses)),
                         encoding="utf-8")
    report.write_manifest(out, [ck_path, cfg_path, loss_path], ck.config_text,
                          {"seed": trainer.config.seed}, started,
                          extra={"steps": trainer.step, "param_count": rx.param_count(run.receiver),
                                 "backend": kernels.BACKEND})
    print(f"wrote {ck_path}")
    return status


def _emit(records, args, run: cfgmod.RunConfig, started: str, title: str) -> None:
    out = _out_dir(args, "phaserx-sweep")
    paths = report.emit_report(records, out, cfgmod.dumps(run), {"seed": run.train.seed}, started, title)
    for r in records:
        print(f"{r.method:>18} {r.ebno_db:6.2f} dB  BER {r.ber:.4e}  ({r.bit_errors}/{r.bits_tested} bits, "
              f"{r.blocks_tested} blocks)")
    print(f"wrote {paths['csv']}, {paths['svg']}, {paths['manifest']}")


def cmd_sweep(args) -> int:
    started = _now()
    if not args.checkpoint.exists():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    ck = ckpt_mod.load_checkpoint(args.checkpoint)
    base = ck.config
    run = _load_run(args, base)
    if run.grid != base.grid:
        raise UsageError("the sweep grid (constellation, antennas, size) must match the checkpoint's")
    spec = run.grid.spec()
    params = ck.params
    if args.precision:
        dt = np.float32 if args.precision == "f32" else np.float64
        for p in params.values():
            p.tensor.data = p.tensor.data.astype(dt)
    model = rx.Receiver(base.receiver, spec, params)
    name = f"neural:{report.sha256_file(args.checkpoint)[:12]}"
    methods = {name: sweep.neural_llrs(model)}
    if args.with_baselines:
        methods.update(sweep.baseline_methods())
    records = sweep.evaluate(methods, run.sweep.ebno, spec, run.channel, _stop_rule(args, run), run.train.seed,
                             args.global_phase or run.sweep.random_global_phase, args.threads)
    _emit(records, args, run, started, f"{name} on {run.channel.kind}")
    return EXIT_OK


def cmd_baselines(args) -> int:
    started = _now()
    run = _load_run(args)
    records = sweep.run_baselines(run.grid.spec(), run.channel, run.sweep.ebno, run.train.seed,
                                  _stop_rule(args, run), args.global_phase or run.sweep.random_global_phase,
                                  args.threads)
    _emit(records, args, run, started, f"baselines on {run.channel.kind}")
    return EXIT_OK


def cmd_verify(args) -> int:
    def show(res):
        print(json.dumps(res.to_dict(), sort_keys=True, default=float), flush=True)

    results = verification.run_suite(args.suite, args.seed, on_result=show)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=sys.stderr)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "verify.json").write_text(
            json.dumps([r.to_dict() for r in results], indent=2, sort_keys=True, default=float) + "\n",
            encoding="utf-8")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_report(args) -> int:
    started = _now()
    records = report.read_csv(args.csv)
    if not records:
        raise UsageError(f"{args.csv} has no records")
    out = args.out or args.csv.parent
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    if csv_path.resolve() != args.csv.resolve():
        csv_path.write_bytes(args.csv.read_bytes())
    svg_path = report.write_svg(records, out / "sweep.svg")
    cfg_text = args.config.read_text(encoding="utf-8") if args.config else ""
    report.write_manifest(out, [csv_path, svg_path], cfg_text, started=started,
                          extra={"mean_ber": sweep.mean_ber(records)})
    print(f"wrote {svg_path}")
    return EXIT_OK


def cmd_param_count(args) -> int:
    run = _load_run(args)
    cfg = run.receiver
    if args.breakdown:
        for name, shape, _ in rx.param_table(cfg):
            print(f"{name:32s} {str(shape):18s} {int(np.prod(shape))}")
    print(rx.param_count(cfg))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "baselines": cmd_baselines, "verify": cmd_verify,
            "report": cmd_report, "param-count": cmd_param_count}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, cfgmod.ConfigError) as exc:
        print(f"phaserx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ckpt_mod.CheckpointError) as exc:
        print(f"phaserx: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"phaserx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
