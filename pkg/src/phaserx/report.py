"""CSV, SVG and manifest output for sweep results."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from .sweep import SweepRecord, mean_ber

CSV_HEADER = ["method", "ebno_db", "bits_tested", "bit_errors", "ber", "blocks_tested",
              "error_blocks", "seed", "wall_time_s"]
BER_FLOOR = 1e-7
ARTIFACT_VERSION = 1


def format_csv(records, include_wall_time: bool = False) -> str:
    """CSV text plus a ``# mean_ber`` comment footer per method.

    Wall-clock times vary between runs, so unless ``include_wall_time`` is
    set the column is written as 0 and the real values live in the manifest;
    this keeps equal-seed runs byte-identical.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        wall = repr(float(r.wall_time_s)) if include_wall_time else "0"
        w.writerow([r.method, repr(float(r.ebno_db)), r.bits_tested, r.bit_errors, repr(r.ber),
                    r.blocks_tested, r.error_blocks, r.seed, wall])
    for method, value in mean_ber(records).items():
        buf.write(f"# mean_ber,{method},{value!r}\n")
    return buf.getvalue()


def parse_csv(text: str) -> list[SweepRecord]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    out = []
    for row in reader:
        if len(row) != len(CSV_HEADER):
            raise ValueError(f"malformed CSV row {row}")
        rec = SweepRecord(row[0], float(row[1]), int(row[2]), int(row[3]), int(row[5]), int(row[6]),
                          int(row[7]), float(row[8]))
        if rec.bits_tested and float(row[4]) != rec.ber:
            raise ValueError(f"ber column disagrees with counts in row {row}")
        out.append(rec)
    return out


def write_csv(records, path, include_wall_time: bool = False) -> Path:
    path = Path(path)
    path.write_text(format_csv(records, include_wall_time), encoding="utf-8")
    return path


def read_csv(path) -> list[SweepRecord]:
    return parse_csv(Path(path).read_text(encoding="utf-8"))


def write_svg(records, path, floor: float = BER_FLOOR, title: str | None = None) -> Path:
    """Log-scale BER vs Eb/N0, one line per method.

    Points with zero measured errors are drawn at ``floor`` with a hollow
    downward marker and a note in the legend.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": "phaserx", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        series: dict[str, list[SweepRecord]] = {}
        for r in records:
            series.setdefault(r.method, []).append(r)
        any_floor = False
        for method, recs in series.items():
            recs = sorted(recs, key=lambda r: r.ebno_db)
            x = np.array([r.ebno_db for r in recs])
            y = np.array([max(r.ber, floor) for r in recs])
            (line,) = ax.semilogy(x, y, marker="o", label=method)
            zero = np.array([r.bit_errors == 0 for r in recs])
            if zero.any():
                any_floor = True
                ax.semilogy(x[zero], y[zero], linestyle="none", marker="v", markersize=9,
                            markerfacecolor="none", color=line.get_color())
        if any_floor:
            ax.axhline(floor, color="grey", linewidth=0.8, linestyle=":")
            ax.annotate(f"no errors observed (plotted at {floor:g})", xy=(0.02, 0.03),
                        xycoords="axes fraction", fontsize=8, color="grey")
        ax.set_xlabel("Eb/N0 (dB)")
        ax.set_ylabel("BER")
        ax.set_ylim(bottom=floor / 2)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, files, config_text: str = "", seeds=None, started: str | None = None,
                   finished: str | None = None, extra: dict | None = None) -> Path:
    """``manifest.json`` listing every emitted file with its SHA-256 digest."""
    out_dir = Path(out_dir)
    entries = []
    for f in files:
        f = Path(f)
        entries.append({"name": os.path.relpath(f, out_dir), "sha256": sha256_file(f),
                        "bytes": f.stat().st_size})
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "config": config_text,
        "seeds": seeds or {},
        "started": started or _now(),
        "finished": finished or _now(),
        "files": entries,
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def emit_report(records, out_dir, config_text: str = "", seeds=None, started: str | None = None,
                title: str | None = None) -> dict[str, Path]:
    """Write ``sweep.csv``, ``sweep.svg`` and ``manifest.json`` into ``out_dir``."""
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = started or _now()
    csv_path = write_csv(records, out_dir / "sweep.csv")
    svg_path = write_svg(records, out_dir / "sweep.svg", title=title)
    timing = [{"method": r.method, "ebno_db": r.ebno_db, "wall_time_s": r.wall_time_s} for r in records]
    manifest = write_manifest(out_dir, [csv_path, svg_path], config_text, seeds, started,
                              extra={"wall_times": timing, "mean_ber": mean_ber(records)})
    return {"csv": csv_path, "svg": svg_path, "manifest": manifest}
