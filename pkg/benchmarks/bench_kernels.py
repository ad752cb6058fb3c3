"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--precision f32] [--json out.json]

Times every kernel on training-sized tensors, checks that both backends give
the same answer, and times one full forward+backward step of the tiny
receiver with each backend.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from phaserx import _fallback

try:
    from phaserx import _ckernels
except ImportError:  # not built
    _ckernels = None


def _median_time(fn, repeat: int) -> float:
    fn()  # warm-up
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return float(np.median(ts))


def kernel_cases(rng, dtype):
    # batch 16, group 4, 8 x 14 grid, 8 channels (32 in the bottleneck)
    x = rng.standard_normal((64, 8, 14, 8)).astype(dtype)
    w = rng.standard_normal((5, 9, 8)).astype(dtype)
    xg = rng.standard_normal((16, 4, 112, 8)).astype(dtype)
    wg = rng.standard_normal((8, 4)).astype(dtype)
    xl = rng.standard_normal((7168, 8)).astype(dtype)
    ga, be = np.ones(8, dtype), np.zeros(8, dtype)
    xh = rng.standard_normal(7168 * 32).astype(dtype)
    _, xhat, rstd = _fallback.layernorm_forward(xl, ga, be, 1e-6)
    return {
        "dwconv_forward": ("dwconv_forward", (x, w, 2, 2)),
        "dwconv_backward": ("dwconv_backward", (x, x, w, 2, 2)),
        "gconv_forward": ("gconv_forward", (xg, wg)),
        "gconv_backward": ("gconv_backward", (xg, xg, wg)),
        "layernorm_forward": ("layernorm_forward", (xl, ga, be, 1e-6)),
        "layernorm_backward": ("layernorm_backward", (xl, xhat.astype(dtype), rstd.astype(dtype), ga)),
        "gelu_forward": ("gelu_forward", (xh,)),
        "gelu_backward": ("gelu_backward", (xh, xh)),
    }


def _max_diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(_max_diff(p, q) for p, q in zip(a, b))
    return float(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)).max())


STEP_SNIPPET = """
import time, numpy as np
from phaserx import receiver as R, phy, autodiff as ad, kernels
from phaserx.training import generate_batch, receiver_loss
from phaserx.groups import roots_of_unity
rng = np.random.default_rng(0)
cfg = R.tiny_config({n})
spec = phy.make_grid_spec(num_subcarriers=8)
params = R.init_params(cfg, rng)
R.randomize_params(params, rng, 0.3)
batch = generate_batch(rng, phy.ChannelModel("rayleigh"), spec, np.full(16, 10.0), True, 16, roots_of_unity({n}))
ts = []
for i in range({repeat} + 1):
    t = time.perf_counter()
    loss = receiver_loss(batch.features, batch.labels, params, cfg, spec)
    ad.backward(loss)
    ts.append(time.perf_counter() - t)
print(kernels.BACKEND, float(np.median(ts[1:])))
"""


def step_time(n: int, repeat: int, pure: bool) -> tuple[str, float]:
    env = dict(os.environ)
    env["PHASERX_PURE_PYTHON"] = "1" if pure else "0"
    out = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(n=n, repeat=repeat)], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return out[0], float(out[1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--precision", choices=("f32", "f64"), default="f32")
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; run `python3 setup.py build_ext --inplace`")
        return 1
    dtype = np.float32 if args.precision == "f32" else np.float64
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':20s} {'cython ms':>10s} {'numpy ms':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, (fn_name, inputs) in kernel_cases(rng, dtype).items():
        fc, fn = getattr(_ckernels, fn_name), getattr(_fallback, fn_name)
        diff = _max_diff(fc(*inputs), fn(*inputs))
        tc = _median_time(lambda: fc(*inputs), args.repeat)
        tn = _median_time(lambda: fn(*inputs), args.repeat)
        rows.append({"kernel": name, "cython_s": tc, "numpy_s": tn, "max_abs_diff": diff})
        print(f"{name:20s} {tc * 1e3:10.3f} {tn * 1e3:10.3f} {tn / tc:8.1f} {diff:11.2e}")
    print("\nfull forward+backward, tiny receiver, batch 16, 8x14 grid (float32)")
    for n in (1, 4):
        _, tc = step_time(n, max(3, args.repeat // 4), pure=False)
        _, tn = step_time(n, max(3, args.repeat // 4), pure=True)
        rows.append({"kernel": f"train_step_n{n}", "cython_s": tc, "numpy_s": tn})
        print(f"{'step n=' + str(n):20s} {tc * 1e3:10.1f} {tn * 1e3:10.1f} {tn / tc:8.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
