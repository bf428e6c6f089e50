"""Compare the numba and numpy backends on the hot kernels.

Each backend runs in its own interpreter because the choice is made at
import time from SNORECANCEL_BACKEND.

    python benchmarks/bench_kernels.py [--seconds 10]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def measure(seconds, repeat):
    from snorecancel import saf, sad
    from snorecancel.paths import default_paths
    from snorecancel.weights import random_weights

    rng = np.random.default_rng(0)
    fs = 44100
    n = int(seconds * fs)
    x = rng.normal(size=n) * 0.1
    p, s = default_paths()
    d = np.convolve(np.convolve(x, p)[:n], s)[:n]
    feats = sad.logmel(x, fs)
    w = random_weights(1)
    cfg = saf.SafConfig()

    def engine(gate_value):
        st = saf.new_state(cfg, s_hat=s)
        saf.run(st, x, d, np.full(n, gate_value, dtype=np.uint8))

    # warm-up compiles the numba kernels
    engine(1)
    sad.crnn_forward(feats[:10], w)
    w_sub = rng.normal(size=(cfg.K, cfg.Lw)) + 1j * rng.normal(size=(cfg.K, cfg.Lw))
    saf.stack_fullband(w_sub, cfg)
    return {
        "engine_gate_on_s": _best(lambda: engine(1), repeat),
        "engine_gate_off_s": _best(lambda: engine(0), repeat),
        "stack_fullband_us": 1e6 * _best(lambda: [saf.stack_fullband(w_sub, cfg) for _ in range(100)], repeat) / 100,
        "crnn_forward_s": _best(lambda: sad.crnn_forward(feats, w), repeat),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=10.0, help="signal length per run")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--worker", choices=["numba", "numpy"], help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        print(json.dumps(measure(args.seconds, args.repeat)))
        return
    rows = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, SNORECANCEL_BACKEND=backend)
        cmd = [sys.executable, __file__, "--worker", backend, "--seconds", str(args.seconds), "--repeat", str(args.repeat)]
        rows[backend] = json.loads(subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout)
    print(f"{'kernel':<20}{'numba':>12}{'numpy':>12}{'speedup':>10}   ({args.seconds:g} s of audio)")
    for key in rows["numba"]:
        a, b = rows["numba"][key], rows["numpy"][key]
        print(f"{key:<20}{a:>12.4g}{b:>12.4g}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
