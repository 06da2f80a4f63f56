"""Time the numba kernels against the pure-numpy fallback.

Kernel timings import both backends side by side. The end-to-end epoch
timing runs once per backend in a subprocess, since the backend is fixed
at import time by SSDHEALTH_DISABLE_NUMBA.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--batch 32] [--hidden 24]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ssdhealth.kernels import _numba as nb
from ssdhealth.kernels import _numpy as npk

EPOCH_SNIPPET = """
import time
from ssdhealth import BACKEND, data, model, training
ds = data.generate_synthetic(593, seed=42)
tr, te = data.split_stratified(ds, 0.2, 42)
cfg = model.ModelConfig(hidden={hidden})
training.train(cfg, training.TrainConfig(max_epochs=1), tr)  # compile / warm caches
t0 = time.perf_counter()
training.train(cfg, training.TrainConfig(max_epochs={epochs}), tr)
print(BACKEND, (time.perf_counter() - t0) / {epochs})
"""


def best_of(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(B, T, H, heads):
    rng = np.random.default_rng(0)
    M = 2 * H
    dh = M // heads
    X = rng.normal(size=(B, T, 1))
    W, U, b = rng.normal(size=(3, 1, H)) * 0.5, rng.normal(size=(3, H, H)) * 0.2, np.zeros((3, H))
    Hs = rng.normal(size=(B, T, M))
    Wq, Wk, Wv = (rng.normal(size=(heads, M, dh)) * 0.2 for _ in range(3))
    Wo = rng.normal(size=(M, M)) * 0.2
    dH, dA = rng.normal(size=(B, T, H)), rng.normal(size=(B, T, M))
    g, c = np.ones(M), np.zeros(M)

    def cases(k):
        fw = k.gru_scan_forward(X, W, U, b, False)
        mf = k.mha_forward(Hs, Wq, Wk, Wv, Wo)
        ln = k.layernorm_forward(Hs, g, c, 1e-5)
        return {
            "gru_scan_forward": lambda: k.gru_scan_forward(X, W, U, b, False),
            "gru_scan_backward": lambda: k.gru_scan_backward(X, W, U, *fw[1:], dH, False),
            "mha_forward": lambda: k.mha_forward(Hs, Wq, Wk, Wv, Wo),
            "mha_backward": lambda: k.mha_backward(dA, Hs, Wq, Wk, Wv, Wo, *mf[1:]),
            "layernorm_forward": lambda: k.layernorm_forward(Hs, g, c, 1e-5),
            "layernorm_backward": lambda: k.layernorm_backward(dA, ln[1], ln[2], g),
        }

    return cases(npk), cases(nb)


def epoch_time(disable_numba, hidden, epochs):
    env = dict(os.environ, SSDHEALTH_DISABLE_NUMBA="1" if disable_numba else "0")
    code = EPOCH_SNIPPET.format(hidden=hidden, epochs=epochs)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    backend, seconds = out.stdout.split()
    return backend, float(seconds)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--seq-len", type=int, default=8)
    ap.add_argument("--hidden", type=int, default=24)
    ap.add_argument("--heads", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=3, help="epochs for the end-to-end timing")
    args = ap.parse_args()

    slow, fast = kernel_cases(args.batch, args.seq_len, args.hidden, args.heads)
    print(f"batch={args.batch} T={args.seq_len} hidden={args.hidden} heads={args.heads}")
    print(f"{'kernel':<20}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name in slow:
        t_np = best_of(slow[name], args.repeat)
        t_nb = best_of(fast[name], args.repeat)
        print(f"{name:<20}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.1f}x")

    print(f"\nseconds per training epoch (593 records, hidden={args.hidden})")
    results = dict(epoch_time(flag, args.hidden, args.epochs) for flag in (True, False))
    for backend, sec in results.items():
        print(f"  {backend:<6} {sec:.3f}")
    print(f"  speedup {results['numpy'] / results['numba']:.1f}x")


if __name__ == "__main__":
    main()
