"""Time the numba kernels against the pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--batch 256]

Also runs one short end-to-end training epoch per backend and checks that
both backends agree numerically.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dosa import kernels
from dosa._jit import HAVE_NUMBA
from dosa.data import make_imbalanced_multilabel
from dosa.losses import LossConfig, make_margin
from dosa.model import DosaConfig, init_weights
from dosa.training import TrainConfig, train_model


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(batch, timesteps=10, width=64, labels=12):
    rng = np.random.default_rng(0)
    current = rng.normal(0.5, 1.0, (timesteps, batch, width))
    h, s, vp = kernels.plif_forward(current, 0.5)
    grad = rng.normal(size=s.shape)
    drive = rng.normal(size=(timesteps, batch, labels))
    th, _ = kernels.accumulate_tanh(drive)
    gout = rng.normal(size=(batch, labels))
    x = rng.random((timesteps * batch, width))
    w = rng.normal(size=(width, labels))
    return {
        "plif_forward": lambda: kernels.plif_forward(current, 0.5),
        "plif_backward": lambda: kernels.plif_backward(grad, current, h, s, vp, 0.5),
        "accumulate_tanh": lambda: kernels.accumulate_tanh(drive),
        "accumulate_tanh_backward": lambda: kernels.accumulate_tanh_backward(gout, th),
        "column_stable_matmul": lambda: kernels.column_stable_matmul(x, w),
    }


def one_epoch():
    ds = make_imbalanced_multilabel(n=256, m=20, positive_rates=(0.1, 0.3, 0.5, 0.7), seed=1)
    model = init_weights(DosaConfig(input_dim=20, num_labels=4, hidden_layers=(20, 20)),
                         np.random.default_rng(0))
    margin = make_margin(4, trainable=True)
    log = train_model(model, margin, ds.features, ds.labels, LossConfig("fmm"),
                      TrainConfig(epochs=1, batch_size=32), np.random.default_rng(1))
    return log.epoch_loss[-1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=256)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    if not HAVE_NUMBA:
        print("numba not importable; timing the numpy backend only")

    results = {}
    losses = {}
    for name in backends:
        prev = kernels.set_backend(name)
        try:
            for case, fn in kernel_cases(args.batch).items():
                results[(case, name)] = best_of(fn, args.repeat)
            results[("train_epoch", name)] = best_of(one_epoch, max(1, args.repeat // 10))
            losses[name] = one_epoch()
        finally:
            kernels.set_backend(prev)

    cases = sorted({c for c, _ in results}, key=list(kernel_cases(1)).__add__(["train_epoch"]).index)
    print(f"{'case':28s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for case in cases:
        row = [results[(case, b)] for b in backends]
        line = f"{case:28s}" + "".join(f"{t * 1e3:10.3f}ms" for t in row)
        if len(row) > 1:
            line += f"{row[0] / row[1]:11.1f}x"
        print(line)
    if len(losses) > 1:
        diff = abs(losses["numpy"] - losses["numba"])
        print(f"epoch loss numpy={losses['numpy']:.12g} numba={losses['numba']:.12g} |diff|={diff:.2e}")


if __name__ == "__main__":
    main()
