#!/usr/bin/env python3
"""Compare the compiled convolution core against the NumPy fallback.

Times the four gate-convolution shapes of the default two-layer network plus
a full training step (forward rollout, loss, backward) on synthetic data,
once per backend. Run from anywhere:

    python benchmarks/kernel_benchmark.py [--grid 9] [--frames 50]
"""

import argparse
import time

import numpy as np


def time_fn(fn, *args, min_time=0.3):
    fn(*args)
    n, elapsed = 0, 0.0
    while elapsed < min_time:
        tic = time.perf_counter()
        fn(*args)
        elapsed += time.perf_counter() - tic
        n += 1
    return elapsed / n


def conv_cases(grid):
    rng = np.random.default_rng(0)
    shapes = [("layer1 input (5->64)", (5, grid, grid), (64, 5, 3, 3)),
              ("layer1 hidden (16->64)", (16, grid, grid), (64, 16, 3, 3)),
              ("layer2 input (16->128)", (16, grid, grid), (128, 16, 3, 3)),
              ("layer2 hidden (32->128)", (32, grid, grid), (128, 32, 3, 3))]
    for label, xs, ws in shapes:
        yield (label, rng.standard_normal(xs), rng.standard_normal(ws),
               rng.standard_normal(ws[0]))


def bench_convs(backend, grid):
    rows = []
    for label, x, w, b in conv_cases(grid):
        fwd = time_fn(backend.conv2d_same_fwd, x, w, b)
        gy = backend.conv2d_same_fwd(x, w, b)
        bwd = time_fn(backend.conv2d_same_bwd, x, w, gy)
        rows.append((label, fwd, bwd))
    return rows


def bench_training_step(grid, frames, seed=0):
    """One forward+backward scheduled-sampling pass over a synthetic sim."""
    from deepfea import autodiff as ad
    from deepfea.autodiff import Tape, Tensor
    from deepfea.convlstm import FexmConfig
    from deepfea.network import NepArchitecture, NepModel

    rng = np.random.default_rng(seed)
    arch = NepArchitecture((grid, grid), FexmConfig((16, 32), 3), k_n=2)
    model = NepModel.initialize(arch, rng)
    xs = [rng.standard_normal((5, grid, grid)) for _ in range(frames)]
    tgt_n = [rng.uniform(-0.9, 0.9, (2, grid, grid)) for _ in range(frames)]
    tgt_e = [rng.uniform(-0.9, 0.9, (2, grid - 1, grid - 1))
             for _ in range(frames)]

    def step():
        model.zero_grads()
        with Tape() as tape:
            states = model.init_state()
            loss = None
            for x, tn, te in zip(xs, tgt_n, tgt_e):
                y_n, y_e, states = model.forward(Tensor(x, check=False), states)
                term = ad.add(ad.sq_diff_sum(y_n, Tensor(tn, check=False)),
                              ad.sq_diff_sum(y_e, Tensor(te, check=False)))
                loss = term if loss is None else ad.add(loss, term)
            tape.backward(loss)

    return time_fn(step, min_time=1.0)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--grid", type=int, default=9)
    parser.add_argument("--frames", type=int, default=50)
    args = parser.parse_args()

    import os
    results = {}
    for name in ("python", "cython"):
        os.environ["DEEPFEA_BACKEND"] = name
        # force re-selection in a fresh interpreter state
        import importlib

        import deepfea.kernels as kernels
        importlib.reload(kernels)
        try:
            backend = kernels.load_backend(name)
        except ImportError:
            print(f"[{name}] not available, skipping")
            continue
        from deepfea._threads import blas_threads
        with blas_threads(1):
            conv_rows = bench_convs(backend, args.grid)
            step_time = bench_training_step(args.grid, args.frames)
        results[name] = (conv_rows, step_time)
        print(f"\n[{name}] grid {args.grid}x{args.grid}")
        for label, fwd, bwd in conv_rows:
            print(f"  {label:26s} fwd {fwd * 1e6:8.1f} us   bwd {bwd * 1e6:8.1f} us")
        print(f"  full {args.frames}-frame training step: {step_time * 1e3:.1f} ms")

    if len(results) == 2:
        py_step = results["python"][1]
        cy_step = results["cython"][1]
        print(f"\ncompiled-core speedup on the training step: "
              f"{py_step / cy_step:.2f}x")


if __name__ == "__main__":
    main()
