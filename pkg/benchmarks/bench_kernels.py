"""Benchmark the compiled convolution kernels against the numpy fallback.

Runs every kernel entry point on shapes representative of the four
architectures' hot layers, times both backends, and cross-checks their
outputs. Usage:

    python3 benchmarks/bench_kernels.py [--repeats N] [--dtype float32|float64]

The compiled backend is skipped with a note when the extension is not
importable; timings are best-of-N wall clock on one thread.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from eegbench.tensornn import kernels


def _cases(dtype):
    rng = np.random.default_rng(0)

    def arr(*shape):
        return rng.normal(0.0, 1.0, shape).astype(dtype)

    x_stem = arr(32, 1, 22, 500)
    w_stem = arr(25, 1, 1, 10)
    b_stem = arr(25)
    y_stem = arr(32, 25, 22, 491)

    x_spat = arr(32, 25, 22, 491)
    w_spat = arr(25, 25, 22, 1)
    y_spat = arr(32, 25, 1, 491)

    x_deep = arr(32, 50, 1, 160)
    w_deep = arr(100, 50, 1, 10)
    b_deep = arr(100)
    y_deep = arr(32, 100, 1, 151)

    x_dw = arr(32, 8, 22, 124)
    w_dw = arr(8, 2, 22, 1)
    y_dw = arr(32, 16, 1, 124)

    return [
        ("temporal conv fwd", "conv2d_forward",
         (x_stem, w_stem, b_stem, (1, 1))),
        ("temporal conv bwd input", "conv2d_backward_input",
         (y_stem, w_stem, x_stem.shape, (1, 1))),
        ("temporal conv bwd weights", "conv2d_backward_weights",
         (x_stem, y_stem, (1, 10), (1, 1))),
        ("spatial conv fwd", "conv2d_forward",
         (x_spat, w_spat, None, (1, 1))),
        ("spatial conv bwd weights", "conv2d_backward_weights",
         (x_spat, y_spat, (22, 1), (1, 1))),
        ("deep block conv fwd", "conv2d_forward",
         (x_deep, w_deep, b_deep, (1, 1))),
        ("deep block conv bwd input", "conv2d_backward_input",
         (y_deep, w_deep, x_deep.shape, (1, 1))),
        ("depthwise fwd", "depthwise_forward",
         (x_dw, w_dw, (1, 1))),
        ("depthwise bwd input", "depthwise_backward_input",
         (y_dw, w_dw, x_dw.shape, (1, 1))),
        ("depthwise bwd weights", "depthwise_backward_weights",
         (x_dw, y_dw, (22, 1), 2, (1, 1))),
    ]


def _best_time(fn, args, repeats):
    fn(*args)  # warm-up
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - started)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    args = parser.parse_args(argv)
    dtype = np.dtype(args.dtype)

    backends = kernels.available_backends()
    print(f"backends: {', '.join(sorted(backends))} (active: {kernels.backend_name()})")
    if "compiled" not in backends:
        print("note: compiled extension not importable; timing the numpy "
              "backend only")

    # Accumulation noise scales with the norm of the reduced terms, not
    # with each output element, so outputs are compared norm-relative.
    rtol = 1e-4 if dtype == np.float32 else 1e-10
    header = f"{'case':28s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))

    disagreements = 0
    for label, fn_name, fn_args in _cases(dtype):
        times = {}
        outputs = {}
        for name, module in sorted(backends.items()):
            fn = getattr(module, fn_name)
            times[name] = _best_time(fn, fn_args, args.repeats)
            outputs[name] = fn(*fn_args)
        py_ms = times["python"] * 1e3
        if "compiled" in times:
            ext_ms = times["compiled"] * 1e3
            speedup = times["python"] / times["compiled"]
            row = f"{label:28s} {py_ms:8.2f}ms {ext_ms:8.2f}ms {speedup:7.2f}x"
            diff = np.abs(outputs["python"] - outputs["compiled"]).max()
            scale = max(np.abs(outputs["python"]).max(), 1.0)
            if diff > rtol * scale:
                row += f"  DISAGREE (norm-relative diff {diff / scale:.3e})"
                disagreements += 1
        else:
            row = f"{label:28s} {py_ms:8.2f}ms {'-':>10s} {'-':>8s}"
        print(row)

    if disagreements:
        print(f"\n{disagreements} case(s) disagree between backends")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
