"""Compare the numba jitted convolution kernels against the numpy im2col path.

Run:  python3 benchmarks/bench_backends.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from subcnn.backend import _NumbaBackend, _NumpyBackend

CASES = [
    # (label, n, c_in, h, w, c_out, k)
    ("mnist-first", 64, 1, 28, 28, 64, 3),
    ("mnist-mid", 64, 128, 14, 14, 256, 3),
    ("cifar-mid", 64, 64, 16, 16, 128, 3),
    ("frontend-5x5", 64, 3, 224, 224, 3, 5),
]


def time_call(fn, *a, repeat=5):
    fn(*a)  # warm-up (includes JIT compile for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*a)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'case':<16}{'op':<14}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>9}")
    for label, n, ci, h, w, co, k in CASES:
        pad = k // 2
        x = rng.standard_normal((n, ci, h, w)).astype(np.float32)
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        wgt = rng.standard_normal((co, ci, k, k)).astype(np.float32) * 0.01
        b = rng.standard_normal(co).astype(np.float32)
        dy = rng.standard_normal((n, co, h, w)).astype(np.float32)

        ops = [
            ("forward", lambda be: be.conv2d_forward(xp, wgt, b, 1)),
            ("input_grad", lambda be: be.conv2d_input_grad(dy, wgt, xp.shape, 1)),
            ("weight_grad", lambda be: be.conv2d_weight_grad(xp, dy, k, 1)),
        ]
        for op_name, call in ops:
            t_np = time_call(call, _NumpyBackend, repeat=args.repeat)
            t_nb = time_call(call, _NumbaBackend, repeat=args.repeat)
            print(f"{label:<16}{op_name:<14}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}"
                  f"{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
