"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs under both backends; results are checked
for agreement before timings are reported.
"""

import argparse
import time

import numpy as np

from stencilforge import kernels


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    W = H = 256
    seeds = rng.random((13900, 2)) * [W, H]
    labels = rng.integers(0, 13900, W * H)
    weights = rng.random(W * H)
    dots = rng.random((2000, 2)) * [W, H]
    layer = rng.random((H, W))
    return {
        "nearest_seed 13.9K seeds 256^2": lambda k: k.nearest_seed(seeds, W, H),
        "centroid_sums 256^2": lambda k: k.centroid_sums(labels, weights, W, H, 13900),
        "spray 2K dots sigma=5px": lambda k: k.spray_log_accumulate(dots, 5.0, 0.8, 20.0, W, H),
        "neighbor_diff_sum 256^2": lambda k: k.neighbor_diff_sum(layer),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = kernels.available_backends()
    if "cython" not in names:
        print("compiled kernels not built; only the numpy fallback is available")
    backends = {n: kernels.get_backend(n) for n in names}
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases(rng).items():
        outs = {n: fn(b) for n, b in backends.items()}
        if len(names) > 1:
            for a, b in zip(outs["cython"], outs["python"]):
                np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        t = {n: _best(lambda b=b: fn(b), args.repeat) for n, b in backends.items()}
        row = f"{label:34s}" + "".join(f"{t[n] * 1e3:10.2f}ms" for n in names)
        if len(names) > 1:
            row += f"{t['python'] / t['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
