"""Compare the compiled and pure-Python detector kernels.

    python3 benchmarks/bench_detector.py [--samples N] [--repeat R]

Both backends are run on the same piecewise-constant signal and their
outputs are checked for bit-identity before timings are reported.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from telelat import kernels


def make_signal(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.int64) * 250_000
    x = np.repeat(rng.uniform(0, 0.2, n // 500 + 1), 500)[:n]
    return t, x


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    t, x = make_signal(args.samples)
    params = (0.1, 0.05, 2_500_000_000)
    backends = kernels.backends()
    results = {}
    for name, mod in backends.items():
        results[name] = mod.run_detector(t, x, *params, mod.initial_state())
        best = min(timeit.repeat(lambda: mod.run_detector(t, x, *params, mod.initial_state()),
                                 number=1, repeat=args.repeat))
        print(f"{name:>7}: {best * 1e3:9.2f} ms  ({args.samples / best / 1e6:7.1f} M samples/s)")
        results[name + "_time"] = best
    if "cython" in backends:
        py, cy = results["python"], results["cython"]
        same = py[0] == [tuple(e) for e in cy[0]] and tuple(py[1]) == tuple(cy[1])
        print(f"identical output: {same}")
        print(f"speed-up: {results['python_time'] / results['cython_time']:.1f}x")
    else:
        print("compiled extension not built; only the Python backend was timed")


if __name__ == "__main__":
    main()
