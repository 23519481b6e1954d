"""Time the compiled FIFO kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py --packets 200000 --repeat 5
"""

import argparse
import time

import numpy as np

from sdiotsim.kernels import _pure

try:
    from sdiotsim.kernels import _fifo
except ImportError:
    _fifo = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--packets", type=int, default=200_000)
    ap.add_argument("--rho", type=float, default=0.8)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    mu = 1000.0
    arrivals = np.cumsum(rng.exponential(1 / (args.rho * mu), args.packets))
    works = rng.exponential(1 / mu, args.packets)
    window = 1.0
    n_windows = int(arrivals[-1] / window) + 1

    backends = {"python": _pure}
    if _fifo is not None:
        backends["cython"] = _fifo
    else:
        print("compiled kernels not built; timing the fallback only")

    results = {}
    for name, mod in backends.items():
        s, c, _ = mod.fifo_serve(arrivals, works, 0.0)
        t_serve = best_of(lambda: mod.fifo_serve(arrivals, works, 0.0), args.repeat)
        t_busy = best_of(lambda: mod.window_busy(s, c, 0.0, window, n_windows), args.repeat)
        results[name] = (t_serve, t_busy, s, c)
        print(f"{name:7s} fifo_serve {t_serve * 1e3:9.2f} ms   window_busy {t_busy * 1e3:9.2f} ms"
              f"   ({args.packets} packets)")

    if "cython" in results:
        p, k = results["python"], results["cython"]
        same = np.array_equal(p[2], k[2]) and np.array_equal(p[3], k[3])
        print(f"speedup  fifo_serve {p[0] / k[0]:7.1f}x   window_busy {p[1] / k[1]:7.1f}x   identical={same}")


if __name__ == "__main__":
    main()
