"""Time one trial per algorithm on each available kernel backend.

    python3 benchmarks/bench_kernels.py --horizon 20000 --repeat 3
"""
import argparse
import time

import numpy as np

from exp3lgc import _backend
from exp3lgc.config import parse_config
from exp3lgc.simulator import run_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="paper_fig2")
    ap.add_argument("--horizon", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = parse_config(args.config).with_overrides(horizon=args.horizon)
    backends = sorted(_backend.KERNELS)
    print(f"T={cfg.T}, best of {args.repeat}; backends: {', '.join(backends)}")
    print(f"{'algorithm':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for spec in cfg.algorithms:
        best = {}
        traces = {}
        for b in backends:
            times = []
            for _ in range(args.repeat):
                t = time.perf_counter()
                traces[b] = run_trial(cfg, 0, spec, backend=b, full=False)
                times.append(time.perf_counter() - t)
            best[b] = min(times)
        if len(backends) > 1:
            assert np.array_equal(traces["python"].actions, traces["cython"].actions)
        speed = best["python"] / best["cython"] if "cython" in best else float("nan")
        print(f"{spec.key:<22}" + "".join(f"{best[b]:>11.3f}s" for b in backends)
              + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
