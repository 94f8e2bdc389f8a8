"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--frames 3600] [--repeat 3]

Each case runs on both backends from the same seed, checks the outputs are
identical and reports the best wall time of ``--repeat`` runs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from urbanlod import kernels
from urbanlod.microsim import MicroScenario, simulate
from urbanlod.rng import derive_rng


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def micro_case(count, frames, distancing, backend):
    s = MicroScenario(agent_count=count, duration=frames / 30.0, social_distancing_enabled=distancing)

    def go():
        r = simulate(s, derive_rng(1, "bench", count), backend=backend)
        return r.stats, r.positions.tobytes()

    return go


def claim_case(clouds, side_cells, backend):
    k = kernels.get_backend(backend)
    rng = np.random.default_rng(3)
    centers = rng.random((clouds, 2)) * side_cells * 4.0

    def go():
        own = np.full((side_cells, side_cells), -1, dtype=np.int32)
        total = 0
        for cid, (x, y) in enumerate(centers):
            total += len(k.macro_claim(own, 0.0, 0.0, 4.0, float(x), float(y), 35.7, 63, cid))
        return total, own.tobytes()

    return go


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=3600)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    try:
        kernels.get_backend("cython")
    except ImportError:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1

    cases = []
    for count in (2, 10, 20):
        for dist in (True, False):
            label = f"micro n={count:<2d} {'on ' if dist else 'off'} {args.frames} frames"
            cases.append((label, lambda b, c=count, d=dist: micro_case(c, args.frames, d, b)))
    for clouds in (14, 100):
        cases.append((f"macro claim {clouds} clouds 250x250", lambda b, n=clouds: claim_case(n, 250, b)))

    print(f"{'case':<36} {'python':>10} {'cython':>10} {'speedup':>8}  same")
    for label, make in cases:
        tp, outp = best_of(make("python"), args.repeat)
        tc, outc = best_of(make("cython"), args.repeat)
        print(f"{label:<36} {tp:>9.4f}s {tc:>9.4f}s {tp / tc:>7.1f}x  {outp == outc}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
