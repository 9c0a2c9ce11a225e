"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Reports per-call time for the entropy solve at several dimensions and for
the batched ball-multiplier solve, plus a full single-layer learner run under each
backend.
"""

import argparse
import time

import numpy as np

from msmwc import kernels
from msmwc.learner import MsMwC


def _time(fn, repeat):
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def entropy_case(d, rng):
    a = rng.dirichlet(np.ones(d)) * 0.9 + 0.1 / d
    x = rng.uniform(-1, 1, d)
    eta = rng.uniform(1e-3, 1 / 64, d)
    b = np.full(d, 1.0 / (4 * d))
    return a, x, eta, b


def ball_case(k, d, rng):
    evals = rng.uniform(0.5, 5.0, (k, d))
    coef = rng.standard_normal((k, d)) * 3
    return evals, coef, np.ones(k)


def learner_run(d=8, T=2000, seed=0):
    rng = np.random.default_rng(seed)
    L = rng.uniform(-1, 1, (T, d))
    lr = MsMwC.thm1(d, T)
    for t in range(T):
        lr.begin_round()
        lr.end_round(L[t])


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=2000)
    args = p.parse_args()
    rng = np.random.default_rng(0)
    backends = kernels.available()
    print(f"backends: {backends}")
    rows = []
    for d in (2, 8, 64, 512):
        case = entropy_case(d, rng)
        rows.append((f"entropy_solve d={d}", {b: _bench(b, lambda: kernels.entropy_solve(*case), args.repeat) for b in backends}))
    for k in (16, 256):
        case = ball_case(k, 8, rng)
        rows.append((f"ball_multipliers k={k} d=8", {b: _bench(b, lambda: kernels.ball_multipliers(*case), args.repeat // 10) for b in backends}))
    rows.append(("learner run d=8 T=2000", {b: _bench(b, learner_run, 1) for b in backends}))
    print(f"{'case':32s}" + "".join(f"{b:>14s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, res in rows:
        line = f"{name:32s}" + "".join(f"{res[b] * 1e6:12.1f}us" for b in backends)
        if len(backends) == 2:
            line += f"{res['python'] / res['compiled']:11.1f}x"
        print(line)


def _bench(backend, fn, repeat):
    prev = kernels.use(backend)
    try:
        return _time(fn, max(1, repeat))
    finally:
        kernels.use(prev)


if __name__ == "__main__":
    main()
