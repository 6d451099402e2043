"""Compare the compiled kernels against the pure-numpy fallback.

Times the two hot batch kernels on training-shaped inputs and prints a
small table. Run from an installed checkout:

    python benchmarks/bench_kernels.py [--batch 256] [--repeats 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from trajdistill._kernels import _pure

try:
    from trajdistill._kernels import _core
except ImportError:
    _core = None


def make_inputs(rng, batch, modes, horizon, targets):
    logits = rng.normal(size=(batch, modes))
    means = rng.normal(size=(batch, modes, horizon, 2)) * 5.0
    log_stds = rng.normal(size=(batch, modes, horizon, 2)) * 0.2
    t_means = rng.normal(size=(batch, targets, horizon, 2)) * 5.0
    t_weights = rng.dirichlet(np.ones(targets), size=batch)
    gt = rng.normal(size=(batch, horizon, 2)) * 5.0
    return logits, means, log_stds, t_means, t_weights, gt


def bench(fn, args, repeats):
    fn(*args)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=256)
    parser.add_argument("--modes", type=int, default=8)
    parser.add_argument("--horizon", type=int, default=16)
    parser.add_argument("--targets", type=int, default=6)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    logits, means, log_stds, t_means, t_weights, gt = make_inputs(
        rng, args.batch, args.modes, args.horizon, args.targets
    )
    cases = [
        ("weighted_nll_grad", (logits, means, log_stds, t_means, t_weights, 1.0)),
        ("gt_nll_grad", (logits, means, log_stds, gt, 1.0)),
    ]
    print(
        f"batch={args.batch} modes={args.modes} horizon={args.horizon} "
        f"targets={args.targets} (best of {args.repeats})"
    )
    header = f"{'kernel':<22}{'python':>12}{'cython':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, case_args in cases:
        py = bench(getattr(_pure, "batch_" + name), case_args, args.repeats)
        if _core is None:
            print(f"{name:<22}{py * 1e3:>10.3f}ms{'n/a':>12}{'n/a':>10}")
            continue
        cy = bench(getattr(_core, "batch_" + name), case_args, args.repeats)
        print(f"{name:<22}{py * 1e3:>10.3f}ms{cy * 1e3:>10.3f}ms{py / cy:>9.1f}x")
    if _core is None:
        print("compiled backend not available; showing fallback only")


if __name__ == "__main__":
    main()
