"""Compare the compiled trial kernel against the pure-NumPy fallback.

Runs one trial per method on an additive-noise quadratic with both
backends, checks the outputs are bitwise identical, and prints a
steps-per-second table. Usage:

    python benchmarks/bench_kernels.py [--max-k N] [--trials N] [--dim N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from polygrad._kernels import run_quadratic_trial
from polygrad.core import ConfigError, RngStream, log_checkpoints
from polygrad.objectives import initial_point, make_quadratic
from polygrad.schedules import DecaySchedule

METHODS = [
    ("accel", {"p": 20.0}),
    ("sg", {}),
    ("gradavg", {}),
    ("iteravg", {}),
    ("sgm", {"alpha": 0.05, "beta": 0.9}),
]


def compiled_available(problem, x0, schedule) -> bool:
    try:
        run_quadratic_trial(
            problem, x0, "sg", {}, schedule, 1,
            np.array([1]), RngStream(0, 0).generator(),
            force_backend="compiled",
        )
    except ConfigError:
        return False
    return True


def best_time(problem, x0, method, params, schedule, max_k, cps, backend, reps):
    """Fastest wall time over reps; outputs from the first rep."""
    fastest = float("inf")
    outputs = None
    for rep in range(reps):
        rng = RngStream(0, 0).generator()
        t0 = time.perf_counter()
        X, M = run_quadratic_trial(
            problem, x0, method, params, schedule, max_k, cps, rng,
            force_backend=backend,
        )
        fastest = min(fastest, time.perf_counter() - t0)
        if rep == 0:
            outputs = (X, M)
    return fastest, outputs


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--max-k", type=int, default=100_000)
    parser.add_argument("--trials", type=int, default=3,
                        help="repetitions per timing; the best is reported")
    parser.add_argument("--dim", type=int, default=20)
    args = parser.parse_args()

    problem = make_quadratic(dim=args.dim, l=0.5, L=1.0, data_seed=3, sigma=0.1)
    x0 = initial_point(problem, data_seed=3, radius=1.0)
    schedule = DecaySchedule.make(20.0, problem.constants)
    cps = log_checkpoints(args.max_k, 20)

    have_compiled = compiled_available(problem, x0, schedule)
    if not have_compiled:
        print("compiled extension not built; timing the pure backend only")

    print(f"quadratic dim={args.dim}, max_k={args.max_k}, "
          f"best of {args.trials} reps")
    header = f"{'method':<10} {'pure steps/s':>14} {'compiled steps/s':>18} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for method, params in METHODS:
        t_pure, out_pure = best_time(
            problem, x0, method, params, schedule,
            args.max_k, cps, "pure", args.trials,
        )
        row = f"{method:<10} {args.max_k / t_pure:>14.3g}"
        if have_compiled:
            t_comp, out_comp = best_time(
                problem, x0, method, params, schedule,
                args.max_k, cps, "compiled", args.trials,
            )
            if not (np.array_equal(out_pure[0], out_comp[0])
                    and np.array_equal(out_pure[1], out_comp[1])):
                print(f"{method}: backends disagree bitwise; timings are meaningless")
                return 1
            row += f" {args.max_k / t_comp:>18.3g} {t_pure / t_comp:>8.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
