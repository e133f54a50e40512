"""Time the compiled integration kernel against the pure-numpy fallback.

Each workload integrates the same batch of random initial conditions
with both backends and checks that outcomes, step counts and final
states agree before reporting timings.  Run from the repository root:

    python3 benchmarks/bench_kernels.py --trials 20 --repeats 3
"""

import argparse
import time

import numpy as np

from gradsync import IntegratorSettings, ManifoldKind, cycle, sample_initial, trial_rng
from gradsync.kernels import available_backends, get_backend

WORKLOADS = [
    # label, manifold, agents, factor2 (orthogonal-group scaling), seed
    ("circle  N=10 cycle", "circle", 10, False, 11),
    ("sphere:3 N=5 cycle", "sphere:3", 5, False, 12),
    ("stiefel:2:4 N=5 cycle", "stiefel:2:4", 5, False, 13),
    ("so:4 N=5 cycle (x2 field)", "so:4", 5, True, 14),
]


def run_batch(backend, inits, ei, ej, w, settings, factor2):
    results = []
    for x0 in inits:
        x, code, steps = backend.integrate_orthonormal(
            x0,
            ei,
            ej,
            w,
            settings.step,
            settings.n_steps,
            settings.consensus_epsilon,
            settings.stall_tolerance,
            factor2,
        )
        results.append((x, int(code), int(steps)))
    return results


def time_batch(backend, inits, ei, ej, w, settings, factor2, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        run_batch(backend, inits, ei, ej, w, settings, factor2)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20, help="initial conditions per workload")
    ap.add_argument("--repeats", type=int, default=3, help="timing repeats, best is kept")
    args = ap.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled kernel not built; timing the pure backend only")
    settings = IntegratorSettings()
    print(f"{'workload':<28}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")

    for label, spec, n_agents, factor2, seed in WORKLOADS:
        kind = ManifoldKind.parse(spec)
        graph = cycle(n_agents)
        ei, ej, w = graph.arrays
        inits = [
            sample_initial(kind, n_agents, trial_rng(seed, k)) for k in range(args.trials)
        ]

        outputs = {}
        times = {}
        for name in backends:
            backend = get_backend(name)
            outputs[name] = run_batch(backend, inits, ei, ej, w, settings, factor2)
            times[name] = time_batch(backend, inits, ei, ej, w, settings, factor2, args.repeats)

        if len(backends) == 2:
            for (xa, ca, sa), (xb, cb, sb) in zip(outputs["compiled"], outputs["pure"]):
                assert ca == cb and sa == sb, f"backend disagreement on {label}"
                assert np.max(np.abs(xa - xb)) <= 1e-9, f"state mismatch on {label}"
            speedup = f"{times['pure'] / times['compiled']:>9.1f}x"
        else:
            speedup = f"{'n/a':>10}"
        row = "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends)
        print(f"{label:<28}{row}{speedup}")


if __name__ == "__main__":
    main()
