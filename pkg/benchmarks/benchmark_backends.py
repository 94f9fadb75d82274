#!/usr/bin/env python3
"""Throughput comparison: compiled stepping kernels vs the NumPy backend.

Both backends consume the same Philox streams and produce matching
trajectories; this script measures steps/second on ensemble evolution
and on a single long chain, per builtin model and scheme.

    python benchmarks/benchmark_backends.py --traj 100000 --steps 128
"""

import argparse
import time

import numpy as np

from metrodiff import backend, get_model
from metrodiff.integrator import ensemble_final_positions, simulate_trajectory
from metrodiff.rng import RngStream

CASES = [
    ("arcsine", "mh", 0.5),
    ("sine-diffusion", "mh", 0.0),
    ("gbm", "mh", 1.0),
    ("piecewise", "mh", 0.0),
    ("sine-diffusion", "em", 0.0),
]


def time_call(fn):
    t0 = time.perf_counter()
    result = fn()
    return time.perf_counter() - t0, result


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--traj", type=int, default=100000,
                        help="trajectories per ensemble benchmark")
    parser.add_argument("--steps", type=int, default=128,
                        help="steps per trajectory")
    parser.add_argument("--chain-steps", type=int, default=500000,
                        help="steps for the single-chain benchmark")
    parser.add_argument("--h", type=float, default=2.0 ** -7)
    parser.add_argument("--seed", type=int, default=12345)
    args = parser.parse_args()

    names = ["python"] + (["compiled"] if backend.HAVE_COMPILED else [])
    if not backend.HAVE_COMPILED:
        print("note: compiled extension not built; benchmarking python only")

    print(f"ensembles: {args.traj} trajectories x {args.steps} steps")
    header = f"{'model':16s} {'scheme':6s} " + \
        " ".join(f"{n + ' Msteps/s':>18s}" for n in names) + "   speedup"
    print(header)
    total_steps = args.traj * args.steps
    for label, scheme, x0 in CASES:
        model = get_model(label)
        rates = {}
        final = {}
        for name in names:
            backend.set_backend(name)
            dt, pos = time_call(lambda: ensemble_final_positions(
                model, scheme, x0, args.h, args.steps, args.traj, args.seed))
            rates[name] = total_steps / dt / 1e6
            final[name] = pos
        if len(names) == 2:
            np.testing.assert_allclose(final["compiled"], final["python"],
                                       rtol=1e-9, atol=1e-12)
            speedup = f"{rates['compiled'] / rates['python']:8.1f}x"
        else:
            speedup = "       -"
        cols = " ".join(f"{rates[n]:18.2f}" for n in names)
        print(f"{label:16s} {scheme:6s} {cols} {speedup}")

    print(f"\nsingle chain: {args.chain_steps} steps (arcsine, mh, h={args.h:g})")
    model = get_model("arcsine")
    for name in names:
        backend.set_backend(name)
        dt, _ = time_call(lambda: simulate_trajectory(
            model, "mh", 0.5, args.h, args.chain_steps,
            RngStream(args.seed, 0)))
        print(f"{name:10s} {args.chain_steps / dt / 1e6:10.2f} Msteps/s")
    backend.set_backend("compiled" if backend.HAVE_COMPILED else "python")


if __name__ == "__main__":
    main()
