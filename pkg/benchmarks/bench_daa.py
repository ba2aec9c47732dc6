"""Compare the numba kernels with the plain-numpy fallback.

    python benchmarks/bench_daa.py [--students 200] [--colleges 30] [--repeat 50]

The script times itself once per backend, running the fallback in a child
process with COLLEGEDA_DISABLE_NUMBA=1, and prints one line per workload.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def measure(n_students, n_colleges, repeat, seed):
    from collegeda import backend
    from collegeda.daa import KernelInputs, Variant
    from collegeda.manipulation import find_manipulation_college_proposing, find_manipulation_student_proposing
    from collegeda.model import Market
    from collegeda.prefgen import CapacitySpec, GeneratorSpec, gen_capacities, gen_profile

    profile = gen_profile(
        n_students, n_colleges, GeneratorSpec.impartial(seed, "students"), GeneratorSpec.impartial(seed, "colleges")
    )
    market = Market(gen_capacities(n_students, n_colleges, CapacitySpec("method2", seed)), profile)

    def best_of(fn, k):
        fn()  # warm-up, includes compilation
        times = []
        for _ in range(k):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times), float(np.median(times))

    out = {"backend": backend()}
    for variant in Variant:
        inputs = KernelInputs.build(market, variant)
        out[f"daa-{variant.short}"] = best_of(inputs.run, repeat)
    out["finder-student"] = best_of(
        lambda: [find_manipulation_student_proposing(market, c) for c in range(n_colleges)], max(1, repeat // 10)
    )
    out["finder-college"] = best_of(
        lambda: [find_manipulation_college_proposing(market, c) for c in range(n_colleges)], max(1, repeat // 10)
    )
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--students", type=int, default=200)
    ap.add_argument("--colleges", type=int, default=30)
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.students, args.colleges, args.repeat, args.seed)))
        return

    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, COLLEGEDA_DISABLE_NUMBA=disable)
        cmd = [sys.executable, __file__, "--child", "--students", str(args.students),
               "--colleges", str(args.colleges), "--repeat", str(args.repeat), "--seed", str(args.seed)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))
    fast, slow = results
    print(f"market {args.students} students x {args.colleges} colleges, best of {args.repeat}")
    print(f"{'workload':<16} {fast['backend']:>12} {slow['backend']:>12} {'speed-up':>9}")
    for key in fast:
        if key == "backend":
            continue
        a, b = fast[key][0], slow[key][0]
        print(f"{key:<16} {a * 1e3:>10.3f}ms {b * 1e3:>10.3f}ms {b / a:>8.1f}x")


if __name__ == "__main__":
    main()
