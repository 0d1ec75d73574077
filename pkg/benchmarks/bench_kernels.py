"""Time the compiled and pure-numpy L-BFGS kernels side by side.

    python benchmarks/bench_kernels.py [--dims 2 10 129 1000] [--memory 5] [--repeat 2000]

Also times a short HASGLD-SA chain on the MLP target under each setting of
HASGLD_DISABLE_NUMBA (in a subprocess, since the flag is read at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hasgld import _kernels
from hasgld.lbfgs import LbfgsMemory, build_pair

CHAIN_SNIPPET = """
import time
from hasgld.harness import bundled_config, build_target, load_config
from hasgld.samplers import SamplerConfig, run_chain
cfg = load_config(bundled_config("mlp"))
sc = cfg.sampler_config("hasgld_sa", cfg.step_sizes[0], 0)
sc = SamplerConfig.from_dict({**sc.to_dict(), "iterations": 1000, "burn_in": 500, "pruning": []})
target = build_target(cfg)
run_chain(SamplerConfig.from_dict({**sc.to_dict(), "iterations": 2, "burn_in": 1}), target)  # warm up / compile
t0 = time.perf_counter()
run_chain(sc, target)
print(time.perf_counter() - t0)
"""


def filled_memory(d, M, seed=0):
    rng = np.random.default_rng(seed)
    mem = LbfgsMemory(d, M)
    for _ in range(M):
        s = rng.standard_normal(d)
        mem.push(build_pair(s, s * rng.uniform(0.5, 4.0, d), 0.25, 0.1))
    return mem


def time_kernels(d, M, repeat):
    mem = filled_memory(d, M)
    ss, yy, n = mem.arrays
    gam = mem.gamma_current
    g = np.random.default_rng(1).standard_normal(d)
    calls = {
        "two_loop": lambda K: K.two_loop(ss, yy, n, gam, g),
        "sqrt_apply": lambda K: K.sqrt_apply(ss, yy, n, gam, g),
        "dense_recursion": lambda K: K.dense_recursion(ss, yy, n, gam),
    }
    rows = []
    for name, call in calls.items():
        reps = max(1, repeat // 20) if name == "dense_recursion" and d > 200 else repeat
        py = min(timeit.repeat(lambda: call(_kernels.PY), number=reps, repeat=3)) / reps
        if _kernels.JIT is None:
            rows.append((name, d, py, None))
            continue
        call(_kernels.JIT)  # compile outside the timing
        jit = min(timeit.repeat(lambda: call(_kernels.JIT), number=reps, repeat=3)) / reps
        rows.append((name, d, py, jit))
    return rows


def time_chain(disable):
    env = dict(os.environ, HASGLD_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", CHAIN_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dims", type=int, nargs="+", default=[2, 10, 129, 1000])
    p.add_argument("--memory", type=int, default=5)
    p.add_argument("--repeat", type=int, default=2000)
    p.add_argument("--no-chain", action="store_true", help="skip the end-to-end chain timing")
    args = p.parse_args(argv)

    print(f"numba compiled kernels available: {_kernels.JIT is not None}")
    print(f"{'kernel':<16} {'d':>5} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>8}")
    for d in args.dims:
        for name, dd, py, jit in time_kernels(d, args.memory, args.repeat):
            if jit is None:
                print(f"{name:<16} {dd:>5} {py * 1e6:>12.2f} {'-':>12} {'-':>8}")
            else:
                print(f"{name:<16} {dd:>5} {py * 1e6:>12.2f} {jit * 1e6:>12.2f} {py / jit:>7.1f}x")
    if not args.no_chain:
        py, jit = time_chain(True), time_chain(False)
        print(f"\nMLP chain, 1000 HASGLD-SA steps: numpy {py:.2f}s, numba {jit:.2f}s ({py / jit:.1f}x)")


if __name__ == "__main__":
    main()
