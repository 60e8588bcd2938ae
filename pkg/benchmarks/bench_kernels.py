#!/usr/bin/env python3
"""Benchmark the compiled objective kernel against the numpy fallback.

Times the per-particle tail (softmax + loss + norm) for both backends and
the end-to-end swarm objective, across swarm sizes and pixel counts, then
runs one full attack per backend.  Also cross-checks that the two backends
agree to roundoff on every timed case.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import sys
import time

import numpy as np

from advswarm import classifier as clf
from advswarm import data as dat
from advswarm import kernels
from advswarm.attack import AttackSpec, generate_adversarial, score_images
from advswarm.kernels import _python
from advswarm.pso import SwarmConfig

try:
    from advswarm.kernels import _native
except ImportError:
    print("compiled kernel not available; build it with "
          "`pip install -e . --no-build-isolation`", file=sys.stderr)
    sys.exit(1)


def time_call(fn, *args, min_seconds=0.3):
    fn(*args)  # warm up
    start = time.perf_counter()
    calls = 0
    while time.perf_counter() - start < min_seconds:
        fn(*args)
        calls += 1
    return (time.perf_counter() - start) / calls


def bench_tails(quick):
    model = clf.make_mlp(64, 3, (64,), seed=5)
    packed = kernels.pack_model(model)
    rng = np.random.default_rng(0)
    base = rng.random(64)
    grid = [(200, 8), (200, 32), (200, 64), (1000, 32)]
    if not quick:
        grid += [(2000, 64), (500, 16)]

    print(f"{'Np':>6} {'m':>4} {'native':>10} {'python':>10} {'speedup':>8}  agreement")
    for n_particles, m in grid:
        coords = np.sort(rng.choice(64, m, replace=False)).astype(np.int64)
        positions = rng.uniform(-0.15, 0.15, (n_particles, m))
        logits = np.ascontiguousarray(
            kernels._batch_logits(packed, base, coords, positions))
        args = (logits, positions, kernels.LOSS_PERR, 1, -1, 0.75, 100.0, 1.0)
        native_vals = _native.objective_from_logits(*args)
        python_vals = _python.objective_from_logits(*args)
        gap = float(np.max(np.abs(native_vals - python_vals)))
        t_native = time_call(_native.objective_from_logits, *args)
        t_python = time_call(_python.objective_from_logits, *args)
        print(f"{n_particles:>6} {m:>4} {t_native * 1e6:>8.1f}us "
              f"{t_python * 1e6:>8.1f}us {t_python / t_native:>7.1f}x  {gap:.1e}")


def bench_move():
    rng = np.random.default_rng(0)
    print("\nswarm move (velocity + position update with clamps):")
    print(f"{'Np':>6} {'m':>4} {'native':>10} {'python':>10} {'speedup':>8}")
    for n_particles, m in [(200, 8), (200, 32), (200, 64), (1000, 32)]:
        pos = rng.uniform(-0.1, 0.1, (n_particles, m))
        vel = rng.normal(0, 0.02, (n_particles, m))
        pb = rng.uniform(-0.1, 0.1, (n_particles, m))
        gb = rng.uniform(-0.1, 0.1, m)
        r1, r2 = rng.random((n_particles, 1)), rng.random((n_particles, 1))
        vmax = np.full(m, 0.05)
        lo, hi = np.full(m, -0.1), np.full(m, 0.1)
        # clamps keep the mutated state bounded, so reusing buffers is fine
        args = (pb, gb, r1, r2, 0.6, 2.0, 2.0, vmax, lo, hi)
        t_native = time_call(_native.swarm_move, pos.copy(), vel.copy(), *args)
        t_python = time_call(_python.swarm_move, pos.copy(), vel.copy(), *args)
        print(f"{n_particles:>6} {m:>4} {t_native * 1e6:>8.1f}us "
              f"{t_python * 1e6:>8.1f}us {t_python / t_native:>7.1f}x")


def bench_attack():
    dataset = dat.synth_blobs(seed=0)
    train, val = dat.split(dataset, 0.2, seed=0)
    model = clf.train(train, hyper=clf.TrainConfig(seed=0), val=val)
    scores = [s for s in score_images(model, dataset) if s.correct]
    scores.sort(key=lambda s: -s.influence)
    target = scores[0]

    print("\nfull single-image attack (Np=200, T=500):")
    for backend, impl in (("native", _native), ("python", _python)):
        kernels._impl = impl
        spec = AttackSpec(y_target=target.y_target,
                          swarm=SwarmConfig(n_particles=200, max_iter=500, seed=0))
        start = time.perf_counter()
        result = generate_adversarial(model, dataset.images[target.index], spec)
        elapsed = time.perf_counter() - start
        print(f"  {backend:>6}: {elapsed * 1e3:7.1f} ms "
              f"(success={result.success}, {result.iterations} iterations)")
    kernels._impl = _native


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller grid")
    args = parser.parse_args()
    print(f"active backend: {kernels.BACKEND}\n")
    bench_tails(args.quick)
    bench_move()
    bench_attack()


if __name__ == "__main__":
    main()
