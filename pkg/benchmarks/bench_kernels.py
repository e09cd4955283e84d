"""Timing comparison of the compiled and pure kernel backends.

Runs each hot kernel on representative inputs under both implementations,
checks that the outputs agree, and prints a table with the best-of-5 wall
time per call and the resulting speedup.

Usage:
    python3 benchmarks/bench_kernels.py
"""

import math
import time

import numpy as np

from prefdiv.forest import expected_path_norm
from prefdiv.kernels import _pure

try:
    from prefdiv.kernels import _fast
except ImportError:
    _fast = None


def best_of(fn, repeats=5):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def normalized(rng, n, dim):
    x = rng.normal(0.0, 1.0, size=(n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def tree_inputs(rng, n_trees, psi, dim):
    subs = [np.ascontiguousarray(rng.normal(0.0, 1.0, size=(psi, dim))) for _ in range(n_trees)]
    u_dims = [rng.random(2 * psi) for _ in range(n_trees)]
    u_splits = [rng.random(2 * psi) for _ in range(n_trees)]
    height = math.ceil(math.log2(psi))
    return subs, u_dims, u_splits, height


def flatten_trees(parts):
    roots = np.empty(len(parts), dtype=np.int64)
    offset = 0
    for t, part in enumerate(parts):
        roots[t] = offset
        offset += len(part[0])
    features = np.concatenate([p[0] for p in parts])
    thresholds = np.concatenate([p[1] for p in parts])
    left = np.concatenate([p[2] for p in parts])
    right = np.concatenate([p[3] for p in parts])
    sizes = np.concatenate([p[4] for p in parts])
    for t, part in enumerate(parts):
        base = roots[t]
        seg = slice(base, base + len(part[0]))
        internal = features[seg] >= 0
        left[seg][internal] += base
        right[seg][internal] += base
    return features, thresholds, left, right, sizes, roots


def main():
    rng = np.random.default_rng(0)
    cases = []

    xn = normalized(rng, 400, 64)
    cases.append(
        (
            "pairwise_sim_sum",
            "n=400 dim=64",
            lambda mod: mod.pairwise_sim_sum(xn),
            lambda a, b: np.isclose(a, b, rtol=0.0, atol=1e-6),
        )
    )

    cases.append(
        (
            "greedy_pick",
            "n=400 dim=64 limit=50",
            lambda mod: mod.greedy_pick(xn, 0, 50),
            lambda a, b: np.array_equal(a, b),
        )
    )

    n_trees, psi, dim = 50, 256, 8
    subs, u_dims, u_splits, height = tree_inputs(rng, n_trees, psi, dim)

    def build_all(mod):
        return [
            mod.build_tree(subs[t], u_dims[t], u_splits[t], height)
            for t in range(n_trees)
        ]

    cases.append(
        (
            "build_tree",
            f"{n_trees} trees psi={psi} dim={dim}",
            build_all,
            lambda a, b: all(
                np.array_equal(x, y) for ta, tb in zip(a, b) for x, y in zip(ta, tb)
            ),
        )
    )

    parts = build_all(_pure)
    features, thresholds, left, right, sizes, roots = flatten_trees(parts)
    max_size = int(sizes.max())
    ctable = np.zeros(max_size + 1)
    for s in range(2, max_size + 1):
        ctable[s] = expected_path_norm(s)
    queries = np.ascontiguousarray(rng.normal(0.0, 1.0, size=(1000, dim)))
    cases.append(
        (
            "forest_path_lengths",
            f"{n_trees} trees, 1000 queries",
            lambda mod: mod.forest_path_lengths(
                features, thresholds, left, right, sizes, roots, queries, ctable
            ),
            lambda a, b: np.allclose(a, b, rtol=0.0, atol=1e-9),
        )
    )

    header = f"{'kernel':<22} {'size':<26} {'pure':>10} {'fast':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, size, call, agree in cases:
        pure_s = best_of(lambda: call(_pure))
        if _fast is None:
            print(f"{name:<22} {size:<26} {pure_s * 1e3:>8.2f}ms {'n/a':>10} {'n/a':>8}")
            continue
        fast_s = best_of(lambda: call(_fast))
        if not agree(call(_pure), call(_fast)):
            raise SystemExit(f"backend outputs disagree for {name}")
        print(
            f"{name:<22} {size:<26} {pure_s * 1e3:>8.2f}ms "
            f"{fast_s * 1e3:>8.2f}ms {pure_s / fast_s:>7.1f}x"
        )
    if _fast is None:
        print("\ncompiled backend not built; showing pure backend only")


if __name__ == "__main__":
    main()
