"""Isolation-forest outlier filtering over embedding vectors.

Extreme responses are removed from a pool before greedy selection: points
that isolate in few random splits score close to 1 and the top scores are
dropped. Trees are built from seeded subsamples (one derived seed per
tree), so scores are platform-stable and independent of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernels import build_tree, forest_path_lengths
from .seeding import derive_rng

__all__ = [
    "ForestConfig",
    "IsolationForest",
    "expected_path_norm",
    "score_from_mean_path",
    "build_forest",
    "anomaly_score",
    "filter_pool",
]

_EULER_GAMMA = 0.5772156649015329
_EXACT_HARMONIC_LIMIT = 10**6


@dataclass(frozen=True)
class ForestConfig:
    """Isolation forest hyperparameters (the subsample size is capped at
    the pool size when building)."""

    n_trees: int = 100
    subsample: int = 256
    contamination: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.subsample < 2:
            raise ValueError("subsample must be >= 2")
        if not 0.0 <= self.contamination < 0.5:
            raise ValueError("contamination must be in [0, 0.5)")


@lru_cache(maxsize=None)
def _harmonic(n: int) -> float:
    return math.fsum(1.0 / i for i in range(1, n + 1))


def expected_path_norm(n: int) -> float:
    """Average path length c(n) of an unsuccessful BST search over n points:
    2*H(n-1) - 2*(n-1)/n, with the harmonic number summed exactly for
    n <= 1e6 and approximated by ln(n-1) + gamma beyond."""
    if n < 2:
        raise ValueError(f"expected_path_norm needs n >= 2, got {n}")
    if n <= _EXACT_HARMONIC_LIMIT:
        h = _harmonic(n - 1)
    else:
        h = math.log(n - 1) + _EULER_GAMMA
    return 2.0 * h - 2.0 * (n - 1) / n


def score_from_mean_path(mean_path: float, psi: int) -> float:
    """Anomaly score 2^(-E[h]/c(psi)) in (0, 1)."""
    return float(2.0 ** (-mean_path / expected_path_norm(psi)))


@dataclass
class IsolationForest:
    """Flattened tree ensemble: features[i] >= 0 marks an internal node
    (threshold/left/right valid), features[i] == -1 a leaf whose terminal
    data size is sizes[i]."""

    features: np.ndarray
    thresholds: np.ndarray
    left: np.ndarray
    right: np.ndarray
    sizes: np.ndarray
    roots: np.ndarray
    psi: int
    dim: int

    def mean_path_lengths(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
        if x.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: forest dim {self.dim}, got {x.shape[1]}")
        max_size = int(self.sizes.max(initial=0))
        ctable = np.zeros(max_size + 1, dtype=np.float64)
        for s in range(2, max_size + 1):
            ctable[s] = expected_path_norm(s)
        return forest_path_lengths(
            self.features, self.thresholds, self.left, self.right,
            self.sizes, self.roots, x, ctable,
        )

    def scores(self, x: np.ndarray) -> np.ndarray:
        paths = self.mean_path_lengths(x)
        return 2.0 ** (-paths / expected_path_norm(self.psi))


def build_forest(x: np.ndarray, config: ForestConfig) -> IsolationForest:
    """Fit an isolation forest; tree t draws its subsample and splits from
    the stream derived from (config.seed, "tree", t).

    Per tree, the subsample rows are drawn first, then two uniform arrays
    (split dimension and split value, one pair consumed per split attempt
    in preorder). The tree itself is grown by the kernel backend, so the
    structure is identical whichever backend is active.
    """
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points to build a forest")
    psi = min(config.subsample, n)
    height_limit = math.ceil(math.log2(psi))
    parts = []
    roots = np.empty(config.n_trees, dtype=np.int64)
    offset = 0
    for t in range(config.n_trees):
        rng = derive_rng(config.seed, "tree", t)
        if psi < n:
            rows = rng.choice(n, size=psi, replace=False)
            sub = np.ascontiguousarray(x[rows])
        else:
            sub = x
        u_dims = rng.random(2 * psi)
        u_splits = rng.random(2 * psi)
        tree = build_tree(sub, u_dims, u_splits, height_limit)
        parts.append(tree)
        roots[t] = offset
        offset += len(tree[0])
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
    return IsolationForest(
        features=features,
        thresholds=thresholds,
        left=left,
        right=right,
        sizes=sizes,
        roots=roots,
        psi=psi,
        dim=x.shape[1],
    )


def anomaly_score(point: np.ndarray, forest: IsolationForest) -> float:
    """Score one point against a built forest: 2^(-E[h(x)]/c(psi))."""
    point = np.asarray(point, dtype=np.float64)
    return float(forest.scores(point.reshape(1, -1))[0])


def filter_pool(responses: list, config: ForestConfig) -> tuple[list, list]:
    """Drop the most anomalous responses from one pool.

    ``responses`` is a list of (record, vector) tuples. Input is sorted by
    record key so scores do not depend on arrival order; the
    floor(contamination * n) highest-scoring points are removed. Pools with
    fewer than 5 responses are returned unfiltered.
    """
    if not responses:
        return [], []
    ordered = sorted(responses, key=lambda rv: rv[0].key)
    n = len(ordered)
    n_remove = min(n, math.floor(config.contamination * n))
    if n < 5 or n_remove == 0:
        return ordered, []
    x = np.ascontiguousarray(np.stack([np.asarray(v, dtype=np.float64) for _, v in ordered]))
    forest = build_forest(x, config)
    scores = forest.scores(x)
    by_score = sorted(range(n), key=lambda i: (-scores[i], i))
    removed_idx = set(by_score[:n_remove])
    kept = [rv for i, rv in enumerate(ordered) if i not in removed_idx]
    removed = [rv for i, rv in enumerate(ordered) if i in removed_idx]
    return kept, removed
