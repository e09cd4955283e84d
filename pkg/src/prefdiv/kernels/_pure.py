"""Numpy fallback kernels.

Mirrors the compiled ``_fast`` module operation-for-operation. Randomness
is pre-drawn by the caller and consumed in identical (preorder) order, and
greedy objectives use the same expression and first-maximum argmax, so both
backends produce identical trees and picks apart from sub-1e-12 rounding
in the dot products.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def pairwise_sim_sum(xn: np.ndarray) -> float:
    """Sum of dot products over all unordered row pairs of ``xn``."""
    g = xn @ xn.T
    return float((g.sum() - np.trace(g)) / 2.0)


def greedy_pick(xn: np.ndarray, first: int, limit: int) -> np.ndarray:
    """Greedy diversity-maximizing pick order over pre-normalized rows.

    Starts from row ``first``; each step adds the candidate whose inclusion
    maximizes 1 - mean pairwise similarity of the would-be selection, ties
    going to the lowest row index. Returns at most ``limit`` indices.
    """
    n = xn.shape[0]
    picks = [int(first)]
    selected = np.zeros(n, dtype=bool)
    selected[first] = True
    simsum = np.zeros(n)
    total = 0.0
    while len(picks) < min(limit, n):
        simsum = simsum + xn @ xn[picks[-1]]
        k = len(picks)
        npairs = (k + 1) * k / 2.0
        obj = 1.0 - (total + simsum) / npairs
        obj[selected] = -np.inf
        best = int(np.argmax(obj))
        total += float(simsum[best])
        picks.append(best)
        selected[best] = True
    return np.asarray(picks, dtype=np.int64)


def build_tree(
    x: np.ndarray,
    u_dims: np.ndarray,
    u_splits: np.ndarray,
    height_limit: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Grow one isolation tree over the subsample ``x`` in preorder.

    Split dimensions and values come from the pre-drawn uniforms ``u_dims``
    and ``u_splits``, consumed one pair per split attempt, so any backend
    grows the identical tree. Returns flattened node arrays
    (features, thresholds, left, right, sizes); node 0 is the root and
    features < 0 marks a leaf.
    """
    psi = x.shape[0]
    features: list[int] = []
    thresholds: list[float] = []
    left: list[int] = []
    right: list[int] = []
    sizes: list[int] = []
    idx = np.arange(psi)
    draws = [0]

    def leaf(count: int) -> int:
        node = len(features)
        features.append(-1)
        thresholds.append(0.0)
        left.append(-1)
        right.append(-1)
        sizes.append(count)
        return node

    def grow(a: int, b: int, depth: int) -> int:
        if depth >= height_limit or b - a <= 1:
            return leaf(b - a)
        seg = idx[a:b]
        sub = x[seg]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if splittable.size == 0:
            return leaf(b - a)
        u_dim = u_dims[draws[0]]
        u_split = u_splits[draws[0]]
        draws[0] += 1
        pick = int(u_dim * splittable.size)
        if pick >= splittable.size:
            pick = splittable.size - 1
        dim = int(splittable[pick])
        value = lo[dim] + u_split * (hi[dim] - lo[dim])
        if not lo[dim] < value < hi[dim]:
            return leaf(b - a)
        node = len(features)
        features.append(dim)
        thresholds.append(float(value))
        left.append(-1)
        right.append(-1)
        sizes.append(b - a)
        mask = sub[:, dim] < value
        idx[a:b] = np.concatenate([seg[mask], seg[~mask]])
        split = a + int(mask.sum())
        left_child = grow(a, split, depth + 1)
        right_child = grow(split, b, depth + 1)
        left[node] = left_child
        right[node] = right_child
        return node

    grow(0, psi, 0)
    return (
        np.asarray(features, dtype=np.int32),
        np.asarray(thresholds, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(sizes, dtype=np.int32),
    )


def forest_path_lengths(
    features: np.ndarray,
    thresholds: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    sizes: np.ndarray,
    roots: np.ndarray,
    x: np.ndarray,
    ctable: np.ndarray,
) -> np.ndarray:
    """Mean adjusted isolation path length per row of ``x``.

    Trees are flattened node arrays (``features[i] < 0`` marks a leaf whose
    terminal data size is ``sizes[i]``); ``roots`` holds each tree's root
    node index. Leaf adjustment comes from ``ctable[size]``.
    """
    n = x.shape[0]
    out = np.zeros(n)
    idx = np.arange(n)

    def route(node: int, rows: np.ndarray, depth: int) -> None:
        if features[node] < 0:
            out[rows] += depth + ctable[sizes[node]]
            return
        mask = x[rows, features[node]] < thresholds[node]
        if mask.any():
            route(left[node], rows[mask], depth + 1)
        if not mask.all():
            route(right[node], rows[~mask], depth + 1)

    for root in roots:
        route(int(root), idx, 0)
    return out / len(roots)
