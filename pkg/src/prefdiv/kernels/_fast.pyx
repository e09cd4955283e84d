# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: pairwise similarity, greedy picking, isolation trees.

Operation-for-operation twin of ``_pure``. Tree growth consumes the same
pre-drawn uniforms in the same preorder, and the greedy objective uses the
same expression and first-maximum tie break, so both backends agree.
"""

import numpy as np

cimport cython

BACKEND = "fast"


def pairwise_sim_sum(double[:, ::1] xn):
    """Sum of dot products over all unordered row pairs of ``xn``."""
    cdef Py_ssize_t n = xn.shape[0]
    cdef Py_ssize_t d = xn.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0
    cdef double dot
    for i in range(n):
        for j in range(i + 1, n):
            dot = 0.0
            for k in range(d):
                dot += xn[i, k] * xn[j, k]
            total += dot
    return total


def greedy_pick(double[:, ::1] xn, Py_ssize_t first, Py_ssize_t limit):
    """Greedy diversity-maximizing pick order over pre-normalized rows.

    Starts from row ``first``; each step adds the candidate whose inclusion
    maximizes 1 - mean pairwise similarity of the would-be selection, ties
    going to the lowest row index. Returns at most ``limit`` indices.
    """
    cdef Py_ssize_t n = xn.shape[0]
    cdef Py_ssize_t d = xn.shape[1]
    cdef Py_ssize_t take = limit if limit < n else n
    out = np.empty(take, dtype=np.int64)
    cdef long long[::1] picks = out
    simsum_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] simsum = simsum_arr
    selected_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] selected = selected_arr
    cdef Py_ssize_t count = 1
    cdef Py_ssize_t last = first
    cdef Py_ssize_t i, k, best
    cdef double dot, obj, best_obj, npairs, total
    picks[0] = first
    selected[first] = 1
    total = 0.0
    while count < take:
        for i in range(n):
            dot = 0.0
            for k in range(d):
                dot += xn[i, k] * xn[last, k]
            simsum[i] += dot
        npairs = (count + 1) * count / 2.0
        best = -1
        best_obj = 0.0
        for i in range(n):
            if selected[i]:
                continue
            obj = 1.0 - (total + simsum[i]) / npairs
            if best < 0 or obj > best_obj:
                best = i
                best_obj = obj
        total += simsum[best]
        picks[count] = best
        selected[best] = 1
        last = best
        count += 1
    return out


def build_tree(double[:, ::1] x, double[::1] u_dims, double[::1] u_splits,
               int height_limit):
    """Grow one isolation tree over the subsample ``x`` in preorder.

    Split dimensions and values come from the pre-drawn uniforms ``u_dims``
    and ``u_splits``, consumed one pair per split attempt, so any backend
    grows the identical tree. Returns flattened node arrays
    (features, thresholds, left, right, sizes); node 0 is the root and
    features < 0 marks a leaf.
    """
    cdef Py_ssize_t psi = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t max_nodes = 2 * psi + 1
    features_arr = np.empty(max_nodes, dtype=np.int32)
    thresholds_arr = np.empty(max_nodes, dtype=np.float64)
    left_arr = np.empty(max_nodes, dtype=np.int32)
    right_arr = np.empty(max_nodes, dtype=np.int32)
    sizes_arr = np.empty(max_nodes, dtype=np.int32)
    cdef int[::1] features = features_arr
    cdef double[::1] thresholds = thresholds_arr
    cdef int[::1] left = left_arr
    cdef int[::1] right = right_arr
    cdef int[::1] sizes = sizes_arr
    idx_arr = np.arange(psi, dtype=np.int64)
    buf_arr = np.empty(psi, dtype=np.int64)
    lo_arr = np.empty(d, dtype=np.float64)
    hi_arr = np.empty(d, dtype=np.float64)
    split_arr = np.empty(d, dtype=np.int64)
    cdef long long[::1] idx = idx_arr
    cdef long long[::1] buf = buf_arr
    cdef double[::1] lo = lo_arr
    cdef double[::1] hi = hi_arr
    cdef long long[::1] splittable = split_arr
    cdef Py_ssize_t node_count = 0
    cdef Py_ssize_t draw = 0

    node_count, draw = _grow(x, u_dims, u_splits, height_limit,
                             features, thresholds, left, right, sizes,
                             idx, buf, lo, hi, splittable,
                             0, psi, 0, node_count, draw)
    return (features_arr[:node_count].copy(),
            thresholds_arr[:node_count].copy(),
            left_arr[:node_count].copy(),
            right_arr[:node_count].copy(),
            sizes_arr[:node_count].copy())


cdef (Py_ssize_t, Py_ssize_t) _grow(double[:, ::1] x,
                                    double[::1] u_dims,
                                    double[::1] u_splits,
                                    int height_limit,
                                    int[::1] features,
                                    double[::1] thresholds,
                                    int[::1] left,
                                    int[::1] right,
                                    int[::1] sizes,
                                    long long[::1] idx,
                                    long long[::1] buf,
                                    double[::1] lo,
                                    double[::1] hi,
                                    long long[::1] splittable,
                                    Py_ssize_t a, Py_ssize_t b, int depth,
                                    Py_ssize_t node_count,
                                    Py_ssize_t draw):
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t node, i, j, k, nsplit, pick, dim, nleft, pos
    cdef double v, value, u_dim, u_split
    cdef Py_ssize_t child

    if depth >= height_limit or b - a <= 1:
        node = node_count
        features[node] = -1
        thresholds[node] = 0.0
        left[node] = -1
        right[node] = -1
        sizes[node] = <int>(b - a)
        return node_count + 1, draw

    for k in range(d):
        lo[k] = x[idx[a], k]
        hi[k] = x[idx[a], k]
    for i in range(a + 1, b):
        for k in range(d):
            v = x[idx[i], k]
            if v < lo[k]:
                lo[k] = v
            elif v > hi[k]:
                hi[k] = v
    nsplit = 0
    for k in range(d):
        if hi[k] > lo[k]:
            splittable[nsplit] = k
            nsplit += 1
    if nsplit == 0:
        node = node_count
        features[node] = -1
        thresholds[node] = 0.0
        left[node] = -1
        right[node] = -1
        sizes[node] = <int>(b - a)
        return node_count + 1, draw

    u_dim = u_dims[draw]
    u_split = u_splits[draw]
    draw += 1
    pick = <Py_ssize_t>(u_dim * nsplit)
    if pick >= nsplit:
        pick = nsplit - 1
    dim = <Py_ssize_t>splittable[pick]
    value = lo[dim] + u_split * (hi[dim] - lo[dim])
    if not (lo[dim] < value and value < hi[dim]):
        node = node_count
        features[node] = -1
        thresholds[node] = 0.0
        left[node] = -1
        right[node] = -1
        sizes[node] = <int>(b - a)
        return node_count + 1, draw

    node = node_count
    node_count += 1
    features[node] = <int>dim
    thresholds[node] = value
    sizes[node] = <int>(b - a)

    # Stable partition of idx[a:b] around the split value.
    nleft = 0
    pos = 0
    for i in range(a, b):
        if x[idx[i], dim] < value:
            buf[nleft] = idx[i]
            nleft += 1
    for i in range(a, b):
        if not x[idx[i], dim] < value:
            buf[nleft + pos] = idx[i]
            pos += 1
    for i in range(b - a):
        idx[a + i] = buf[i]

    child = node_count
    node_count, draw = _grow(x, u_dims, u_splits, height_limit,
                             features, thresholds, left, right, sizes,
                             idx, buf, lo, hi, splittable,
                             a, a + nleft, depth + 1, node_count, draw)
    left[node] = <int>child
    child = node_count
    node_count, draw = _grow(x, u_dims, u_splits, height_limit,
                             features, thresholds, left, right, sizes,
                             idx, buf, lo, hi, splittable,
                             a + nleft, b, depth + 1, node_count, draw)
    right[node] = <int>child
    return node_count, draw


def forest_path_lengths(int[::1] features, double[::1] thresholds,
                        int[::1] left, int[::1] right, int[::1] sizes,
                        long long[::1] roots, double[:, ::1] x,
                        double[::1] ctable):
    """Mean adjusted isolation path length per row of ``x``.

    Trees are flattened node arrays (``features[i] < 0`` marks a leaf whose
    terminal data size is ``sizes[i]``); ``roots`` holds each tree's root
    node index. Leaf adjustment comes from ``ctable[size]``.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t ntrees = roots.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, t, node
    cdef double acc
    cdef int depth
    for i in range(n):
        acc = 0.0
        for t in range(ntrees):
            node = <Py_ssize_t>roots[t]
            depth = 0
            while features[node] >= 0:
                if x[i, features[node]] < thresholds[node]:
                    node = <Py_ssize_t>left[node]
                else:
                    node = <Py_ssize_t>right[node]
                depth += 1
            acc += depth + ctable[sizes[node]]
        out[i] = acc / ntrees
    return out_arr
