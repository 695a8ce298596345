"""Compiled kernels for growing and evaluating the forest's trees."""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)

MASK64 = (1 << 64) - 1


def mix64(z):
    """splitmix64 finalizer on Python ints (used to derive per-tree seeds)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def tree_seed(seed, tree_index):
    return mix64(mix64(seed & MASK64) ^ ((tree_index + 1) * 0x9E3779B97F4A7C15))


@njit(cache=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


@njit(cache=True)
def _bounded(state, n):
    return np.int64(_next_u64(state) % np.uint64(n))


@njit(cache=True)
def bootstrap_counts(state, n):
    counts = np.zeros(n, dtype=np.int64)
    for _ in range(n):
        counts[_bounded(state, n)] += 1
    return counts


@njit(cache=True, nogil=True)
def grow_tree(X, y, weights, n_classes, mtry, max_depth, min_leaf, state):
    """Grow one tree on rows with positive integer ``weights``.

    Returns flat node arrays ``(feature, threshold, left, right, counts)``;
    leaves have ``feature == -1``. ``max_depth < 0`` means unlimited.
    """
    n_features = X.shape[1]
    n_active = 0
    for i in range(weights.shape[0]):
        if weights[i] > 0:
            n_active += 1
    idx = np.empty(n_active, dtype=np.int64)
    j = 0
    for i in range(weights.shape[0]):
        if weights[i] > 0:
            idx[j] = i
            j += 1
    buf = np.empty(n_active, dtype=np.int64)

    max_nodes = 2 * n_active + 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    counts = np.zeros((max_nodes, n_classes), dtype=np.int64)

    stack_start = np.empty(max_nodes, dtype=np.int64)
    stack_end = np.empty(max_nodes, dtype=np.int64)
    stack_depth = np.empty(max_nodes, dtype=np.int64)
    stack_node = np.empty(max_nodes, dtype=np.int64)
    top = 0
    stack_start[0] = 0
    stack_end[0] = n_active
    stack_depth[0] = 0
    stack_node[0] = 0
    top = 1
    n_nodes = 1

    perm = np.empty(n_features, dtype=np.int64)
    left_counts = np.zeros(n_classes, dtype=np.int64)
    vals = np.empty(n_active, dtype=np.float64)

    while top > 0:
        top -= 1
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        node = stack_node[top]

        total = 0
        for i in range(start, end):
            r = idx[i]
            counts[node, y[r]] += weights[r]
            total += weights[r]
        n_present = 0
        sq_total = 0
        for c in range(n_classes):
            if counts[node, c] > 0:
                n_present += 1
            sq_total += counts[node, c] * counts[node, c]
        if n_present <= 1 or total < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        best_f = -1
        best_thr = 0.0
        best_crit = -1.0
        eps = 1e-12 * total
        for f in range(n_features):
            perm[f] = f
        visited = 0
        for p in range(n_features):
            if visited >= mtry:
                break
            q = p + _bounded(state, n_features - p)
            tmp = perm[p]
            perm[p] = perm[q]
            perm[q] = tmp
            f = perm[p]

            m = end - start
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:m])
            if vals[order[0]] == vals[order[m - 1]]:
                continue
            visited += 1

            for c in range(n_classes):
                left_counts[c] = 0
            w_left = 0
            sq_left = 0
            sq_right = sq_total
            for i in range(m - 1):
                r = idx[start + order[i]]
                c = y[r]
                w = weights[r]
                cl = left_counts[c]
                cr = counts[node, c] - cl
                sq_left += (cl + w) * (cl + w) - cl * cl
                sq_right += (cr - w) * (cr - w) - cr * cr
                left_counts[c] = cl + w
                w_left += w
                w_right = total - w_left
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if a == b or w_left < min_leaf or w_right < min_leaf:
                    continue
                crit = sq_left / w_left + sq_right / w_right
                thr = 0.5 * a + 0.5 * b
                if not (a <= thr < b):
                    thr = a
                if best_f < 0 or crit > best_crit + eps:
                    take = True
                elif abs(crit - best_crit) <= eps and (
                        f < best_f or (f == best_f and thr < best_thr)):
                    take = True
                else:
                    take = False
                if take:
                    best_f = f
                    best_thr = thr
                    best_crit = crit

        if best_f < 0:
            continue

        # stable partition of idx[start:end] on X[:, best_f] <= best_thr
        n_left = 0
        n_right = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_f] <= best_thr:
                idx[start + n_left] = r
                n_left += 1
            else:
                buf[n_right] = r
                n_right += 1
        for i in range(n_right):
            idx[start + n_left + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right pushed first so the left subtree is grown first
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1
        stack_node[top] = n_nodes + 1
        top += 1
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1
        stack_node[top] = n_nodes
        top += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())


@njit(cache=True, nogil=True)
def forest_proba(X, roots, feature, threshold, left, right, leaf_proba):
    """Average leaf class distributions over all trees for each row of X."""
    n = X.shape[0]
    n_trees = roots.shape[0]
    n_classes = leaf_proba.shape[1]
    out = np.zeros((n, n_classes))
    acc = np.zeros(n_classes)
    for i in range(n):
        for c in range(n_classes):
            acc[c] = 0.0
        for t in range(n_trees):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for c in range(n_classes):
                acc[c] += leaf_proba[node, c]
        for c in range(n_classes):
            out[i, c] = acc[c] / n_trees
    return out
