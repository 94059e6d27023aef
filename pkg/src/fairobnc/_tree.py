"""Compiled kernels for the CART base learner.

The builder works on presorted per-feature index orders and partitions them
stably at each split, so one tree costs O(depth * n * d).  Sample weights are
bootstrap counts (non-negative integers), which keeps every running sum exact
and the resulting tree independent of floating-point summation order.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def build_tree(X, w, y, orders, allowed, max_depth, min_leaf):
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    positive = np.zeros(cap, np.float64)
    total = np.zeros(cap, np.float64)
    gain = np.zeros(cap, np.float64)

    f0 = -1
    for f in range(d):
        if allowed[f]:
            f0 = f
            break

    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node = np.empty(cap, np.int64)
    goleft = np.zeros(n, np.bool_)
    buf = np.empty(n, np.int64)

    top = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_node[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = st_node[top]

        wt = 0.0
        wp = 0.0
        for k in range(start, end):
            i = orders[f0, k] if f0 >= 0 else k
            wt += w[i]
            wp += w[i] * y[i]
        total[node] = wt
        positive[node] = wp

        if f0 < 0 or depth >= max_depth or wp == 0.0 or wp == wt or wt < 2.0 * min_leaf:
            continue

        parent_term = 2.0 * wp * (wt - wp) / wt
        best_gain = 1e-12
        best_f = -1
        best_t = 0.0
        for f in range(d):
            if not allowed[f]:
                continue
            wl = 0.0
            wpl = 0.0
            for k in range(start, end - 1):
                i = orders[f, k]
                wl += w[i]
                wpl += w[i] * y[i]
                j = orders[f, k + 1]
                xi = X[i, f]
                xj = X[j, f]
                if xi == xj:
                    continue
                wr = wt - wl
                if wl < min_leaf or wr < min_leaf:
                    continue
                wpr = wp - wpl
                child = 2.0 * wpl * (wl - wpl) / wl + 2.0 * wpr * (wr - wpr) / wr
                g = parent_term - child
                if g > best_gain:
                    best_gain = g
                    best_f = f
                    t = 0.5 * (xi + xj)
                    # adjacent floats: the midpoint may round up onto xj
                    if t >= xj:
                        t = xi
                    best_t = t

        if best_f < 0:
            continue

        for k in range(start, end):
            i = orders[best_f, k]
            goleft[i] = X[i, best_f] <= best_t

        n_left = 0
        for f in range(d):
            if not allowed[f]:
                continue
            a = start
            b = 0
            for k in range(start, end):
                i = orders[f, k]
                if goleft[i]:
                    orders[f, a] = i
                    a += 1
                else:
                    buf[b] = i
                    b += 1
            for k in range(b):
                orders[f, a + k] = buf[k]
            n_left = a - start

        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = lnode
        right[node] = rnode
        gain[node] = best_gain

        # right pushed first so the left subtree is expanded first
        st_start[top] = start + n_left
        st_end[top] = end
        st_depth[top] = depth + 1
        st_node[top] = rnode
        top += 1
        st_start[top] = start
        st_end[top] = start + n_left
        st_depth[top] = depth + 1
        st_node[top] = lnode
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        positive[:n_nodes].copy(),
        total[:n_nodes].copy(),
        gain[:n_nodes].copy(),
    )


@njit(cache=True)
def apply_forest(X, feature, threshold, left, right, roots):
    """Global leaf index reached by every row in every tree, shape (L, n)."""
    n = X.shape[0]
    n_trees = roots.shape[0]
    out = np.empty((n_trees, n), np.int64)
    for t in range(n_trees):
        root = roots[t]
        for r in range(n):
            node = root
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[t, r] = node
    return out
