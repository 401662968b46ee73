"""Weighted CART regression trees compiled with numba.

Trees are stored as flat node arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``); a node with ``feature == -1`` is a leaf. Samples with
zero weight are ignored, which is how bootstrap and row subsampling are fed in.

Split rule: for each candidate feature (ascending index) and each boundary
between distinct sorted values (ascending), the squared-error reduction is
computed from prefix sums; the first largest reduction wins. Reductions
within rounding noise (1e-12 of the node's sum of w*y^2) of the current best
count as ties, so two features that induce the same partition resolve to the
lower index whatever order the prefix sums were accumulated in. The
threshold is the midpoint of the two neighbouring values and samples with
``x <= threshold`` go left.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _midpoint(a, b):
    m = 0.5 * (a + b)
    if m >= b:
        m = a
    return m


@njit(cache=True)
def best_split(X, y, w, idx, features):
    """Best (feature, threshold, gain) over ``idx``; feature -1 when nothing splits."""
    W = 0.0
    S = 0.0
    Q = 0.0
    for a in idx:
        W += w[a]
        S += w[a] * y[a]
        Q += w[a] * y[a] * y[a]
    base = S * S / W
    tol = 1e-12 * Q
    best_f = -1
    best_thr = 0.0
    best_gain = 0.0
    n = idx.shape[0]
    xs = np.empty(n)
    for f in features:
        for j in range(n):
            xs[j] = X[idx[j], f]
        order = np.argsort(xs, kind="mergesort")
        wl = 0.0
        sl = 0.0
        for j in range(n - 1):
            a = idx[order[j]]
            wl += w[a]
            sl += w[a] * y[a]
            x0 = xs[order[j]]
            x1 = xs[order[j + 1]]
            if x1 <= x0:
                continue
            wr = W - wl
            sr = S - sl
            gain = sl * sl / wl + sr * sr / wr - base
            if gain > best_gain + tol:
                best_gain = gain
                best_f = f
                best_thr = _midpoint(x0, x1)
    return best_f, best_thr, best_gain


@njit(cache=True)
def build_tree(X, y, w, max_depth, n_sub, keys, feature, threshold, left, right, value):
    """Grow one tree into the preallocated node arrays; returns the node count.

    ``max_depth < 0`` means unlimited. When ``n_sub`` is below the feature
    count, node ``t`` considers the ``n_sub`` features with the smallest
    ``keys[t]``.
    """
    p = X.shape[1]
    idx = np.flatnonzero(w > 0)
    n = idx.shape[0]
    all_features = np.arange(p)
    # stack of (node, start, end, depth) over the in-place partitioned idx
    st_node = np.empty(2 * n + 1, np.int64)
    st_lo = np.empty(2 * n + 1, np.int64)
    st_hi = np.empty(2 * n + 1, np.int64)
    st_depth = np.empty(2 * n + 1, np.int64)
    top = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    n_nodes = 1
    scratch = np.empty(n, np.int64)
    while top >= 0:
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        top -= 1
        members = idx[lo:hi]
        W = 0.0
        S = 0.0
        ymin = np.inf
        ymax = -np.inf
        for a in members:
            W += w[a]
            S += w[a] * y[a]
            ymin = min(ymin, y[a])
            ymax = max(ymax, y[a])
        value[node] = S / W
        feature[node] = -1
        if hi - lo < 2 or depth == max_depth or ymax <= ymin:
            continue
        if n_sub < p:
            features = np.sort(np.argsort(keys[node])[:n_sub])
        else:
            features = all_features
        f, thr, gain = best_split(X, y, w, members, features)
        if f < 0:
            continue
        # stable partition: left block then right block
        nl = 0
        nr = 0
        for a in members:
            if X[a, f] <= thr:
                idx[lo + nl] = a
                nl += 1
            else:
                scratch[nr] = a
                nr += 1
        for j in range(nr):
            idx[lo + nl + j] = scratch[j]
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is numbered first
        top += 1
        st_node[top] = n_nodes + 1
        st_lo[top] = lo + nl
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = n_nodes
        st_lo[top] = lo
        st_hi[top] = lo + nl
        st_depth[top] = depth + 1
        n_nodes += 2
    return n_nodes


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        t = 0
        while feature[t] >= 0:
            if X[i, feature[t]] <= threshold[t]:
                t = left[t]
            else:
                t = right[t]
        out[i] = value[t]
    return out


def empty_nodes(n_trees: int, max_nodes: int):
    return (
        np.full((n_trees, max_nodes), -1, np.int64),
        np.zeros((n_trees, max_nodes)),
        np.full((n_trees, max_nodes), -1, np.int64),
        np.full((n_trees, max_nodes), -1, np.int64),
        np.zeros((n_trees, max_nodes)),
    )


@njit(cache=True)
def build_forest(X, y, weights, max_depth, n_sub, keys, feature, threshold, left, right, value):
    for t in range(weights.shape[0]):
        build_tree(X, y, weights[t], max_depth, n_sub, keys[t], feature[t], threshold[t], left[t], right[t], value[t])


@njit(cache=True)
def build_boosting(X, y, masks, max_depth, learning_rate, init, feature, threshold, left, right, value):
    """Stagewise squared-error boosting; stage ``t`` fits residuals on rows where ``masks[t] > 0``."""
    F = np.full(y.shape[0], init)
    keys = np.empty((1, 1))
    p = X.shape[1]
    for t in range(masks.shape[0]):
        resid = y - F
        build_tree(X, resid, masks[t], max_depth, p, keys, feature[t], threshold[t], left[t], right[t], value[t])
        F += learning_rate * predict_tree(feature[t], threshold[t], left[t], right[t], value[t], X)


@njit(cache=True)
def predict_ensemble(feature, threshold, left, right, value, X):
    """Per-tree predictions, shape ``(n_trees, n_samples)``."""
    out = np.empty((feature.shape[0], X.shape[0]))
    for t in range(feature.shape[0]):
        out[t] = predict_tree(feature[t], threshold[t], left[t], right[t], value[t], X)
    return out
