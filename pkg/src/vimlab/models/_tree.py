"""Numba kernels for depth-limited regression trees.

Trees are grown level by level. Every feature is presorted once per fit;
each level then makes a single pass over every feature's sorted order,
accumulating left-hand residual sums per active node, which gives the exact
best split (variance reduction) over all distinct values in O(n * p) per
level. Ties go to the lowest feature index, then the lowest threshold.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def grow_tree(X_T, sorted_vals, order, r, node_of, max_depth, min_leaf, min_gain,
              feature, threshold, left, right, value):
    """Grow one tree on the rows with ``node_of >= 0``; returns node count.

    ``node_of`` is overwritten with each row's final leaf id (or left at -1
    for rows outside the subsample). Leaf ``value`` is the mean residual.
    """
    p, n = X_T.shape
    level_start = 0
    level_end = 1
    n_nodes = 1
    for depth in range(max_depth + 1):
        L = level_end - level_start
        sums = np.zeros(L)
        cnts = np.zeros(L, dtype=np.int64)
        for i in range(n):
            nd = node_of[i]
            if nd >= level_start:
                sums[nd - level_start] += r[i]
                cnts[nd - level_start] += 1
        if depth == max_depth:
            for j in range(L):
                nd = level_start + j
                feature[nd] = -1
                value[nd] = sums[j] / cnts[j] if cnts[j] > 0 else 0.0
            break
        base = np.empty(L)
        for j in range(L):
            base[j] = sums[j] * sums[j] / cnts[j] if cnts[j] > 0 else 0.0
        best_gain = np.full(L, min_gain)
        best_feat = np.full(L, -1, dtype=np.int64)
        best_thr = np.zeros(L)
        lsum = np.zeros(L)
        lcnt = np.zeros(L, dtype=np.int64)
        last = np.zeros(L)
        for f in range(p):
            lsum[:] = 0.0
            lcnt[:] = 0
            for t in range(n):
                i = order[f, t]
                nd = node_of[i]
                if nd < level_start:
                    continue
                j = nd - level_start
                x = sorted_vals[f, t]
                c = lcnt[j]
                if c >= min_leaf and x > last[j]:
                    rc = cnts[j] - c
                    if rc >= min_leaf:
                        s = lsum[j]
                        rs = sums[j] - s
                        gain = s * s / c + rs * rs / rc - base[j]
                        if gain > best_gain[j]:
                            best_gain[j] = gain
                            best_feat[j] = f
                            thr = last[j] + 0.5 * (x - last[j])
                            if thr >= x:
                                thr = last[j]
                            best_thr[j] = thr
                lsum[j] += r[i]
                lcnt[j] = c + 1
                last[j] = x
        new_end = level_end
        for j in range(L):
            nd = level_start + j
            if best_feat[j] >= 0:
                feature[nd] = best_feat[j]
                threshold[nd] = best_thr[j]
                left[nd] = new_end
                right[nd] = new_end + 1
                new_end += 2
            else:
                feature[nd] = -1
                value[nd] = sums[j] / cnts[j] if cnts[j] > 0 else 0.0
        if new_end == level_end:
            break
        for i in range(n):
            nd = node_of[i]
            if nd >= level_start and feature[nd] >= 0:
                if X_T[feature[nd], i] <= threshold[nd]:
                    node_of[i] = left[nd]
                else:
                    node_of[i] = right[nd]
        n_nodes = new_end
        level_start = level_end
        level_end = new_end
    return n_nodes


@njit(cache=True)
def add_tree(X_T, feature, threshold, left, right, value, out):
    """out[i] += tree(x_i) for rows stored column-major in ``X_T``."""
    n = X_T.shape[1]
    for i in range(n):
        nd = 0
        while feature[nd] >= 0:
            if X_T[feature[nd], i] <= threshold[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[i] += value[nd]


@njit(cache=True)
def predict_forest(X_T, feature, threshold, left, right, value, roots, base):
    """Sum of all trees (flat node arrays, global child ids) plus ``base``.

    Rows are stored column-major in ``X_T``; looping trees outermost keeps
    each tree's nodes in cache while rows stream through.
    """
    n = X_T.shape[1]
    out = np.full(n, base)
    for t in range(roots.shape[0]):
        root = roots[t]
        if feature[root] < 0:
            v = value[root]
            for i in range(n):
                out[i] += v
            continue
        for i in range(n):
            nd = root
            while feature[nd] >= 0:
                if X_T[feature[nd], i] <= threshold[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            out[i] += value[nd]
    return out


@njit(cache=True)
def complete_layout(feature, threshold, left, right, value, roots, depth):
    """Re-encode trees as complete binary trees of the given depth.

    Leaves above the bottom level become pass-through nodes (feature 0,
    threshold +inf, so every row goes left) whose descendants all carry the
    leaf value. Returns (features, thresholds) of shape (T, 2^depth - 1) and
    leaf values of shape (T, 2^depth).
    """
    T = roots.shape[0]
    n_int = 2**depth - 1
    cf = np.zeros((T, n_int), dtype=np.int64)
    ct = np.full((T, n_int), np.inf)
    cv = np.zeros((T, n_int + 1))
    src = np.empty(2 * n_int + 1, dtype=np.int64)
    for t in range(T):
        src[0] = roots[t]
        for pos in range(n_int):
            s = src[pos]
            if feature[s] >= 0:
                cf[t, pos] = feature[s]
                ct[t, pos] = threshold[s]
                src[2 * pos + 1] = left[s]
                src[2 * pos + 2] = right[s]
            else:
                src[2 * pos + 1] = s
                src[2 * pos + 2] = s
        for pos in range(n_int, 2 * n_int + 1):
            cv[t, pos - n_int] = value[src[pos]]
    return cf, ct, cv


@njit(cache=True)
def predict_complete(X_T, cf, ct, cv, base):
    """Branchless evaluation of complete trees from :func:`complete_layout`.

    Rows are processed in blocks small enough for their features to stay in
    cache while every tree is applied to the block.
    """
    p, n = X_T.shape
    T, n_int = cf.shape
    depth = 0
    while (1 << depth) - 1 < n_int:
        depth += 1
    out = np.full(n, base)
    block = 256
    idx = np.empty(block, dtype=np.int64)
    for start in range(0, n, block):
        stop = min(n, start + block)
        m = stop - start
        for t in range(T):
            f = cf[t]
            th = ct[t]
            v = cv[t]
            idx[:m] = 0
            for _ in range(depth):
                for r in range(m):
                    k = idx[r]
                    idx[r] = 2 * k + 1 + (X_T[f[k], start + r] > th[k])
            for r in range(m):
                out[start + r] += v[idx[r] - n_int]
    return out


_UNROLLED = {}
UNROLL_MAX_DEPTH = 4


def _unrolled_source(depth: int) -> str:
    n_int = 2**depth - 1
    lines = [
        "def kernel(X_T, cf, ct, cv, base):",
        "    n = X_T.shape[1]",
        "    out = np.full(n, base)",
        "    for start in range(0, n, 1024):",
        "        stop = min(n, start + 1024)",
        "        for t in range(cf.shape[0]):",
    ]
    lines += [f"            x{j} = X_T[cf[t, {j}]]; t{j} = ct[t, {j}]" for j in range(n_int)]
    lines += [f"            s{n_int + l} = cv[t, {l}]" for l in range(n_int + 1)]
    lines.append("            for i in range(start, stop):")
    for j in range(n_int - 1, -1, -1):
        lines.append(f"                s{j} = s{2 * j + 2} if x{j}[i] > t{j} else s{2 * j + 1}")
    lines += ["                out[i] += s0", "    return out"]
    return "\n".join(lines)


def unrolled_kernel(depth: int):
    """Fully unrolled select network for complete trees of a small depth.

    Every comparison is evaluated and resolved bottom-up, which the compiler
    turns into branch-free vector code. Compiled once per depth and process.
    """
    if depth not in _UNROLLED:
        ns = {"np": np}
        exec(_unrolled_source(depth), ns)
        _UNROLLED[depth] = njit(ns["kernel"])
    return _UNROLLED[depth]


def predict_trees(X_T, cf, ct, cv, base):
    depth = int(np.log2(cf.shape[1] + 1))
    if depth <= UNROLL_MAX_DEPTH:
        return unrolled_kernel(depth)(X_T, cf, ct, cv, base)
    return predict_complete(X_T, cf, ct, cv, base)
