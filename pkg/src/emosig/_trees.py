"""Compiled CART kernels used by the decision tree and random forest.

The builder grows a binary tree with Gini impurity. Candidate thresholds are
midpoints between consecutive distinct sorted values. Ties in impurity gain
(within 1e-12) resolve to the lowest feature index, then the lowest
threshold, so the result does not depend on feature scan order. Per-split
feature subsets are drawn with a splitmix64 generator inlined here, seeded
per tree, making every tree a pure function of (data, seed).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GAIN_TOL = 1e-12

_SM_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SM_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@njit(cache=True, nogil=True, inline="always")
def _splitmix64(state):
    """Advance the one-element uint64 state array, return the next draw."""
    state[0] = state[0] + _SM_GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _SM_MIX1
    z = (z ^ (z >> _S27)) * _SM_MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def build_tree(x, y, sample_idx, seed, mtry, min_samples_split, n_classes):
    """Grow one tree; returns (feature, threshold, left, right, counts, n_nodes).

    feature[i] == -1 marks a leaf. Children indices are local to this tree.
    Nodes are numbered in creation order with the left child created first.
    """
    n_total = sample_idx.shape[0]
    d = x.shape[1]
    max_nodes = 2 * n_total + 1

    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    counts = np.zeros((max_nodes, n_classes), np.int64)

    idx = sample_idx.copy()
    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)

    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)

    perm = np.empty(d, np.int64)
    vals = np.empty(n_total, np.float64)
    cls_all = np.zeros(n_classes, np.int64)
    cls_lo = np.zeros(n_classes, np.int64)

    n_nodes = 1
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n_total
    top = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        m = hi - lo

        for c in range(n_classes):
            cls_all[c] = 0
        for i in range(lo, hi):
            cls_all[y[idx[i]]] += 1
        for c in range(n_classes):
            counts[node, c] = cls_all[c]

        present = 0
        for c in range(n_classes):
            if cls_all[c] > 0:
                present += 1
        if present <= 1 or m < min_samples_split:
            continue

        imp_parent = 1.0
        for c in range(n_classes):
            p = cls_all[c] / m
            imp_parent -= p * p

        n_feats = mtry if mtry < d else d
        for j in range(d):
            perm[j] = j
        if n_feats < d:
            for j in range(n_feats):
                r = _splitmix64(state) % np.uint64(d - j)
                k = j + int(r)
                t = perm[j]
                perm[j] = perm[k]
                perm[k] = t

        best_gain = -1.0
        best_feat = -1
        best_thr = 0.0
        for jj in range(n_feats):
            f = perm[jj]
            for i in range(m):
                vals[i] = x[idx[lo + i], f]
            order = np.argsort(vals[:m])

            fbest_gain = -1.0
            fbest_thr = 0.0
            for c in range(n_classes):
                cls_lo[c] = 0
            m_left = 0
            for i in range(m - 1):
                o = order[i]
                cls_lo[y[idx[lo + o]]] += 1
                m_left += 1
                v = vals[o]
                v_next = vals[order[i + 1]]
                if v_next > v:
                    m_right = m - m_left
                    imp_l = 1.0
                    imp_r = 1.0
                    for c in range(n_classes):
                        pl = cls_lo[c] / m_left
                        pr = (cls_all[c] - cls_lo[c]) / m_right
                        imp_l -= pl * pl
                        imp_r -= pr * pr
                    gain = imp_parent - (m_left * imp_l + m_right * imp_r) / m
                    if gain > fbest_gain + _GAIN_TOL:
                        thr = v + (v_next - v) * 0.5
                        if thr <= v:
                            thr = v_next
                        fbest_gain = gain
                        fbest_thr = thr
            if fbest_gain >= 0.0:
                if gain_beats(fbest_gain, best_gain) or (
                    gain_ties(fbest_gain, best_gain)
                    and (f < best_feat or (f == best_feat and fbest_thr < best_thr))
                ):
                    best_gain = fbest_gain
                    best_feat = f
                    best_thr = fbest_thr

        if best_feat < 0:
            continue  # every candidate feature is constant here

        store = lo
        for i in range(lo, hi):
            if x[idx[i], best_feat] < best_thr:
                t = idx[store]
                idx[store] = idx[i]
                idx[i] = t
                store += 1
        if store == lo or store == hi:
            continue  # numeric edge: split separated nothing, keep as leaf

        feature[node] = best_feat
        threshold[node] = best_thr
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[node] = left_id
        right[node] = right_id
        stack_node[top] = right_id
        stack_lo[top] = store
        stack_hi[top] = hi
        top += 1
        stack_node[top] = left_id
        stack_lo[top] = lo
        stack_hi[top] = store
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
        n_nodes,
    )


@njit(cache=True, nogil=True, inline="always")
def gain_beats(gain, best):
    return gain > best + _GAIN_TOL


@njit(cache=True, nogil=True, inline="always")
def gain_ties(gain, best):
    return gain >= best - _GAIN_TOL


@njit(cache=True, nogil=True)
def forest_votes(x, feats, thrs, lefts, rights, leaf_counts, offsets, n_classes):
    """Tree votes per query; each tree votes its leaf-majority label.

    Leaf majorities and the returned votes break ties toward the lowest
    class index.
    """
    n_q = x.shape[0]
    n_trees = offsets.shape[0] - 1
    votes = np.zeros((n_q, n_classes), np.int64)
    for t in range(n_trees):
        base = offsets[t]
        for q in range(n_q):
            node = 0
            while feats[base + node] >= 0:
                if x[q, feats[base + node]] < thrs[base + node]:
                    node = lefts[base + node]
                else:
                    node = rights[base + node]
            best_c = 0
            best_n = leaf_counts[base + node, 0]
            for c in range(1, n_classes):
                if leaf_counts[base + node, c] > best_n:
                    best_n = leaf_counts[base + node, c]
                    best_c = c
            votes[q, best_c] += 1
    return votes
