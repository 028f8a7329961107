"""Pure-Python / numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Results agree exactly for the integer and routing kernels; the coordinate
descent sweep may differ in the last few ulps because ``expit`` and the C
sigmoid round differently.
"""
import heapq
from collections import deque

import numpy as np
from scipy.special import expit

NAME = "python"

# ESRI D8 codes, clockwise from East.
D8_CODES = np.array([1, 2, 4, 8, 16, 32, 64, 128], dtype=np.uint8)
D8_DR = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)
D8_DC = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)
SQRT2 = 1.4142135623730951


def _edge_cells(valid):
    """Valid cells on the raster border or 8-adjacent to an invalid cell."""
    nrows, ncols = valid.shape
    padded = np.zeros((nrows + 2, ncols + 2), dtype=bool)
    padded[1:-1, 1:-1] = valid
    edge = np.zeros_like(valid, dtype=bool)
    for dr, dc in zip(D8_DR, D8_DC):
        edge |= ~padded[1 + dr:1 + dr + nrows, 1 + dc:1 + dc + ncols]
    return edge & valid


def priority_flood(z, valid, eps):
    z = np.array(z, dtype=np.float64, copy=True)
    valid = np.asarray(valid, dtype=bool)
    nrows, ncols = z.shape
    flat = z.ravel()
    seen = ~valid.ravel()
    heap = []
    for idx in np.flatnonzero(_edge_cells(valid)):
        idx = int(idx)
        seen[idx] = True
        heap.append((flat[idx], idx))
    heapq.heapify(heap)
    dr = D8_DR.tolist()
    dc = D8_DC.tolist()
    while heap:
        zc, idx = heapq.heappop(heap)
        r, c = divmod(idx, ncols)
        for k in range(8):
            rr = r + dr[k]
            cc = c + dc[k]
            if rr < 0 or rr >= nrows or cc < 0 or cc >= ncols:
                continue
            n = rr * ncols + cc
            if seen[n]:
                continue
            seen[n] = True
            if flat[n] <= zc:
                flat[n] = zc + eps
            heapq.heappush(heap, (flat[n], n))
    return z


def d8_directions(z, valid, cellsize):
    z = np.asarray(z, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    nrows, ncols = z.shape
    padded = np.full((nrows + 2, ncols + 2), np.inf)
    padded[1:-1, 1:-1] = np.where(valid, z, np.inf)
    slopes = np.empty((8, nrows, ncols))
    for k in range(8):
        dist = cellsize * SQRT2 if (D8_DR[k] != 0 and D8_DC[k] != 0) else cellsize * 1.0
        nb = padded[1 + D8_DR[k]:1 + D8_DR[k] + nrows, 1 + D8_DC[k]:1 + D8_DC[k] + ncols]
        with np.errstate(invalid="ignore"):
            slopes[k] = (z - nb) / dist
    slopes[~np.isfinite(slopes)] = -np.inf
    best = np.argmax(slopes, axis=0)
    has_drop = np.take_along_axis(slopes, best[None], axis=0)[0] > 0.0
    dirs = np.where(has_drop & valid, D8_CODES[best], 0).astype(np.uint8)
    pits = valid & ~has_drop & ~_edge_cells(valid)
    if pits.any():
        r, c = np.argwhere(pits)[0]
        raise ValueError(f"unfilled depression at row {r}, col {c}: no lower neighbour")
    return dirs


def _receivers(dirs):
    nrows, ncols = dirs.shape
    recv = np.full(nrows * ncols, -1, dtype=np.int64)
    rows, cols = np.divmod(np.arange(nrows * ncols), ncols)
    d = dirs.ravel()
    for k in range(8):
        sel = d == D8_CODES[k]
        recv[sel] = (rows[sel] + D8_DR[k]) * ncols + cols[sel] + D8_DC[k]
    return recv


def topological_order(dirs, valid):
    valid = np.asarray(valid, dtype=bool).ravel()
    recv = _receivers(np.asarray(dirs))
    indeg = np.bincount(recv[recv >= 0], minlength=recv.size)
    queue = deque(int(i) for i in np.flatnonzero(valid & (indeg == 0)))
    indeg = indeg.tolist()
    recv_l = recv.tolist()
    order = []
    while queue:
        c = queue.popleft()
        order.append(c)
        r = recv_l[c]
        if r >= 0:
            indeg[r] -= 1
            if indeg[r] == 0:
                queue.append(r)
    order = np.array(order, dtype=np.int64)
    if order.size != int(valid.sum()):
        raise ValueError("flow directions contain a cycle")
    return order


def accumulate(dirs, order, weights, wvalid):
    recv = _receivers(np.asarray(dirs)).tolist()
    w = np.asarray(weights, dtype=np.float64).tolist()
    wv = np.asarray(wvalid, dtype=bool).tolist()
    acc = [0.0] * len(w)
    ok = [True] * len(w)
    for c in np.asarray(order).tolist():
        r = recv[c]
        if r >= 0:
            acc[r] += acc[c] + w[c]
            ok[r] = ok[r] and ok[c] and wv[c]
    return np.array(acc), np.array(ok, dtype=np.uint8)


def dominance_counts(a, b):
    """Self-inclusive count of points j with a[j] <= a[i] and b[j] <= b[i].

    Collapses duplicate points, then runs a bottom-up merge count over the
    lexicographic (a, b) order: a distinct dominated point always precedes
    its dominator in that order.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((b, a))
    a_s = a[order]
    b_s = b[order]
    new = np.empty(n, dtype=bool)
    new[0] = True
    new[1:] = (a_s[1:] != a_s[:-1]) | (b_s[1:] != b_s[:-1])
    group = np.cumsum(new) - 1
    mult = np.bincount(group).astype(np.int64)
    _, rank_b = np.unique(b_s[new], return_inverse=True)
    rank_b = rank_b.astype(np.int64)
    m = mult.size
    nranks = int(rank_b.max()) + 1
    cnt = mult.copy()
    pos = np.arange(m, dtype=np.int64)
    span = 1
    while span < m:
        block = pos // (2 * span)
        side = (pos // span) & 1
        key = (block * nranks + rank_b) * 2 + side
        o = np.argsort(key, kind="stable")
        left_w = np.where(side[o] == 0, mult[o], 0)
        cs = np.cumsum(left_w)
        blk = block[o]
        start = np.searchsorted(blk, blk, side="left")
        base = np.where(start > 0, cs[start - 1], 0)
        right = side[o] == 1
        cnt[o[right]] += (cs - base)[right]
        span *= 2
    out = np.empty(n, dtype=np.int64)
    out[order] = cnt[group]
    return out


def jenks_dp(x, k):
    """Fisher-Jenks DP on sorted ``x``; returns class start indices (len k)."""
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    n = x.size
    s1 = np.concatenate(([0.0], np.cumsum(x)))
    s2 = np.concatenate(([0.0], np.cumsum(x * x)))
    cost = np.full((k, n), np.inf)
    back = np.zeros((k, n), dtype=np.int64)
    j = np.arange(n)
    cost[0] = s2[j + 1] - s1[j + 1] ** 2 / (j + 1)
    for m in range(1, k):
        for jj in range(m, n):
            i = np.arange(m, jj + 1)
            cnt = jj - i + 1
            seg = (s2[jj + 1] - s2[i]) - (s1[jj + 1] - s1[i]) ** 2 / cnt
            tot = cost[m - 1, i - 1] + seg
            best = int(np.argmin(tot))
            cost[m, jj] = tot[best]
            back[m, jj] = i[best]
    starts = [0] * k
    jj = n - 1
    for m in range(k - 1, 0, -1):
        starts[m] = int(back[m, jj])
        jj = starts[m] - 1
    return np.array(starts, dtype=np.int64)


def build_tree(X, y, mtry, min_leaf, max_depth, keys):
    """Grow one CART classification tree with Gini splits.

    Children are numbered as they are created, expanding left subtrees first;
    node ``t`` draws its candidate features from the ordering of ``keys[t]``.
    Returns ``(feature, threshold, left, right, value)`` arrays; leaves have
    feature -1 and ``value`` is the leaf's positive fraction.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, p = X.shape
    feature, threshold, left, right, value = [], [], [], [], []
    # stack holds (node_id, row indices, depth)
    stack = [(0, np.arange(n), 0)]
    next_id = 1
    for _ in range(2 * n):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
    while stack:
        node, rows, depth = stack.pop()
        ny = y[rows]
        npos = int(ny.sum())
        nn = rows.size
        value[node] = npos / nn
        if npos == 0 or npos == nn or nn < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        perm = np.argsort(keys[node], kind="stable")
        cand = np.sort(perm[:mtry])
        rest = np.sort(perm[mtry:])
        best = _best_split(X, ny, rows, cand, min_leaf)
        if best is None and rest.size:
            best = _best_split(X, ny, rows, rest, min_leaf)
        if best is None:
            continue
        f, thr = best
        go_left = X[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        lid = next_id
        rid = next_id + 1
        next_id += 2
        left[node] = lid
        right[node] = rid
        # LIFO: the left child is expanded first
        stack.append((rid, rows[~go_left], depth + 1))
        stack.append((lid, rows[go_left], depth + 1))
    size = next_id
    return (
        np.array(feature[:size], dtype=np.int64),
        np.array(threshold[:size]),
        np.array(left[:size], dtype=np.int64),
        np.array(right[:size], dtype=np.int64),
        np.array(value[:size]),
    )


def _best_split(X, ny, rows, feats, min_leaf):
    best_score = -np.inf
    best = None
    nn = rows.size
    npos = float(ny.sum())
    for f in feats:
        xv = X[rows, f]
        o = np.argsort(xv, kind="stable")
        xs = xv[o]
        ys = ny[o]
        nl = np.arange(1, nn, dtype=np.float64)
        nr = nn - nl
        pl = np.cumsum(ys)[:-1].astype(np.float64)
        pr = npos - pl
        ql = nl - pl
        qr = nr - pr
        score = (pl * pl + ql * ql) / nl + (pr * pr + qr * qr) / nr
        ok = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        score = np.where(ok, score, -np.inf)
        k = int(np.argmax(score))
        if score[k] > best_score:
            best_score = score[k]
            thr = (xs[k] + xs[k + 1]) / 2.0
            if thr >= xs[k + 1]:  # adjacent floats
                thr = xs[k]
            best = (int(f), thr)
    return best


def predict_tree(X, feature, threshold, left, right, value):
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        nd = node[idx]
        go_left = X[idx, feature[nd]] <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return value[node]


def cd_sweep(Xt, y, v, eta, w, b0, L, active, lam, alpha):
    """One cyclic coordinate-descent sweep (intercept, then coefficients).

    Each coordinate step minimises the quadratic majoriser of the logistic
    loss with curvature bound ``L[j]``, so the objective cannot increase.
    ``eta`` and ``w`` are updated in place; the new intercept is returned.
    """
    g = np.dot(v, expit(eta) - y)
    step = g / 0.25
    b0 -= step
    eta -= step
    l1 = lam * alpha
    l2 = lam * (1.0 - alpha)
    for j in range(w.size):
        if not active[j]:
            continue
        xj = Xt[j]
        g = np.dot(v * xj, expit(eta) - y)
        u = L[j] * w[j] - g
        new = np.sign(u) * max(abs(u) - l1, 0.0) / (L[j] + l2)
        d = new - w[j]
        if d != 0.0:
            eta += d * xj
            w[j] = new
    return b0
