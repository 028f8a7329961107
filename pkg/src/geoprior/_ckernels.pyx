# cython: language_level=3
"""Compiled hot kernels. Signatures mirror ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

NAME = "cython"

cdef int DR[8]
cdef int DC[8]
cdef unsigned char CODES[8]
DR[:] = [0, 1, 1, 1, 0, -1, -1, -1]
DC[:] = [1, 1, 0, -1, -1, -1, 0, 1]
CODES[:] = [1, 2, 4, 8, 16, 32, 64, 128]
cdef double SQRT2 = 1.4142135623730951


# ---------------------------------------------------------------------------
# binary min-heap keyed on (z, idx)

cdef struct HeapItem:
    double z
    Py_ssize_t idx

cdef inline bint _less(HeapItem a, HeapItem b) noexcept nogil:
    return a.z < b.z or (a.z == b.z and a.idx < b.idx)

cdef inline void _push(HeapItem* h, Py_ssize_t* size, HeapItem item) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _less(item, h[parent]):
            h[i] = h[parent]
            i = parent
        else:
            break
    h[i] = item

cdef inline HeapItem _pop(HeapItem* h, Py_ssize_t* size) noexcept nogil:
    cdef HeapItem top = h[0]
    cdef HeapItem last
    cdef Py_ssize_t i = 0, child, n
    size[0] -= 1
    n = size[0]
    if n == 0:
        return top
    last = h[n]
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and _less(h[child + 1], h[child]):
            child += 1
        if _less(h[child], last):
            h[i] = h[child]
            i = child
        else:
            break
    h[i] = last
    return top


cdef cnp.ndarray _edge_cells(const unsigned char[:, :] valid):
    cdef Py_ssize_t nrows = valid.shape[0], ncols = valid.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] edge = np.zeros((nrows, ncols), dtype=np.uint8)
    cdef Py_ssize_t r, c, rr, cc
    cdef int k
    for r in range(nrows):
        for c in range(ncols):
            if not valid[r, c]:
                continue
            for k in range(8):
                rr = r + DR[k]
                cc = c + DC[k]
                if rr < 0 or rr >= nrows or cc < 0 or cc >= ncols or not valid[rr, cc]:
                    edge[r, c] = 1
                    break
    return edge


def priority_flood(z, valid, double eps):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.array(z, dtype=np.float64, copy=True)
    cdef const unsigned char[:, :] vmask = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef Py_ssize_t nrows = out.shape[0], ncols = out.shape[1]
    cdef Py_ssize_t ncell = nrows * ncols
    cdef double[::1] flat = out.reshape(-1)
    cdef unsigned char[:, :] edge = _edge_cells(vmask)
    cdef unsigned char[::1] seen = np.ascontiguousarray(
        1 - np.asarray(vmask).reshape(-1), dtype=np.uint8)
    cdef HeapItem* heap = <HeapItem*> malloc(max(ncell, 1) * sizeof(HeapItem))
    cdef Py_ssize_t size = 0, r, c, rr, cc, n, idx
    cdef HeapItem item, cur
    cdef int k
    if heap == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(nrows):
                for c in range(ncols):
                    if edge[r, c]:
                        idx = r * ncols + c
                        seen[idx] = 1
                        item.z = flat[idx]
                        item.idx = idx
                        _push(heap, &size, item)
            while size > 0:
                cur = _pop(heap, &size)
                r = cur.idx // ncols
                c = cur.idx - r * ncols
                for k in range(8):
                    rr = r + DR[k]
                    cc = c + DC[k]
                    if rr < 0 or rr >= nrows or cc < 0 or cc >= ncols:
                        continue
                    n = rr * ncols + cc
                    if seen[n]:
                        continue
                    seen[n] = 1
                    if flat[n] <= cur.z:
                        flat[n] = cur.z + eps
                    item.z = flat[n]
                    item.idx = n
                    _push(heap, &size, item)
    finally:
        free(heap)
    return out


def d8_directions(z, valid, double cellsize):
    cdef const double[:, :] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef const unsigned char[:, :] vmask = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef Py_ssize_t nrows = zz.shape[0], ncols = zz.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] dirs = np.zeros((nrows, ncols), dtype=np.uint8)
    cdef unsigned char[:, :] edge = _edge_cells(vmask)
    cdef double dist[8]
    cdef double best, s
    cdef int k, bk
    cdef Py_ssize_t r, c, rr, cc
    for k in range(8):
        dist[k] = cellsize * SQRT2 if (DR[k] != 0 and DC[k] != 0) else cellsize * 1.0
    for r in range(nrows):
        for c in range(ncols):
            if not vmask[r, c]:
                continue
            best = -INFINITY
            bk = -1
            for k in range(8):
                rr = r + DR[k]
                cc = c + DC[k]
                if rr < 0 or rr >= nrows or cc < 0 or cc >= ncols or not vmask[rr, cc]:
                    continue
                s = (zz[r, c] - zz[rr, cc]) / dist[k]
                if s > best:
                    best = s
                    bk = k
            if bk >= 0 and best > 0.0:
                dirs[r, c] = CODES[bk]
            elif not edge[r, c]:
                raise ValueError(
                    f"unfilled depression at row {r}, col {c}: no lower neighbour")
    return dirs


cdef inline Py_ssize_t _receiver(unsigned char code, Py_ssize_t idx, Py_ssize_t ncols) noexcept nogil:
    cdef int k
    for k in range(8):
        if code == CODES[k]:
            return idx + DR[k] * ncols + DC[k]
    return -1


def topological_order(dirs, valid):
    cdef const unsigned char[::1] d = np.ascontiguousarray(dirs, dtype=np.uint8).reshape(-1)
    cdef const unsigned char[::1] v = np.ascontiguousarray(valid, dtype=np.uint8).reshape(-1)
    cdef Py_ssize_t ncols = np.shape(dirs)[1]
    cdef Py_ssize_t n = d.shape[0], i, r, head = 0, tail = 0, nvalid = 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] recv_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] indeg_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] recv = recv_arr
    cdef cnp.int64_t[::1] indeg = indeg_arr
    cdef cnp.int64_t[::1] order = order_arr
    with nogil:
        for i in range(n):
            recv[i] = _receiver(d[i], i, ncols)
            if recv[i] >= 0:
                indeg[recv[i]] += 1
        for i in range(n):
            if v[i]:
                nvalid += 1
                if indeg[i] == 0:
                    order[tail] = i
                    tail += 1
        while head < tail:
            i = order[head]
            head += 1
            r = recv[i]
            if r >= 0:
                indeg[r] -= 1
                if indeg[r] == 0:
                    order[tail] = r
                    tail += 1
    if tail != nvalid:
        raise ValueError("flow directions contain a cycle")
    return order_arr[:tail].copy()


def accumulate(dirs, order, weights, wvalid):
    cdef const unsigned char[::1] d = np.ascontiguousarray(dirs, dtype=np.uint8).reshape(-1)
    cdef Py_ssize_t ncols = np.shape(dirs)[1]
    cdef const cnp.int64_t[::1] o = np.ascontiguousarray(order, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const unsigned char[::1] wv = np.ascontiguousarray(wvalid, dtype=np.uint8)
    cdef Py_ssize_t n = d.shape[0], i, c, r
    cdef cnp.ndarray[cnp.float64_t, ndim=1] acc_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok_arr = np.ones(n, dtype=np.uint8)
    cdef double[::1] acc = acc_arr
    cdef unsigned char[::1] ok = ok_arr
    with nogil:
        for i in range(o.shape[0]):
            c = o[i]
            r = _receiver(d[c], c, ncols)
            if r >= 0:
                acc[r] += acc[c] + w[c]
                ok[r] = ok[r] & ok[c] & wv[c]
    return acc_arr, ok_arr


def dominance_counts(a, b):
    """Self-inclusive 2-D dominance counts via sort-by-a and a Fenwick tree.

    Equal-a blocks are inserted in full before any member is queried, so ties
    on either axis count inclusively.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    cdef const cnp.int64_t[::1] order = np.argsort(av, kind="stable").astype(np.int64)
    _, inv = np.unique(np.asarray(b, dtype=np.float64), return_inverse=True)
    cdef const cnp.int64_t[::1] rank = np.ascontiguousarray(inv, dtype=np.int64).reshape(-1)
    cdef Py_ssize_t m = int(np.max(inv)) + 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tree_arr = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] tree = tree_arr
    cdef cnp.int64_t[::1] out = out_arr
    cdef const double[::1] aa = av
    cdef Py_ssize_t i = 0, j, k, pos
    cdef cnp.int64_t total
    with nogil:
        while i < n:
            j = i
            while j < n and aa[order[j]] == aa[order[i]]:
                j += 1
            for k in range(i, j):
                pos = rank[order[k]] + 1
                while pos <= m:
                    tree[pos] += 1
                    pos += pos & (-pos)
            for k in range(i, j):
                pos = rank[order[k]] + 1
                total = 0
                while pos > 0:
                    total += tree[pos]
                    pos -= pos & (-pos)
                out[order[k]] = total
            i = j
    return out_arr


def jenks_dp(x, int k):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.asarray(x, dtype=np.float64)
    xs = xs - xs.mean()
    cdef Py_ssize_t n = xs.shape[0], i, jj, m
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s1a = np.concatenate(([0.0], np.cumsum(xs)))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s2a = np.concatenate(([0.0], np.cumsum(xs * xs)))
    cdef double[::1] s1 = s1a
    cdef double[::1] s2 = s2a
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cost_arr = np.full((k, n), np.inf)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] back_arr = np.zeros((k, n), dtype=np.int64)
    cdef double[:, ::1] cost = cost_arr
    cdef cnp.int64_t[:, ::1] back = back_arr
    cdef double seg, tot, best, d1
    cdef cnp.int64_t bi
    with nogil:
        for jj in range(n):
            cost[0, jj] = s2[jj + 1] - s1[jj + 1] * s1[jj + 1] / (jj + 1)
        for m in range(1, k):
            for jj in range(m, n):
                best = INFINITY
                bi = m
                for i in range(m, jj + 1):
                    d1 = s1[jj + 1] - s1[i]
                    seg = (s2[jj + 1] - s2[i]) - d1 * d1 / (jj - i + 1)
                    tot = cost[m - 1, i - 1] + seg
                    if tot < best:
                        best = tot
                        bi = i
                cost[m, jj] = best
                back[m, jj] = bi
    starts = [0] * k
    jj = n - 1
    for m in range(k - 1, 0, -1):
        starts[m] = int(back[m, jj])
        jj = starts[m] - 1
    return np.array(starts, dtype=np.int64)


# ---------------------------------------------------------------------------
# CART

cdef struct Pair:
    double x
    long y
    Py_ssize_t row

cdef int _cmp_pair(const void* a, const void* b) noexcept nogil:
    cdef double xa = (<Pair*> a).x, xb = (<Pair*> b).x
    cdef Py_ssize_t ra = (<Pair*> a).row, rb = (<Pair*> b).row
    if xa < xb:
        return -1
    if xa > xb:
        return 1
    # stable on original position
    return -1 if ra < rb else (1 if ra > rb else 0)

from libc.stdlib cimport qsort


cdef int _split_feature(const double[:, ::1] X, const cnp.int64_t[::1] y,
                        cnp.int64_t* rows, Py_ssize_t nn, Py_ssize_t npos,
                        Py_ssize_t f, Py_ssize_t min_leaf, Pair* buf,
                        double* out_score, double* out_thr) noexcept nogil:
    cdef Py_ssize_t i
    cdef double pl = 0.0, nl, nr, pr, ql, qr, score, best = -INFINITY, thr = 0.0
    cdef int found = 0
    for i in range(nn):
        buf[i].x = X[rows[i], f]
        buf[i].y = y[rows[i]]
        buf[i].row = i
    qsort(buf, nn, sizeof(Pair), _cmp_pair)
    for i in range(nn - 1):
        pl += buf[i].y
        nl = i + 1.0
        nr = nn - nl
        if not (buf[i + 1].x > buf[i].x) or nl < min_leaf or nr < min_leaf:
            continue
        pr = npos - pl
        ql = nl - pl
        qr = nr - pr
        score = (pl * pl + ql * ql) / nl + (pr * pr + qr * qr) / nr
        if score > best:
            best = score
            thr = (buf[i].x + buf[i + 1].x) / 2.0
            if thr >= buf[i + 1].x:
                thr = buf[i].x
            found = 1
    out_score[0] = best
    out_thr[0] = thr
    return found


def build_tree(X, y, int mtry, Py_ssize_t min_leaf, int max_depth, keys):
    cdef const double[:, ::1] XX = np.ascontiguousarray(X, dtype=np.float64)
    cdef const cnp.int64_t[::1] yy = np.ascontiguousarray(y, dtype=np.int64)
    cdef const double[:, ::1] kk = np.ascontiguousarray(keys, dtype=np.float64)
    cdef Py_ssize_t n = XX.shape[0], p = XX.shape[1]
    cdef Py_ssize_t cap = 2 * n
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    cdef cnp.int64_t[::1] feat_v = feature
    cdef double[::1] thr_v = threshold
    cdef cnp.int64_t[::1] left_v = left
    cdef cnp.int64_t[::1] right_v = right
    cdef double[::1] val_v = value
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rows_arr = np.arange(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tmp_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t* rows = &rows_arr[0] if n > 0 else NULL
    cdef cnp.int64_t* tmp = &tmp_arr[0] if n > 0 else NULL
    # stack of (node, start, end, depth) segments over ``rows``
    cdef cnp.ndarray[cnp.int64_t, ndim=2] stack_arr = np.empty((cap + 1, 4), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] stack = stack_arr
    cdef Pair* buf = <Pair*> malloc(max(n, 1) * sizeof(Pair))
    cdef Py_ssize_t sp = 0, node, start, end, depth, nn, npos, i, f, nl, next_id = 1
    cdef Py_ssize_t best_f, lid, rid
    cdef double score, thr, best_score, best_thr
    cdef int t
    if buf == NULL:
        raise MemoryError()
    try:
        stack[0, 0] = 0
        stack[0, 1] = 0
        stack[0, 2] = n
        stack[0, 3] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp, 0]
            start = stack[sp, 1]
            end = stack[sp, 2]
            depth = stack[sp, 3]
            nn = end - start
            npos = 0
            for i in range(start, end):
                npos += yy[rows[i]]
            val_v[node] = npos / <double> nn
            if npos == 0 or npos == nn or nn < 2 * min_leaf:
                continue
            if max_depth >= 0 and depth >= max_depth:
                continue
            perm = np.argsort(np.asarray(kk[node]), kind="stable")
            best_f = -1
            best_score = -INFINITY
            best_thr = 0.0
            for t in range(2):
                cand = np.sort(perm[:mtry]) if t == 0 else np.sort(perm[mtry:])
                for f in cand:
                    if _split_feature(XX, yy, rows + start, nn, npos, f, min_leaf,
                                      buf, &score, &thr):
                        if score > best_score:
                            best_score = score
                            best_thr = thr
                            best_f = f
                if best_f >= 0:
                    break
            if best_f < 0:
                continue
            # stable partition of rows[start:end]
            nl = 0
            for i in range(start, end):
                if XX[rows[i], best_f] <= best_thr:
                    tmp[nl] = rows[i]
                    nl += 1
            f = nl
            for i in range(start, end):
                if not (XX[rows[i], best_f] <= best_thr):
                    tmp[f] = rows[i]
                    f += 1
            for i in range(nn):
                rows[start + i] = tmp[i]
            feat_v[node] = best_f
            thr_v[node] = best_thr
            lid = next_id
            rid = next_id + 1
            next_id += 2
            left_v[node] = lid
            right_v[node] = rid
            stack[sp, 0] = rid
            stack[sp, 1] = start + nl
            stack[sp, 2] = end
            stack[sp, 3] = depth + 1
            sp += 1
            stack[sp, 0] = lid
            stack[sp, 1] = start
            stack[sp, 2] = start + nl
            stack[sp, 3] = depth + 1
            sp += 1
    finally:
        free(buf)
    return (feature[:next_id].copy(), threshold[:next_id].copy(), left[:next_id].copy(),
            right[:next_id].copy(), value[:next_id].copy())


def predict_tree(X, feature, threshold, left, right, value):
    cdef const double[:, ::1] XX = np.ascontiguousarray(X, dtype=np.float64)
    cdef const cnp.int64_t[::1] fv = np.ascontiguousarray(feature, dtype=np.int64)
    cdef const double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const cnp.int64_t[::1] lv = np.ascontiguousarray(left, dtype=np.int64)
    cdef const cnp.int64_t[::1] rv = np.ascontiguousarray(right, dtype=np.int64)
    cdef const double[::1] vv = np.ascontiguousarray(value, dtype=np.float64)
    cdef Py_ssize_t n = XX.shape[0], i, node
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            node = 0
            while fv[node] >= 0:
                if XX[i, fv[node]] <= tv[node]:
                    node = lv[node]
                else:
                    node = rv[node]
            o[i] = vv[node]
    return out


# ---------------------------------------------------------------------------
# elastic-net logistic coordinate descent

cdef inline double _sigmoid(double t) noexcept nogil:
    cdef double e
    if t >= 0:
        return 1.0 / (1.0 + exp(-t))
    e = exp(t)
    return e / (1.0 + e)


def cd_sweep(Xt, y, v, eta, w, double b0, L, active, double lam, double alpha):
    cdef const double[:, ::1] XX = np.ascontiguousarray(Xt, dtype=np.float64)
    cdef const double[::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[::1] ee = eta
    cdef double[::1] ww = w
    cdef const double[::1] LL = np.ascontiguousarray(L, dtype=np.float64)
    cdef const unsigned char[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef Py_ssize_t n = yy.shape[0], p = ww.shape[0], i, j
    cdef double g, step, u, new, d, mag
    cdef double l1 = lam * alpha, l2 = lam * (1.0 - alpha)
    with nogil:
        g = 0.0
        for i in range(n):
            g += vv[i] * (_sigmoid(ee[i]) - yy[i])
        step = g / 0.25
        b0 -= step
        for i in range(n):
            ee[i] -= step
        for j in range(p):
            if not act[j]:
                continue
            g = 0.0
            for i in range(n):
                g += vv[i] * XX[j, i] * (_sigmoid(ee[i]) - yy[i])
            u = LL[j] * ww[j] - g
            mag = fabs(u) - l1
            if mag > 0.0:
                new = (mag if u > 0 else -mag) / (LL[j] + l2)
            else:
                new = 0.0
            d = new - ww[j]
            if d != 0.0:
                for i in range(n):
                    ee[i] += d * XX[j, i]
                ww[j] = new
    return b0
