"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

Two kernels dominate runtime: the exact linear quantile regression solver
(refit for every Gamma on the grid, per arm and per fold) and probability
tree growing (forest tuning grid times cross-fitting folds).  Both flavours
implement the same algorithm with the same random streams, so a forest grown
on either path is identical and quantile fits land on the same vertex.

Use the dispatchers at the bottom; the flavour is picked by
:func:`gammacal._accel.use_numba`.
"""

import numpy as np

from ._accel import njit, use_numba

MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

QR_OPTIMAL = 0
QR_PIVOT_LIMIT = 1
QR_NO_BASIS = 2


# ---------------------------------------------------------------------------
# splitmix64 stream (shared by both flavours)
# ---------------------------------------------------------------------------

def _mix_py(z):
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class _SplitMix:
    __slots__ = ("state",)

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next(self):
        self.state = (self.state + _GOLDEN) & MASK64
        return _mix_py(self.state)

    def below(self, m):
        return self.next() % m


def tree_seed(seed, tree):
    """Per-tree stream seed derived from (forest seed, tree index)."""
    return _mix_py((int(seed) ^ ((int(tree) + 1) * _GOLDEN)) & MASK64)


@njit
def _mix_nb(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


@njit
def _next_nb(state):
    s = state[0] + np.uint64(_GOLDEN)
    state[0] = s
    return _mix_nb(s)


@njit
def _below_nb(state, m):
    return np.int64(_next_nb(state) % np.uint64(m))


# ---------------------------------------------------------------------------
# Linear quantile regression: MM/IRLS on a smoothed check loss, then
# Barrodale-Roberts style vertex exchange to the exact LP optimum.
# ---------------------------------------------------------------------------

@njit
def _irls_basis_nb(X, y, tau, max_irls, basis):
    n, k = X.shape
    ys = np.sort(y)
    iqr = ys[(3 * (n - 1)) // 4] - ys[(n - 1) // 4]
    h = 1e-4 * iqr
    if h <= 0.0:
        h = 1e-4 * (ys[n - 1] - ys[0])
    if h <= 0.0:
        h = 1e-12

    A = X.T @ X
    for j in range(k):
        A[j, j] += 1e-10 * (1.0 + A[j, j])
    beta = np.linalg.solve(A, X.T @ y)
    lin = (2.0 * tau - 1.0) / 2.0
    colsum = np.zeros(k)
    for i in range(n):
        for j in range(k):
            colsum[j] += X[i, j]
    r = np.empty(n)
    for it in range(max_irls):
        A = np.zeros((k, k))
        b = lin * colsum
        for i in range(n):
            ri = y[i]
            for a in range(k):
                ri -= X[i, a] * beta[a]
            wi = 1.0 / (2.0 * max(abs(ri), h))
            for a in range(k):
                xa = wi * X[i, a]
                b[a] += xa * y[i]
                for c in range(a, k):
                    A[a, c] += xa * X[i, c]
        for a in range(k):
            for c in range(a):
                A[a, c] = A[c, a]
        new = np.linalg.solve(A, b)
        step = 0.0
        size = 0.0
        for j in range(k):
            step = max(step, abs(new[j] - beta[j]))
            size = max(size, abs(new[j]))
        beta = new
        if step < 1e-9 * (1.0 + size):
            break

    for i in range(n):
        ri = y[i]
        for a in range(k):
            ri -= X[i, a] * beta[a]
        r[i] = abs(ri)
    order = np.argsort(r, kind="mergesort")
    Q = np.zeros((k, k))
    cnt = 0
    for o in range(n):
        idx = order[o]
        v = X[idx].copy()
        nx = np.sqrt(np.sum(v * v))
        for _ in range(2):
            for j in range(cnt):
                v = v - np.dot(Q[j], v) * Q[j]
        nv = np.sqrt(np.sum(v * v))
        if nv > 1e-9 * nx:
            Q[cnt] = v / nv
            basis[cnt] = idx
            cnt += 1
            if cnt == k:
                break
    return beta, cnt == k


@njit
def _exchange_nb(X, y, tau, basis, max_pivots):
    n, k = X.shape
    yscale = 0.0
    for i in range(n):
        yscale = max(yscale, abs(y[i]))
    rtol = 1e-11 * (1.0 + yscale)
    isbasic = np.zeros(n, dtype=np.bool_)
    for j in range(k):
        isbasic[basis[j]] = True
    status = QR_PIVOT_LIMIT
    pivots = 0
    bp_t = np.empty(n)
    bp_v = np.empty(n)
    bp_i = np.empty(n, dtype=np.int64)
    XB = np.empty((k, k))
    yB = np.empty(k)
    Z = np.empty((n, k))
    r = np.empty(n)
    beta = np.zeros(k)
    for pivots in range(max_pivots + 1):
        for j in range(k):
            XB[j] = X[basis[j]]
            yB[j] = y[basis[j]]
        beta = np.linalg.solve(XB, yB)
        Binv = np.linalg.inv(XB)
        G = np.zeros(k)
        Hp = np.zeros(k)
        Hm = np.zeros(k)
        for i in range(n):
            ri = y[i]
            for a in range(k):
                ri -= X[i, a] * beta[a]
            r[i] = ri
            for c in range(k):
                z = 0.0
                for a in range(k):
                    z += X[i, a] * Binv[a, c]
                Z[i, c] = z
            if isbasic[i]:
                continue
            if abs(ri) > rtol:
                psi = tau if ri > 0.0 else tau - 1.0
                for j in range(k):
                    G[j] += psi * Z[i, j]
            else:
                for j in range(k):
                    z = Z[i, j]
                    if z > 0.0:
                        Hp[j] += tau * z
                        Hm[j] += (1.0 - tau) * z
                    else:
                        Hp[j] -= (1.0 - tau) * z
                        Hm[j] -= tau * z
        best = -1e-10
        bj = -1
        bs = 0.0
        for j in range(k):
            dp = G[j] + Hp[j] + tau
            dm = -G[j] + Hm[j] + 1.0 - tau
            if dp < best:
                best = dp
                bj = j
                bs = 1.0
            if dm < best:
                best = dm
                bj = j
                bs = -1.0
        if bj < 0:
            status = QR_OPTIMAL
            break
        if pivots == max_pivots:
            break
        # ratio test along the descent edge
        m = 0
        for i in range(n):
            if isbasic[i]:
                continue
            ri = r[i]
            if abs(ri) <= rtol:
                continue
            v = bs * Z[i, bj]
            if ri * v < 0.0:
                bp_t[m] = -ri / v
                bp_v[m] = abs(v)
                bp_i[m] = i
                m += 1
        if m == 0:
            return beta, pivots, QR_NO_BASIS
        ordr = np.argsort(bp_t[:m], kind="mergesort")
        slope = best
        enter = -1
        for q in range(m):
            slope += bp_v[ordr[q]]
            if slope >= 0.0:
                enter = bp_i[ordr[q]]
                break
        if enter < 0:
            return beta, pivots, QR_NO_BASIS
        isbasic[basis[bj]] = False
        basis[bj] = enter
        isbasic[enter] = True
    return beta, pivots, status


@njit
def _qr_numba(X, y, tau, max_irls, max_pivots):
    basis = np.empty(X.shape[1], dtype=np.int64)
    beta, ok = _irls_basis_nb(X, y, tau, max_irls, basis)
    if not ok:
        return beta, 0, QR_NO_BASIS
    return _exchange_nb(X, y, tau, basis, max_pivots)


@njit
def _qr_path_numba(X, y, taus, max_irls, max_pivots):
    """Fits for increasing ``taus``, each warm-started from the previous vertex."""
    k = X.shape[1]
    betas = np.zeros((taus.shape[0], k))
    status = np.zeros(taus.shape[0], dtype=np.int64)
    basis = np.empty(k, dtype=np.int64)
    have = False
    for q in range(taus.shape[0]):
        if not have:
            b0, ok = _irls_basis_nb(X, y, taus[q], max_irls, basis)
            if not ok:
                betas[q] = b0
                status[q] = QR_NO_BASIS
                continue
        beta, piv, st = _exchange_nb(X, y, taus[q], basis, max_pivots)
        if st == QR_NO_BASIS:
            # restart cold once before giving up
            b0, ok = _irls_basis_nb(X, y, taus[q], max_irls, basis)
            if ok:
                beta, piv, st = _exchange_nb(X, y, taus[q], basis, max_pivots)
            else:
                beta = b0
        have = st != QR_NO_BASIS
        betas[q] = beta
        status[q] = st
    return betas, status


def _irls_basis_np(X, y, tau, max_irls):
    n, k = X.shape
    ys = np.sort(y)
    iqr = ys[(3 * (n - 1)) // 4] - ys[(n - 1) // 4]
    h = 1e-4 * iqr
    if h <= 0.0:
        h = 1e-4 * (ys[-1] - ys[0])
    if h <= 0.0:
        h = 1e-12

    A = X.T @ X
    A[np.diag_indices(k)] += 1e-10 * (1.0 + np.diag(A))
    beta = np.linalg.solve(A, X.T @ y)
    lin = (2.0 * tau - 1.0) / 2.0
    colsum = X.sum(axis=0)
    for _ in range(max_irls):
        r = y - X @ beta
        w = 1.0 / (2.0 * np.maximum(np.abs(r), h))
        Xw = X * w[:, None]
        new = np.linalg.solve(Xw.T @ X, Xw.T @ y + lin * colsum)
        done = np.max(np.abs(new - beta)) < 1e-9 * (1.0 + np.max(np.abs(new)))
        beta = new
        if done:
            break

    r = y - X @ beta
    order = np.argsort(np.abs(r), kind="mergesort")
    basis = []
    Q = np.zeros((k, k))
    for idx in order:
        v = X[idx].copy()
        nx = np.sqrt(np.sum(v * v))
        c = len(basis)
        for _ in range(2):
            for j in range(c):
                v = v - np.dot(Q[j], v) * Q[j]
        nv = np.sqrt(np.sum(v * v))
        if nv > 1e-9 * nx:
            Q[c] = v / nv
            basis.append(idx)
            if len(basis) == k:
                break
    return beta, np.array(basis, dtype=np.int64)


def _exchange_np(X, y, tau, basis, max_pivots):
    n, k = X.shape
    rtol = 1e-11 * (1.0 + np.max(np.abs(y)))
    isbasic = np.zeros(n, dtype=bool)
    isbasic[basis] = True
    status = QR_PIVOT_LIMIT
    pivots = 0
    beta = np.zeros(k)
    for pivots in range(max_pivots + 1):
        XB = X[basis]
        beta = np.linalg.solve(XB, y[basis])
        Z = X @ np.linalg.inv(XB)
        r = y - X @ beta
        nb = ~isbasic
        moving = nb & (np.abs(r) > rtol)
        still = nb & ~moving
        psi = np.where(r > 0.0, tau, tau - 1.0)
        G = (psi[moving, None] * Z[moving]).sum(axis=0)
        Zs = Z[still]
        Hp = np.where(Zs > 0.0, tau * Zs, -(1.0 - tau) * Zs).sum(axis=0)
        Hm = np.where(Zs > 0.0, (1.0 - tau) * Zs, -tau * Zs).sum(axis=0)
        dp = G + Hp + tau
        dm = -G + Hm + 1.0 - tau
        # interleave (j,+),(j,-) so ties resolve in the same order as the loop
        both = np.empty(2 * k)
        both[0::2] = dp
        both[1::2] = dm
        pos = int(np.argmin(both))
        if not both[pos] < -1e-10:
            status = QR_OPTIMAL
            break
        if pivots == max_pivots:
            break
        best = both[pos]
        bj = pos // 2
        bs = 1.0 if pos % 2 == 0 else -1.0
        v = bs * Z[:, bj]
        cand = np.flatnonzero(moving & (r * v < 0.0))
        if cand.size == 0:
            return beta, pivots, QR_NO_BASIS
        t = -r[cand] / v[cand]
        ordr = np.argsort(t, kind="mergesort")
        slope = best + np.cumsum(np.abs(v[cand][ordr]))
        hit = np.flatnonzero(slope >= 0.0)
        if hit.size == 0:
            return beta, pivots, QR_NO_BASIS
        enter = cand[ordr[hit[0]]]
        isbasic[basis[bj]] = False
        basis[bj] = enter
        isbasic[enter] = True
    return beta, pivots, status


def _qr_numpy(X, y, tau, max_irls, max_pivots):
    beta, basis = _irls_basis_np(X, y, tau, max_irls)
    if basis.size < X.shape[1]:
        return beta, 0, QR_NO_BASIS
    return _exchange_np(X, y, tau, basis, max_pivots)


def _qr_path_numpy(X, y, taus, max_irls, max_pivots):
    k = X.shape[1]
    betas = np.zeros((len(taus), k))
    status = np.zeros(len(taus), dtype=np.int64)
    basis = None
    for q, tau in enumerate(taus):
        if basis is None:
            b0, basis = _irls_basis_np(X, y, tau, max_irls)
            if basis.size < k:
                betas[q] = b0
                status[q] = QR_NO_BASIS
                basis = None
                continue
        beta, _, st = _exchange_np(X, y, tau, basis, max_pivots)
        if st == QR_NO_BASIS:
            b0, basis = _irls_basis_np(X, y, tau, max_irls)
            if basis.size == k:
                beta, _, st = _exchange_np(X, y, tau, basis, max_pivots)
            else:
                beta = b0
        if st == QR_NO_BASIS:
            basis = None
        betas[q] = beta
        status[q] = st
    return betas, status


# ---------------------------------------------------------------------------
# Probability trees: Gini splits on mtry random features, min leaf size.
# Packed layout per tree: feature (-1 for leaves), threshold, left, right,
# value (fraction of ones in the leaf).
# ---------------------------------------------------------------------------

@njit
def _grow_tree_nb(X, y, rows, mtry, min_node, seed, feat, thr, left, right, value):
    p = X.shape[1]
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    m = rows.shape[0]
    idx = rows.copy()
    buf = np.empty(m, dtype=np.int64)
    perm = np.empty(p, dtype=np.int64)
    vals = np.empty(m)
    ysub = np.empty(m)
    st_node = np.empty(2 * m + 1, dtype=np.int64)
    st_lo = np.empty(2 * m + 1, dtype=np.int64)
    st_hi = np.empty(2 * m + 1, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        cnt = hi - lo
        pos = 0.0
        for a in range(lo, hi):
            pos += y[idx[a]]
        value[node] = pos / cnt
        feat[node] = -1
        if cnt < 2 * min_node or pos == 0.0 or pos == cnt:
            continue
        parent = pos * (cnt - pos) / cnt
        for f in range(p):
            perm[f] = f
        for f in range(mtry):
            s = f + _below_nb(state, p - f)
            tmp = perm[f]
            perm[f] = perm[s]
            perm[s] = tmp
        best = parent - 1e-12
        bf = -1
        bthr = 0.0
        for q in range(mtry):
            f = perm[q]
            for a in range(cnt):
                vals[a] = X[idx[lo + a], f]
            order = np.argsort(vals[:cnt], kind="mergesort")
            for a in range(cnt):
                ysub[a] = y[idx[lo + order[a]]]
            pl = 0.0
            for i in range(1, cnt - min_node + 1):
                pl += ysub[i - 1]
                if i < min_node:
                    continue
                va = vals[order[i - 1]]
                vb = vals[order[i]]
                if not va < vb:
                    continue
                nl = float(i)
                nr = float(cnt - i)
                pr = pos - pl
                imp = pl * (nl - pl) / nl + pr * (nr - pr) / nr
                if imp < best:
                    best = imp
                    bf = f
                    bthr = va + 0.5 * (vb - va)
        if bf < 0:
            continue
        nl = 0
        nr = 0
        for a in range(lo, hi):
            r = idx[a]
            if X[r, bf] <= bthr:
                idx[lo + nl] = r
                nl += 1
            else:
                buf[nr] = r
                nr += 1
        for a in range(nr):
            idx[lo + nl + a] = buf[a]
        feat[node] = bf
        thr[node] = bthr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        st_node[top] = rnode
        st_lo[top] = lo + nl
        st_hi[top] = hi
        top += 1
        st_node[top] = lnode
        st_lo[top] = lo
        st_hi[top] = lo + nl
        top += 1
    return n_nodes


@njit
def _subsample_nb(n, m, seed):
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    perm = np.arange(n)
    for a in range(m):
        s = a + _below_nb(state, n - a)
        tmp = perm[a]
        perm[a] = perm[s]
        perm[s] = tmp
    return perm[:m].copy(), state[0]


@njit
def _honest_values_nb(X, y, est, feat, thr, left, right, value, n_nodes):
    """Refill node values from the estimation rows; empty nodes inherit the parent's."""
    tot = np.zeros(n_nodes)
    cnt = np.zeros(n_nodes)
    for r in range(est.shape[0]):
        i = est[r]
        node = 0
        while True:
            tot[node] += y[i]
            cnt[node] += 1.0
            if feat[node] < 0:
                break
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
    if cnt[0] > 0:
        value[0] = tot[0] / cnt[0]
    for node in range(n_nodes):
        if feat[node] >= 0:
            for child in (left[node], right[node]):
                if cnt[child] > 0:
                    value[child] = tot[child] / cnt[child]
                else:
                    value[child] = value[node]


@njit
def _grow_forest_nb(X, y, seeds, m, mtry, min_node, honest):
    T = seeds.shape[0]
    n = X.shape[0]
    M = 2 * m + 1
    feat = np.full((T, M), -1, dtype=np.int64)
    thr = np.zeros((T, M))
    left = np.zeros((T, M), dtype=np.int64)
    right = np.zeros((T, M), dtype=np.int64)
    value = np.zeros((T, M))
    sizes = np.zeros(T, dtype=np.int64)
    for t in range(T):
        rows, st = _subsample_nb(n, m, seeds[t])
        m1 = m // 2 if honest and m >= 2 else m
        sizes[t] = _grow_tree_nb(X, y, rows[:m1].copy(), mtry, min_node, st,
                                 feat[t], thr[t], left[t], right[t], value[t])
        if m1 < m:
            _honest_values_nb(X, y, rows[m1:], feat[t], thr[t], left[t], right[t],
                              value[t], sizes[t])
    return feat, thr, left, right, value, sizes


@njit
def _predict_forest_nb(X, feat, thr, left, right, value):
    n = X.shape[0]
    T = feat.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for t in range(T):
            node = 0
            while feat[t, node] >= 0:
                if X[i, feat[t, node]] <= thr[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            acc += value[t, node]
        out[i] = acc / T
    return out


def _subsample_py(n, m, seed):
    rng = _SplitMix(seed)
    perm = np.arange(n)
    for a in range(m):
        s = a + rng.below(n - a)
        perm[a], perm[s] = perm[s], perm[a]
    return perm[:m].copy(), rng.state


def _grow_tree_py(X, y, rows, mtry, min_node, seed, feat, thr, left, right, value):
    p = X.shape[1]
    rng = _SplitMix(seed)
    idx = rows.copy()
    stack = [(0, 0, rows.shape[0])]
    n_nodes = 1
    while stack:
        node, lo, hi = stack.pop()
        cnt = hi - lo
        sub = idx[lo:hi]
        ynode = y[sub]
        pos = float(ynode.sum())
        value[node] = pos / cnt
        feat[node] = -1
        if cnt < 2 * min_node or pos == 0.0 or pos == cnt:
            continue
        parent = pos * (cnt - pos) / cnt
        perm = list(range(p))
        for f in range(mtry):
            s = f + rng.below(p - f)
            perm[f], perm[s] = perm[s], perm[f]
        best = parent - 1e-12
        bf = -1
        bthr = 0.0
        i = np.arange(min_node, cnt - min_node + 1)
        nl = i.astype(np.float64)
        nr = (cnt - i).astype(np.float64)
        for f in perm[:mtry]:
            vals = X[sub, f]
            order = np.argsort(vals, kind="mergesort")
            vs = vals[order]
            pl = np.cumsum(ynode[order])[i - 1]
            pr = pos - pl
            imp = pl * (nl - pl) / nl + pr * (nr - pr) / nr
            ok = vs[i - 1] < vs[i] if i.size else np.zeros(0, dtype=bool)
            imp = np.where(ok, imp, np.inf)
            if imp.size == 0:
                continue
            a = int(np.argmin(imp))
            if imp[a] < best:
                best = imp[a]
                bf = f
                va, vb = vs[i[a] - 1], vs[i[a]]
                bthr = va + 0.5 * (vb - va)
        if bf < 0:
            continue
        goes_left = X[sub, bf] <= bthr
        nlc = int(goes_left.sum())
        idx[lo:hi] = np.concatenate([sub[goes_left], sub[~goes_left]])
        feat[node] = bf
        thr[node] = bthr
        lnode, rnode = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, lo + nlc, hi))
        stack.append((lnode, lo, lo + nlc))
    return n_nodes


def _honest_values_py(X, y, est, feat, thr, left, right, value, n_nodes):
    tot = np.zeros(n_nodes)
    cnt = np.zeros(n_nodes)
    node = np.zeros(est.size, dtype=np.int64)
    active = np.ones(est.size, dtype=bool)
    while active.any():
        np.add.at(tot, node[active], y[est[active]])
        np.add.at(cnt, node[active], 1.0)
        f = feat[node]
        inner = active & (f >= 0)
        a = np.flatnonzero(inner)
        go_left = X[est[a], f[a]] <= thr[node[a]]
        node[a] = np.where(go_left, left[node[a]], right[node[a]])
        active = inner
    if cnt[0] > 0:
        value[0] = tot[0] / cnt[0]
    for nd in range(n_nodes):
        if feat[nd] >= 0:
            for child in (left[nd], right[nd]):
                value[child] = tot[child] / cnt[child] if cnt[child] > 0 else value[nd]


def _grow_forest_py(X, y, seeds, m, mtry, min_node, honest):
    T = len(seeds)
    n = X.shape[0]
    M = 2 * m + 1
    feat = np.full((T, M), -1, dtype=np.int64)
    thr = np.zeros((T, M))
    left = np.zeros((T, M), dtype=np.int64)
    right = np.zeros((T, M), dtype=np.int64)
    value = np.zeros((T, M))
    sizes = np.zeros(T, dtype=np.int64)
    for t in range(T):
        rows, st = _subsample_py(n, m, int(seeds[t]))
        m1 = m // 2 if honest and m >= 2 else m
        sizes[t] = _grow_tree_py(X, y, rows[:m1].copy(), mtry, min_node, st,
                                 feat[t], thr[t], left[t], right[t], value[t])
        if m1 < m:
            _honest_values_py(X, y, rows[m1:], feat[t], thr[t], left[t], right[t],
                              value[t], sizes[t])
    return feat, thr, left, right, value, sizes


def _predict_forest_py(X, feat, thr, left, right, value):
    n = X.shape[0]
    rows = np.arange(n)
    acc = np.zeros(n)
    for t in range(feat.shape[0]):
        node = np.zeros(n, dtype=np.int64)
        active = feat[t, node] >= 0
        while active.any():
            a = rows[active]
            nd = node[a]
            f = feat[t, nd]
            go_left = X[a, f] <= thr[t, nd]
            node[a] = np.where(go_left, left[t, nd], right[t, nd])
            active = feat[t, node] >= 0
        acc += value[t, node]
    return acc / feat.shape[0]


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------

def quantile_fit(X, y, tau, max_irls=5, max_pivots=None):
    """Exact check-loss minimiser; ``X`` already carries the intercept column.

    Returns ``(beta, pivots, status)``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if max_pivots is None:
        max_pivots = 50 * X.shape[0] + 100
    if use_numba():
        return _qr_numba(X, y, float(tau), int(max_irls), int(max_pivots))
    return _qr_numpy(X, y, float(tau), int(max_irls), int(max_pivots))


def quantile_path(X, y, taus, max_irls=5, max_pivots=None):
    """Exact fits for a sorted vector of ``taus`` sharing one design.

    Returns ``(betas, status)`` with one row per tau.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    taus = np.ascontiguousarray(taus, dtype=np.float64)
    if max_pivots is None:
        max_pivots = 50 * X.shape[0] + 100
    if use_numba():
        return _qr_path_numba(X, y, taus, int(max_irls), int(max_pivots))
    return _qr_path_numpy(X, y, taus, int(max_irls), int(max_pivots))


def grow_forest(X, y, seeds, m, mtry, min_node, honest=False):
    """Packed forest arrays; with ``honest`` each tree splits on the first half
    of its subsample and takes leaf values from the second half."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    seeds = np.asarray(seeds, dtype=np.uint64)
    if use_numba():
        return _grow_forest_nb(X, y, seeds, int(m), int(mtry), int(min_node), bool(honest))
    return _grow_forest_py(X, y, seeds, int(m), int(mtry), int(min_node), bool(honest))


def predict_forest(X, feat, thr, left, right, value):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if use_numba():
        return _predict_forest_nb(X, feat, thr, left, right, value)
    return _predict_forest_py(X, feat, thr, left, right, value)
