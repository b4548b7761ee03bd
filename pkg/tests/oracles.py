"""Independent reference computations for the tests.

Nothing here calls the solvers under test; only raw network arrays are read.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


def incidence_of(n, tail, head):
    A = np.zeros((n, len(tail)))
    A[tail, np.arange(len(tail))] = 1.0
    A[head, np.arange(len(tail))] = -1.0
    return A


def kkt_flow(n, tail, head, w, p):
    """DC flow as the energy minimizer: min sum f^2 / w s.t. A f = p.

    Solved from the KKT system; links with zero weight carry no flow.
    """
    w = np.asarray(w, float)
    A = incidence_of(n, tail, head)
    act = w > 0
    Aa = A[:, act]
    m = int(act.sum())
    K = np.block([[np.diag(1.0 / w[act]), -Aa.T], [Aa, np.zeros((n, n))]])
    rhs = np.concatenate([np.zeros(m), p])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    f = np.zeros(len(w))
    f[act] = sol[:m]
    return f


def net_flow(net, w=None, p=None):
    return kkt_flow(net.n_nodes, np.asarray(net.tail), np.asarray(net.head),
                    net.w if w is None else w, net.p if p is None else p)


def fd_jacobian(net, w=None, rel=1e-6):
    w = np.array(net.w if w is None else w, float)
    J = np.zeros((net.n_links, net.n_links))
    for j in range(net.n_links):
        h = rel * max(abs(w[j]), 1e-3)
        wp, wm = w.copy(), w.copy()
        wp[j] += h
        wm[j] -= h
        J[:, j] = (net_flow(net, wp) - net_flow(net, wm)) / (2 * h)
    return J


def lp_pair_margin(net, f0, s, t):
    """max mu: A g = mu (e_s - e_t) / 2 with cl - f0 <= g <= cu - f0."""
    n, m = net.n_nodes, net.n_links
    A = incidence_of(n, np.asarray(net.tail), np.asarray(net.head))
    d = np.zeros(n)
    d[s], d[t] = 0.5, -0.5
    c = np.zeros(m + 1)
    c[-1] = -1.0
    Aeq = np.hstack([A, -d[:, None]])
    bounds = [(net.cl[i] - f0[i], net.cu[i] - f0[i]) for i in range(m)] + [(0, None)]
    r = linprog(c, A_eq=Aeq, b_eq=np.zeros(n), bounds=bounds, method="highs")
    return r.x[-1] if r.status == 0 else (np.inf if r.status == 3 else np.nan)


def lp_margin(net, f0, pairs=None):
    if pairs is None:
        pairs = itertools.permutations(range(net.n_nodes), 2)
    return min(lp_pair_margin(net, f0, s, t) for s, t in pairs)


def parallel_alpha_grid2(wl, wu, c, k=201):
    """Grid search of max over (w1, w2) of the largest transfer through two parallel links."""
    g1, g2 = np.meshgrid(np.linspace(wl[0], wu[0], k), np.linspace(wl[1], wu[1], k), indexing="ij")
    S = g1 + g2
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.minimum(np.where(g1 > 0, c[0] * S / g1, np.inf), np.where(g2 > 0, c[1] * S / g2, np.inf))
    a[S == 0] = 0.0
    return float(np.nanmax(a))


def parallel_alpha_zoom(wl, wu, c, k=21, rounds=14):
    """Zooming grid search for the parallel transfer with any number of links."""
    wl, wu, c = (np.asarray(x, float) for x in (wl, wu, c))
    n = len(c)

    def val(W):
        S = W.sum(1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(W > 0, c * S / W, np.inf)
        return r.min(1)

    lo, hi = wl.copy(), wu.copy()
    best, wbest = -np.inf, None
    for _ in range(rounds):
        axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
        W = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
        v = val(W)
        i = int(np.argmax(v))
        if v[i] > best:
            best, wbest = v[i], W[i]
        span = (hi - lo) / 4
        lo, hi = np.maximum(wl, wbest - span), np.minimum(wu, wbest + span)
    return float(best)


def series_cap_grid(cap1, lo1, hi1, cap2, lo2, hi2, x, k=4001):
    """max over w1 of min(cap1(w1), cap2(w2)) with 1/w1 + 1/w2 = 1/x."""
    w1 = np.linspace(lo1, hi1, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        w2 = 1.0 / (1.0 / x - 1.0 / w1)
    ok = (w2 >= lo2 * (1 - 1e-12)) & (w2 <= hi2 * (1 + 1e-12)) & (w1 > x)
    if not np.any(ok):
        return np.nan
    w2c = np.clip(w2[ok], lo2, hi2)
    v = np.minimum(cap1(w1[ok]), cap2(w2c))
    j = int(np.argmax(v))
    # refine around the best sample
    a, b = w1[ok][max(j - 1, 0)], w1[ok][min(j + 1, ok.sum() - 1)]
    w1f = np.linspace(a, b, k)
    w2f = np.clip(1.0 / (1.0 / x - 1.0 / w1f), lo2, hi2)
    return float(max(v[j], np.minimum(cap1(w1f), cap2(w2f)).max()))


def parallel_cap_grid(cap1, lo1, hi1, cap2, lo2, hi2, x, k=4001):
    """max over w1 + w2 = x of the transfer limited by each part's capacity."""
    a, b = max(lo1, x - hi2), min(hi1, x - lo2)
    if a > b:
        return np.nan

    def val(w1):
        w2 = x - w1
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.minimum(cap1(w1) * x / w1, cap2(w2) * x / w2)

    w1 = np.linspace(a, b, k)
    v = val(w1)
    j = int(np.argmax(v))
    lo, hi = w1[max(j - 1, 0)], w1[min(j + 1, k - 1)]
    return float(max(v[j], val(np.linspace(lo, hi, k)).max()))


def two_terminal_capacity_grid(n, tail, head, wl, wu, c, s, t, k=21, chunk=200000):
    """Max over a k^m weight grid of the s-t transfer before some link saturates."""
    m = len(tail)
    A = incidence_of(n, tail, head)
    keep = [v for v in range(n) if v != t]
    Ar = A[keep]
    p = np.zeros(n)
    p[s], p[t] = 1.0, -1.0
    pr = p[keep]
    axes = [np.linspace(a, b, k) for a, b in zip(wl, wu)]
    idx = np.indices([k] * m).reshape(m, -1).T
    best, diffs = -np.inf, np.zeros(m)
    vals = np.empty(len(idx))
    for start in range(0, len(idx), chunk):
        I = idx[start:start + chunk]
        W = np.stack([axes[j][I[:, j]] for j in range(m)], 1)
        L = np.einsum("ik,bk,jk->bij", Ar, W, Ar)
        phi = np.linalg.solve(L, np.broadcast_to(pr, (len(W), len(pr)))[..., None])[..., 0]
        F = W * (phi @ Ar)
        vals[start:start + len(W)] = (c / np.abs(F)).min(1)
    V = vals.reshape([k] * m)
    best = float(V.max())
    for j in range(m):
        diffs[j] = np.abs(np.diff(V, axis=j)).max()
    return best, diffs
