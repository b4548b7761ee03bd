"""Flow sensitivity to link weights."""

from __future__ import annotations

import numpy as np

from dcflowctl.netcore import Network, NetworkError, incidence, laplacian, pinv_laplacian, solve_flow

ZERO_TOL = 1e-10


def jacobian(net: Network, w=None, p=None) -> np.ndarray:
    """Matrix J with J[k, i] = d f_k / d w_i at weight w and load p.

    J = (I - W A^T L^+ A) diag(A^T L^+ p).
    """
    w = net.w if w is None else np.asarray(w, float)
    p = net.p if p is None else np.asarray(p, float)
    A = incidence(net)
    Lp = pinv_laplacian(laplacian(net, w))
    drop = A.T @ (Lp @ p)                    # potential drop per link
    P = (w[:, None] * A.T) @ Lp @ A          # W A^T L^+ A
    return (np.eye(net.n_links) - P) * drop[None, :]


def jacobian_fd(net: Network, w=None, p=None, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian, step rel_step * w_i."""
    w = net.w if w is None else np.asarray(w, float)
    m = net.n_links
    J = np.empty((m, m))
    for i in range(m):
        h = rel_step * w[i]
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        J[:, i] = (solve_flow(net, wp, p).f - solve_flow(net, wm, p).f) / (2 * h)
    return J


def column_sign_check(net: Network, i: int, w=None, p=None, J=None, tol: float = 1e-9) -> dict:
    """Check the sign pattern of column i of the Jacobian around link i.

    With u = tail(i) and v = head(i), links in {i} + in(u) + out(v) move with
    sign(f_i) or not at all, links in out(u) + in(v) (other than i) move with
    -sign(f_i) or not at all.
    """
    if J is None:
        J = jacobian(net, w, p)
    f = solve_flow(net, w, p).f
    col = J[:, i]
    scale = max(np.abs(col).max(initial=0.0), 1.0)
    s = np.sign(f[i]) if abs(f[i]) > tol * max(1.0, np.abs(f).max()) else 0.0
    u, v = int(net.tail[i]), int(net.head[i])
    pos = {i} | set(net.in_links(u).tolist()) | set(net.out_links(v).tolist())
    neg = (set(net.out_links(u).tolist()) | set(net.in_links(v).tolist())) - {i}
    bad = []
    for k in sorted(pos):
        sk = np.sign(col[k]) if abs(col[k]) > tol * scale else 0.0
        if sk not in (s, 0.0):
            bad.append(k)
    for k in sorted(neg):
        sk = np.sign(col[k]) if abs(col[k]) > tol * scale else 0.0
        if sk not in (-s, 0.0):
            bad.append(k)
    return {"ok": not bad, "violations": bad, "positive": sorted(pos), "negative": sorted(neg)}


def finite_weight_delta(net: Network, i: int, dw: float, w=None, p=None) -> np.ndarray:
    """Exact flow change when w_i is lowered by dw (rank-one update).

    Returns f(w - dw e_i) - f(w).  Removing a bridge disconnects the network
    and raises NetworkError.
    """
    w = net.w if w is None else np.asarray(w, float)
    p = net.p if p is None else np.asarray(p, float)
    if not 0 < dw <= w[i]:
        raise NetworkError("need 0 < dw <= w_i")
    A = incidence(net)
    Lp = pinv_laplacian(laplacian(net, w))
    a = A[:, i]
    La = Lp @ a
    theta = dw * (a @ La)
    if abs(1.0 - theta) < 1e-9:
        raise NetworkError("bridge removal disconnects the network")
    phi = Lp @ p
    dphi = dw * (a @ phi) / (1.0 - theta) * La
    w_new = w.copy()
    w_new[i] -= dw
    df = w_new * (A.T @ dphi)
    df[i] -= dw * (a @ phi)
    return df
