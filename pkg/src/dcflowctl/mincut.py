"""Max-flow/min-cut margins on the associated flow network.

For a base flow f0 each undirected link becomes two arcs: tail -> head with
capacity cu - f0 and head -> tail with capacity f0 - cl.  Pushing extra
flow along a path keeps the link inside its capacity interval exactly when
the path respects these residual capacities.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from dcflowctl.netcore import Network, NetworkError, solve_flow

BISECT_RTOL = 1e-8


@dataclass(frozen=True)
class AssocFlowNet:
    n: int
    src: np.ndarray       # arc tails
    dst: np.ndarray       # arc heads
    cap: np.ndarray
    link: np.ndarray      # originating link per arc
    forward: np.ndarray   # True when the arc follows the link orientation


def assoc_flow_net(net: Network, f0=None, tol: float = 1e-12) -> AssocFlowNet:
    f0 = solve_flow(net).f if f0 is None else np.asarray(f0, float)
    fwd = net.cu - f0
    rev = f0 - net.cl
    scale = max(1.0, np.abs(f0).max(initial=0.0))
    if np.any(fwd < -tol * scale) or np.any(rev < -tol * scale):
        raise NetworkError("base flow violates capacities")
    m = net.n_links
    return AssocFlowNet(
        n=net.n_nodes,
        src=np.concatenate([net.tail, net.head]),
        dst=np.concatenate([net.head, net.tail]),
        cap=np.maximum(np.concatenate([fwd, rev]), 0.0),
        link=np.concatenate([np.arange(m), np.arange(m)]),
        forward=np.concatenate([np.ones(m, bool), np.zeros(m, bool)]),
    )


class _Residual:
    """Adjacency-list residual graph for Edmonds-Karp."""

    def __init__(self, n: int):
        self.n = n
        self.head: list[int] = []
        self.cap: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(n)]

    def add(self, u: int, v: int, c: float) -> int:
        k = len(self.head)
        self.head += [v, u]
        self.cap += [float(c), 0.0]
        self.adj[u].append(k)
        self.adj[v].append(k + 1)
        return k

    def maxflow(self, s: int, t: int, eps: float = 0.0) -> float:
        total = 0.0
        head, cap, adj = self.head, self.cap, self.adj
        while True:
            prev = [-1] * self.n
            prev[s] = -2
            dq = deque([s])
            while dq and prev[t] == -1:
                u = dq.popleft()
                for k in adj[u]:
                    v = head[k]
                    if prev[v] == -1 and cap[k] > eps:
                        prev[v] = k
                        dq.append(v)
            if prev[t] == -1:
                return total
            bottleneck = np.inf
            v = t
            while v != s:
                k = prev[v]
                bottleneck = min(bottleneck, cap[k])
                v = head[k ^ 1]
            v = t
            while v != s:
                k = prev[v]
                cap[k] -= bottleneck
                cap[k ^ 1] += bottleneck
                v = head[k ^ 1]
            total += bottleneck

    def reachable(self, s: int, eps: float = 0.0) -> np.ndarray:
        seen = np.zeros(self.n, bool)
        seen[s] = True
        dq = deque([s])
        while dq:
            u = dq.popleft()
            for k in self.adj[u]:
                v = self.head[k]
                if not seen[v] and self.cap[k] > eps:
                    seen[v] = True
                    dq.append(v)
        return seen


def _residual_of(afn: AssocFlowNet, extra_nodes: int = 0) -> _Residual:
    g = _Residual(afn.n + extra_nodes)
    for u, v, c in zip(afn.src.tolist(), afn.dst.tolist(), afn.cap.tolist()):
        g.add(u, v, c)
    return g


def min_cut(afn: AssocFlowNet, s: int, t: int) -> tuple[float, np.ndarray]:
    """Max-flow value from s to t and the source side of a minimum cut.

    The source side is the set reachable from s in the final residual graph,
    which is the unique inclusion-minimal minimum cut.
    """
    if s == t:
        raise NetworkError("source equals sink")
    g = _residual_of(afn)
    eps = 1e-15 * max(1.0, afn.cap.max(initial=0.0))
    val = g.maxflow(s, t, eps)
    return val, np.flatnonzero(g.reachable(s, eps))


def _supersource_flow(afn: AssocFlowNet, delta: np.ndarray, mu: float) -> float:
    n = afn.n
    g = _residual_of(afn, 2)
    S, T = n, n + 1
    for v in range(n):
        if delta[v] > 0:
            g.add(S, v, mu * delta[v])
        elif delta[v] < 0:
            g.add(v, T, -mu * delta[v])
    eps = 1e-15 * max(1.0, afn.cap.max(initial=0.0), mu)
    return g.maxflow(S, T, eps)


def nu0(net: Network, delta, f0=None, afn: AssocFlowNet | None = None) -> float:
    """Largest mu with f0 + (a flow carrying mu * delta) inside the capacities.

    This is the margin of a network-flow (weight-free) system along delta.
    """
    delta = np.asarray(delta, float)
    afn = assoc_flow_net(net, f0) if afn is None else afn
    pos = np.flatnonzero(delta > 0)
    neg = np.flatnonzero(delta < 0)
    if len(pos) == 0:
        raise NetworkError("disturbance direction must be nonzero")
    if len(pos) == 1 and len(neg) == 1:
        val, _ = min_cut(afn, int(pos[0]), int(neg[0]))
        return val / delta[pos[0]]
    need = delta[pos].sum()

    def feasible(mu):
        return _supersource_flow(afn, delta, mu) >= mu * need * (1 - 1e-12)

    # upper bracket: start from the smallest pair cut, grow until infeasible
    hi = 2.0 * min(min_cut(afn, int(a), int(b))[0] for a in pos for b in neg)
    hi = max(hi, 1e-12)
    lo = 0.0
    it = 0
    while feasible(hi):
        lo, hi = hi, 2.0 * hi
        it += 1
        if it > 200:
            return np.inf
    while hi - lo > BISECT_RTOL * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class MarginReport:
    nu_star: float
    kind: str                 # exact_tree | exact_wl_zero | upper_bound
    cut: tuple                # source-side node ids of the binding cut
    delta: tuple              # (source id, sink id) of the binding direction
    alpha_plus_bound: float | None = None
    alpha_minus_bound: float | None = None


def _pair_margin(net: Network, f0, pairs=None):
    afn = assoc_flow_net(net, f0)
    best = (np.inf, None, None)
    n = net.n_nodes
    for s, t in (pairs if pairs is not None else permutations(range(n), 2)):
        val, side = min_cut(afn, s, t)
        if 2 * val < best[0]:
            best = (2 * val, (s, t), side)
    return best


def margin(net: Network, f0=None, support_only: bool = False) -> MarginReport:
    """Margin of robustness from min cuts over unit source-sink directions.

    The value is exact on trees and when every lower weight bound is zero;
    otherwise it upper-bounds the weight-controlled margin.  With
    support_only, directions are restricted to nodes of nonzero injection.
    """
    f0 = solve_flow(net).f if f0 is None else np.asarray(f0, float)
    if net.is_tree():
        kind = "exact_tree"
    elif np.all(net.wl == 0):
        kind = "exact_wl_zero"
    else:
        kind = "upper_bound"
    pairs = None
    if support_only:
        sup = np.flatnonzero(net.p != 0)
        pairs = list(permutations(sup.tolist(), 2))
    if kind == "exact_tree" and not support_only:
        # every unit direction between adjacent nodes is binding on a tree
        res = np.minimum(net.cu - f0, f0 - net.cl)
        i = int(np.argmin(res))
        nu = 2.0 * float(res[i])
        if net.cu[i] - f0[i] <= f0[i] - net.cl[i]:
            s, t = int(net.tail[i]), int(net.head[i])
        else:
            s, t = int(net.head[i]), int(net.tail[i])
        _, side = min_cut(assoc_flow_net(net, f0), s, t)
    else:
        nu, (s, t), side = _pair_margin(net, f0, pairs)
    ap, am = multiplicative_bounds(net, f0)
    return MarginReport(nu_star=nu, kind=kind,
                        cut=tuple(net.nodes[k] for k in side),
                        delta=(net.nodes[s], net.nodes[t]),
                        alpha_plus_bound=ap, alpha_minus_bound=am)


def multiplicative_bounds(net: Network, f0=None) -> tuple[float, float]:
    """Bounds on the largest up- and down-scaling factors of the load.

    Scaling p0 by alpha is the disturbance (alpha - 1) p0, so alpha_plus is at
    most 1 + nu0(d) / ||p0||_1 with d = p0 / ||p0||_1 and alpha_minus is at
    most nu0(-d) / ||p0||_1 - 1.
    """
    f0 = solve_flow(net).f if f0 is None else np.asarray(f0, float)
    norm = np.abs(net.p).sum()
    if norm == 0:
        return np.inf, np.inf
    d = net.p / norm
    afn = assoc_flow_net(net, f0)
    return 1.0 + nu0(net, d, afn=afn) / norm, nu0(net, -d, afn=afn) / norm - 1.0
