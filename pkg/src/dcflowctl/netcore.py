"""Network model, Laplacian solve and feasible-flow classification.

A network is a connected multigraph with one weight interval and one
capacity interval per link and a balanced supply-demand vector.  Each link
has a reference orientation (tail -> head); a positive flow runs from tail
to head.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

import numpy as np

BALANCE_TOL = 1e-9
EIG_REL_TOL = 1e-10


class NetworkError(ValueError):
    """Raised when a network or a request on it violates a model invariant."""


def _frozen(x, dtype=float) -> np.ndarray:
    a = np.array(x, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _components(n: int, tails: np.ndarray, heads: np.ndarray) -> int:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    count = n
    for a, b in zip(tails.tolist(), heads.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            count -= 1
    return count


@dataclass(frozen=True)
class Network:
    """Immutable weight-controlled DC network.

    ``tail`` and ``head`` hold node indices (positions in ``nodes``).
    """

    nodes: tuple
    link_ids: tuple
    tail: np.ndarray
    head: np.ndarray
    w: np.ndarray
    wl: np.ndarray
    wu: np.ndarray
    cl: np.ndarray
    cu: np.ndarray
    p: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "nodes", tuple(self.nodes))
        set_(self, "link_ids", tuple(self.link_ids))
        set_(self, "tail", _frozen(self.tail, int))
        set_(self, "head", _frozen(self.head, int))
        for name in ("w", "wl", "wu", "cl", "cu", "p"):
            set_(self, name, _frozen(getattr(self, name)))
        self._validate()

    def _validate(self):
        n, m = len(self.nodes), len(self.link_ids)
        if len(set(self.nodes)) != n:
            raise NetworkError("duplicate node id")
        if len(set(self.link_ids)) != m:
            raise NetworkError("duplicate link id")
        if self.p.shape != (n,):
            raise NetworkError("supply-demand vector has wrong length")
        for name in ("tail", "head", "w", "wl", "wu", "cl", "cu"):
            if getattr(self, name).shape != (m,):
                raise NetworkError(f"link field {name} has wrong length")
        if m and (self.tail.min() < 0 or self.head.min() < 0
                  or max(self.tail.max(), self.head.max()) >= n):
            raise NetworkError("link endpoint is not a node")
        if np.any(self.tail == self.head):
            raise NetworkError("self-loop")
        if abs(self.p.sum()) > BALANCE_TOL * max(np.abs(self.p).sum(), 1e-300) and np.any(self.p):
            raise NetworkError("unbalanced supply-demand")
        if np.any(self.cl >= 0) or np.any(self.cu <= 0):
            raise NetworkError("capacity sign: need cl < 0 < cu")
        if np.any(self.wl < 0) or np.any(self.wu <= 0) or np.any(self.wl > self.wu):
            raise NetworkError("weight bounds: need 0 <= wl <= wu, wu > 0")
        if np.any(self.w < self.wl) or np.any(self.w > self.wu):
            raise NetworkError("weight outside [wl, wu]")
        if n == 0 or _components(n, self.tail, self.head) != 1:
            raise NetworkError("not connected")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_links(self) -> int:
        return len(self.link_ids)

    def node_index(self, node_id: Hashable) -> int:
        try:
            return self.nodes.index(node_id)
        except ValueError:
            # ids given on the command line arrive as strings
            for k, v in enumerate(self.nodes):
                if str(v) == str(node_id):
                    return k
            raise NetworkError(f"unknown node {node_id!r}") from None

    def link_index(self, link_id: Hashable) -> int:
        for k, v in enumerate(self.link_ids):
            if v == link_id or str(v) == str(link_id):
                return k
        raise NetworkError(f"unknown link {link_id!r}")

    def replace(self, **changes: Any) -> "Network":
        fields = dict(nodes=self.nodes, link_ids=self.link_ids, tail=self.tail,
                      head=self.head, w=self.w, wl=self.wl, wu=self.wu,
                      cl=self.cl, cu=self.cu, p=self.p, meta=dict(self.meta))
        fields.update(changes)
        return Network(**fields)

    def with_weights(self, w) -> "Network":
        return self.replace(w=np.asarray(w, float))

    def with_p(self, p) -> "Network":
        return self.replace(p=np.asarray(p, float))

    def in_links(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.head == v)

    def out_links(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.tail == v)

    def is_tree(self) -> bool:
        return self.n_links == self.n_nodes - 1

    @classmethod
    def build(cls, edges: Sequence[tuple], *, w, p, wl=None, wu=None, cl=None, cu=None,
              nodes: Sequence | None = None, link_ids: Sequence | None = None,
              meta: dict | None = None) -> "Network":
        """Convenience constructor from (tail_id, head_id) pairs.

        Missing bounds default to wl = wu = w and cl = -cu = -inf-like large caps.
        """
        if nodes is None:
            seen: list = []
            for a, b in edges:
                for v in (a, b):
                    if v not in seen:
                        seen.append(v)
            nodes = sorted(seen, key=lambda v: (str(type(v)), v))
        nodes = list(nodes)
        pos = {v: k for k, v in enumerate(nodes)}
        m = len(edges)
        w = np.broadcast_to(np.asarray(w, float), (m,)).copy()
        wl = w.copy() if wl is None else np.broadcast_to(np.asarray(wl, float), (m,)).copy()
        wu = w.copy() if wu is None else np.broadcast_to(np.asarray(wu, float), (m,)).copy()
        cu = np.full(m, 1e6) if cu is None else np.broadcast_to(np.asarray(cu, float), (m,)).copy()
        cl = -cu if cl is None else np.broadcast_to(np.asarray(cl, float), (m,)).copy()
        return cls(nodes=tuple(nodes),
                   link_ids=tuple(range(1, m + 1)) if link_ids is None else tuple(link_ids),
                   tail=[pos[a] for a, _ in edges], head=[pos[b] for _, b in edges],
                   w=w, wl=wl, wu=wu, cl=cl, cu=cu, p=np.asarray(p, float), meta=meta or {})


@dataclass(frozen=True)
class FlowState:
    f: np.ndarray
    phi: np.ndarray


def incidence(net: Network) -> np.ndarray:
    """Node-link incidence matrix: +1 at the tail, -1 at the head."""
    A = np.zeros((net.n_nodes, net.n_links))
    cols = np.arange(net.n_links)
    A[net.tail, cols] = 1.0
    A[net.head, cols] = -1.0
    return A


def laplacian(net: Network, w=None) -> np.ndarray:
    """Weighted Laplacian A diag(w) A^T; links with zero weight are inactive."""
    w = net.w if w is None else np.asarray(w, float)
    active = w > 0
    if _components(net.n_nodes, net.tail[active], net.head[active]) != 1:
        raise NetworkError("not connected")
    A = incidence(net)
    return (A * w) @ A.T


def pinv_laplacian(L: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a connected-graph Laplacian via its eigendecomposition."""
    L = 0.5 * (L + L.T)
    lam, V = np.linalg.eigh(L)
    lam_max = max(lam.max(initial=0.0), 0.0)
    zero = lam <= EIG_REL_TOL * lam_max if lam_max > 0 else np.ones_like(lam, bool)
    if zero.sum() > 1:
        raise NetworkError("not connected")
    inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, lam))
    return (V * inv) @ V.T


def solve_flow(net: Network, w=None, p=None) -> FlowState:
    """Flow f = W A^T L^+ p and minimum-norm potential phi = L^+ p."""
    w = net.w if w is None else np.asarray(w, float)
    p = net.p if p is None else np.asarray(p, float)
    Lp = pinv_laplacian(laplacian(net, w))
    phi = Lp @ p
    f = w * (phi[net.tail] - phi[net.head])
    return FlowState(f=f, phi=phi)


def batch_solve(net: Network, W: np.ndarray, p) -> tuple[np.ndarray, np.ndarray]:
    """Flows and potentials (zero at the first node) for a batch of weight rows."""
    W = np.atleast_2d(np.asarray(W, float))
    p = np.asarray(p, float)
    A = incidence(net)
    Ag = A[1:]                                  # ground the first node
    L = np.einsum("im,bm,jm->bij", Ag, W, Ag)
    rhs = np.broadcast_to(p[1:], (W.shape[0], len(p) - 1))[..., None]
    phi = np.linalg.solve(L, rhs)[..., 0]
    return W * (phi @ Ag), np.concatenate([np.zeros((W.shape[0], 1)), phi], axis=1)


def batch_flows(net: Network, W: np.ndarray, p) -> np.ndarray:
    """Flows for a batch of weight vectors (rows of W)."""
    return batch_solve(net, W, p)[0]


def flow_bound_check(net: Network, f=None, p=None, rtol: float = 1e-9) -> bool:
    """Check |f_i| <= ||p||_1 / 2 on every link."""
    p = net.p if p is None else np.asarray(p, float)
    f = solve_flow(net, p=p).f if f is None else np.asarray(f, float)
    bound = 0.5 * np.abs(p).sum()
    return bool(np.all(np.abs(f) <= bound * (1 + rtol) + 1e-12))


def _shortest_cycle(net: Network, g: np.ndarray, tol: float):
    """Shortest directed cycle in the flow-oriented graph, as (links, signs)."""
    m = net.n_links
    src = np.where(g > 0, net.tail, net.head)
    dst = np.where(g > 0, net.head, net.tail)
    live = np.abs(g) > tol
    adj: dict[int, list[int]] = {}
    for i in np.flatnonzero(live):
        adj.setdefault(int(src[i]), []).append(int(i))
    best = None
    for i in np.flatnonzero(live):
        start, goal = int(dst[i]), int(src[i])
        prev = {start: None}
        dq = deque([start])
        while dq and goal not in prev:
            u = dq.popleft()
            for k in adj.get(u, ()):
                if k == i:
                    continue
                v = int(dst[k])
                if v not in prev:
                    prev[v] = k
                    dq.append(v)
        if goal not in prev:
            continue
        path = [int(i)]
        v = goal
        while prev[v] is not None:
            k = prev[v]
            path.append(k)
            v = int(src[k])
        if best is None or len(path) < len(best):
            best = path
            if len(best) == 2:
                break
    return best if m else None


def remove_circulations(net: Network, f, tol: float = 1e-12) -> np.ndarray:
    """Cancel directed cycles of f until none remain.

    The result has the same divergence as f, |out_i| <= |f_i| and no sign flips.
    """
    g = np.array(f, dtype=float, copy=True)
    scale = max(np.abs(g).max(initial=0.0), 1.0)
    thr = tol * scale
    while True:
        cyc = _shortest_cycle(net, g, thr)
        if cyc is None:
            break
        mags = np.abs(g[cyc])
        t = mags.min()
        s = np.sign(g[cyc])
        g[cyc] -= s * t
        # the bottleneck link is cleared exactly
        g[np.asarray(cyc)[mags - t <= thr]] = 0.0
    return g


def has_circulation(net: Network, f, tol: float = 1e-12) -> bool:
    scale = max(np.abs(np.asarray(f, float)).max(initial=0.0), 1.0)
    return _shortest_cycle(net, np.asarray(f, float), tol * scale) is not None


def _potential_witness(net: Network, f: np.ndarray, tol: float):
    """Find phi with w_i = f_i / (phi_tail - phi_head) in [wl_i, wu_i].

    Difference constraints x_head - x_tail <= b solved by Bellman-Ford; returns
    (w, phi) or None.  Zero-flow links need a zero drop unless wl_i = 0.
    """
    n = net.n_nodes
    cons = []  # (a, b, c): phi[b] - phi[a] <= c
    for i in range(net.n_links):
        a, b, fi = int(net.tail[i]), int(net.head[i]), float(f[i])
        lo_w, hi_w = float(net.wl[i]), float(net.wu[i])
        if abs(fi) <= tol:
            if lo_w > 0:
                cons += [(a, b, 0.0), (b, a, 0.0)]
            continue
        # d = phi_a - phi_b must satisfy |fi|/hi_w <= sign(fi) d <= |fi|/lo_w
        dmin = abs(fi) / hi_w
        dmax = abs(fi) / lo_w if lo_w > 0 else np.inf
        if fi > 0:
            cons.append((a, b, -dmin))
            if np.isfinite(dmax):
                cons.append((b, a, dmax))
        else:
            cons.append((b, a, -dmin))
            if np.isfinite(dmax):
                cons.append((a, b, dmax))
    # phi[b] - phi[a] <= c  <=>  edge a -> b of length c
    dist = np.zeros(n)
    slack = tol * max(1.0, max((abs(c) for *_, c in cons), default=1.0))
    for _ in range(n + 1):
        changed = False
        for a, b, c in cons:
            if dist[a] + c < dist[b] - slack:
                dist[b] = dist[a] + c
                changed = True
        if not changed:
            break
    else:
        return None
    if changed:
        return None
    phi = dist - dist.mean()
    d = phi[net.tail] - phi[net.head]
    w = np.where(np.abs(f) > tol, np.divide(f, d, out=np.zeros_like(f), where=np.abs(d) > 0), net.wl)
    w = np.clip(w, net.wl, net.wu)
    return w, phi


@dataclass(frozen=True)
class FeasibilityReport:
    in_F0: bool
    in_F1: bool
    in_F2: bool
    witness_w: np.ndarray | None = None


def feasibility_class(net: Network, f=None, tol: float = 1e-9) -> FeasibilityReport:
    """Membership of a flow in the acyclic, network-flow and DC-feasible sets."""
    f = solve_flow(net).f if f is None else np.asarray(f, float)
    A = incidence(net)
    scale = max(1.0, np.abs(net.p).max(initial=0.0))
    conserves = np.abs(A @ f - net.p).max(initial=0.0) <= tol * scale
    within = bool(np.all(f >= net.cl - tol * scale) and np.all(f <= net.cu + tol * scale))
    in_F1 = bool(conserves and within)
    in_F0 = not has_circulation(net, f, tol)
    witness = None
    if not in_F1:
        in_F2 = False
    elif net.is_tree():
        in_F2 = True
    else:
        res = _potential_witness(net, f, tol * max(1.0, np.abs(f).max(initial=0.0)))
        in_F2 = res is not None
        if res is not None:
            witness = res[0]
    return FeasibilityReport(in_F0=in_F0, in_F1=in_F1, in_F2=bool(in_F2), witness_w=witness)
