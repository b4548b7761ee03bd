"""Random instance generators shared by the tests."""

from __future__ import annotations

import numpy as np

from dcflowctl.netcore import Network


def random_edges(rng, n, m):
    """Connected multigraph edges: a random spanning tree plus m - n + 1 extras."""
    order = rng.permutation(n)
    edges = []
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges.append((a, b) if rng.random() < 0.5 else (b, a))
    while len(edges) < m:
        a, b = rng.choice(n, 2, replace=False)
        edges.append((int(a), int(b)))
    return edges


def random_net(rng, n=None, m=None, *, wl_zero=False, tree=False, cap_scale=None,
               feasible=True) -> Network:
    n = int(rng.integers(3, 11)) if n is None else n
    if tree:
        m = n - 1
    elif m is None:
        m = int(rng.integers(n - 1, min(2 * n, 20) + 1))
    m = max(m, n - 1)
    edges = random_edges(rng, n, m)
    wu = rng.uniform(0.5, 3.0, m)
    wl = np.zeros(m) if wl_zero else wu * rng.uniform(0.2, 1.0, m)
    w = rng.uniform(wl, wu)
    w = np.maximum(w, 1e-3 * wu)
    p = rng.normal(size=n)
    p -= p.mean()
    net = Network(nodes=tuple(range(n)), link_ids=tuple(range(1, m + 1)),
                  tail=[a for a, _ in edges], head=[b for _, b in edges],
                  w=w, wl=np.minimum(wl, w), wu=wu, cl=-np.ones(m), cu=np.ones(m), p=p)
    if feasible:
        from tests.oracles import net_flow
        f = net_flow(net)
        scale = 1.0 if cap_scale is None else cap_scale
        cu = (np.abs(f) + 0.1) * rng.uniform(1.05, 2.0, m) * scale
        cl = -(np.abs(f) + 0.1) * rng.uniform(1.05, 2.0, m) * scale
        net = net.replace(cl=cl, cu=cu)
    return net


def fig1_net(w=(1, 3, 1, 1, 1), p=(1, 0, 0, -1), cu=(1, 1, 1, 0.5, 1)):
    edges = [(1, 2), (1, 3), (2, 4), (3, 4), (3, 2)]
    cu = np.asarray(cu, float)
    return Network.build(edges, w=list(w), wl=list(w), wu=list(w), cu=cu, cl=-cu, p=list(p))
