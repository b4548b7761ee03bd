import numpy as np
from hypothesis import given, settings, strategies as st

from dcflowctl.netcore import Network, feasibility_class, flow_bound_check, incidence, remove_circulations, solve_flow
from dcflowctl.reduction import PiecewiseCapacity, compose_parallel, compose_series, equivalent_weight, \
    find_reduction, is_valid_reduction, reduce_and_check, s0_check, tree_reduce
from tests.helpers import random_net

seeds = st.integers(0, 2**32 - 1)
SETTINGS = settings(max_examples=60, deadline=None)


def series_parallel(rng, steps):
    """Random two-terminal series-parallel multigraph between nodes 0 and 1."""
    edges = [(0, 1)]
    n = 2
    for _ in range(steps):
        k = int(rng.integers(len(edges)))
        a, b = edges[k]
        if rng.random() < 0.5:
            edges[k] = (a, n)
            edges.append((n, b))
            n += 1
        else:
            edges.append((a, b))
    if rng.random() < 0.5:            # a dangling path with no injection
        edges.append((int(rng.integers(n)), n))
        n += 1
    return n, edges


@SETTINGS
@given(seeds)
def test_flow_bound(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng, feasible=False)
    assert flow_bound_check(net)
    f = solve_flow(net).f
    assert np.abs(f).max() <= 0.5 * np.abs(net.p).sum() * (1 + 1e-9)


@SETTINGS
@given(seeds)
def test_dc_flow_has_no_circulation(seed):
    net = random_net(np.random.default_rng(seed))
    rep = feasibility_class(net)
    assert rep.in_F0 and rep.in_F2


@SETTINGS
@given(seeds)
def test_circulation_removal(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng, feasible=False)
    A = incidence(net)
    f = solve_flow(net).f
    # add a random circulation from the cycle space of the incidence matrix
    _, s, vt = np.linalg.svd(A)
    null = vt[int((s > 1e-9).sum()):]
    if len(null):
        f = f + 3 * rng.normal(size=len(null)) @ null
    g = remove_circulations(net, f)
    assert np.abs(A @ g - A @ f).max() < 1e-9 * max(1.0, np.abs(f).max())
    assert np.all(np.abs(g) <= np.abs(f) + 1e-12)
    assert np.all(g * f >= -1e-12)
    assert feasibility_class(net.replace(cl=-np.full(net.n_links, 1e9), cu=np.full(net.n_links, 1e9)), g).in_F0
    np.testing.assert_allclose(remove_circulations(net, g), g)


@SETTINGS
@given(seeds)
def test_equivalent_weight_monotone(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng, feasible=False)
    s, t = rng.choice(net.n_nodes, 2, replace=False)
    a, b = net.nodes[s], net.nodes[t]
    h0 = equivalent_weight(net, a, b)
    w = net.w * (1 + rng.uniform(0, 1, net.n_links) * (rng.random(net.n_links) < 0.5))
    assert equivalent_weight(net, a, b, w) >= h0 * (1 - 1e-10)
    # scaling all weights scales H
    assert abs(equivalent_weight(net, a, b, 2.5 * net.w) - 2.5 * h0) <= 1e-10 * h0


@SETTINGS
@given(seeds)
def test_series_parallel_reductions_are_certified(seed):
    rng = np.random.default_rng(seed)
    n, edges = series_parallel(rng, int(rng.integers(1, 8)))
    m = len(edges)
    wu = rng.uniform(1, 4, m)
    p = np.zeros(n)
    p[0], p[1] = 1.0, -1.0
    net = Network.build(edges, w=wu, wl=wu * rng.uniform(0.2, 0.9, m), wu=wu,
                        cu=rng.uniform(1, 3, m), p=p)
    tree = tree_reduce(net)
    assert tree.is_tree
    assert all(s.certificate < 1e-8 for s in tree.steps)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_any_found_separator_is_valid_and_certified(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng, feasible=False)
    keep = rng.random(net.n_nodes) < 0.4
    keep[:2] = True
    p = np.where(keep, net.p, 0.0)
    p -= np.where(keep, p.sum() / keep.sum(), 0.0)
    net = net.with_p(p)
    cand = find_reduction(net)
    if cand is None:
        return
    assert is_valid_reduction(net, cand.v1, cand.v2, cand.E2)
    _, cert = reduce_and_check(net, cand.v1, cand.v2, cand.E2)
    assert cert < 1e-8


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_composition_preserves_shape(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 4))
    caps = []
    for _ in range(k):
        wu = rng.uniform(1, 4, 2)
        wl = wu * rng.uniform(0.2, 0.9, 2)
        c = rng.uniform(0.5, 3, 2)
        caps.append(compose_parallel([PiecewiseCapacity.constant(c[i], wl[i], wu[i]) for i in range(2)]))
    out = compose_series(caps) if rng.random() < 0.5 else compose_parallel(caps)
    assert s0_check(out, strict=False)["ok"]
    x = np.linspace(out.lo, out.hi, 25)
    assert np.all(out(x) > 0)
