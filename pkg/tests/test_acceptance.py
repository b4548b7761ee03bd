"""Acceptance criteria 1-11, each recorded as a PASS/FAIL line in the run summary."""

import time

import numpy as np

from dcflowctl.dynamics import (
    ControllerSpec,
    parallel_alpha_star,
    parallel_network,
    simulate,
    two_link_regime,
    u1_equilibrium_predict,
    u1_maximal_robustness_check,
)
from dcflowctl.mincut import margin, multiplicative_bounds
from dcflowctl.netcore import Network, feasibility_class, flow_bound_check, incidence, remove_circulations, solve_flow
from dcflowctl.netio import bundled, scaled_bounds
from dcflowctl.reduction import (
    PiecewiseCapacity,
    compose_parallel,
    eqcap_parallel_constant,
    equivalent_weight,
    multilevel_margin,
    s0_check,
    tree_reduce,
)
from dcflowctl.sensitivity import column_sign_check, jacobian
from dcflowctl.subgrad import SubgradConfig, alpha_at, random_search, solve_direction
from tests.conftest import ACCEPTANCE
from tests.helpers import fig1_net, random_net
from tests.oracles import (
    fd_jacobian,
    lp_margin,
    parallel_alpha_grid2,
    parallel_alpha_zoom,
    parallel_cap_grid,
    series_cap_grid,
    two_terminal_capacity_grid,
)
from tests.test_properties import series_parallel


def record(key, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed < limit
    detail = f"{detail}; {elapsed:.1f} s (limit {limit:g} s)"
    ACCEPTANCE[key] = (ok, detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _parallel_instance(rng, n):
    wu = rng.uniform(1, 4, n)
    wl = wu * rng.uniform(0.1, 0.9, n)
    c = rng.uniform(0.5, 3, n)
    return wl, wu, c


def test_criterion_01_worked_examples():
    t0 = time.perf_counter()
    errs = []
    errs.append(np.abs(solve_flow(fig1_net()).f - [0.33, 0.67, 0.44, 0.56, 0.11]).max())
    lo = fig1_net().replace(wl=[1, 0, 1, 1, 1], w=[1, 0, 1, 1, 1])
    errs.append(np.abs(solve_flow(lo).f - [1.00, 0, 0.67, 0.33, -0.33]).max())
    for p, ref in (([8, 0, 0, -8], [3.2, 4.8, 4.8, 3.2, 1.6]),
                   ([9.5, -0.5, 0.5, -9.5], [3.95, 5.55, 5.55, 3.95, 2.1]),
                   ([10, -2, 2, -10], [4.6, 5.4, 5.4, 4.6, 2.8])):
        net = fig1_net(w=(1, 3, 3, 1, 1), p=p, cu=[6.0] * 5)
        errs.append(np.abs(solve_flow(net).f - ref).max())
    worst = max(errs)
    record("1", worst <= 0.01, f"five flow vectors, worst deviation {worst:.4f}",
           time.perf_counter() - t0, 1)


def test_criterion_02_jacobian():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst_fd, worst_kernel, signs = 0.0, 0.0, True
    for _ in range(100):
        n = int(rng.integers(3, 13))
        net = random_net(rng, n=n, m=int(rng.integers(n - 1, min(2 * n, 20) + 1)))
        J = jacobian(net)
        F = fd_jacobian(net)
        worst_fd = max(worst_fd, (np.abs(J - F) / np.maximum(1.0, np.abs(F))).max())
        f = solve_flow(net).f
        worst_kernel = max(worst_kernel, np.abs(J @ net.w).max() / max(np.abs(f).max(), 1e-300))
        signs &= all(column_sign_check(net, i, J=J)["ok"] for i in range(net.n_links))
    ok = worst_fd < 1e-5 and worst_kernel <= 1e-10 and signs
    record("2", ok, f"100 nets, fd error {worst_fd:.1e}, |Jw|/|f| {worst_kernel:.1e}, signs {signs}",
           time.perf_counter() - t0, 30)


def test_criterion_03_mincut_exactness():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    worst = 0.0
    for kind in ("tree", "wl_zero"):
        for _ in range(50):
            n = int(rng.integers(2, 11))
            if kind == "tree":
                net = random_net(rng, n=n, tree=True)
            else:
                net = random_net(rng, n=n, m=int(rng.integers(n, 2 * n + 1)), wl_zero=True)
            rep = margin(net)
            ref = lp_margin(net, solve_flow(net).f)
            worst = max(worst, abs(rep.nu_star - ref))
    record("3", worst <= 1e-6, f"50 trees + 50 wl=0 nets, worst |nu - LP| {worst:.1e}",
           time.perf_counter() - t0, 60)


def test_criterion_04_parallel_closed_forms():
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    worst2 = worst4 = 0.0
    for _ in range(100):
        wl, wu, c = _parallel_instance(rng, 2)
        a = parallel_alpha_star(wl, wu, c).alpha_star
        worst2 = max(worst2, abs(a - parallel_alpha_grid2(wl, wu, c)) / a)
    for _ in range(30):
        wl, wu, c = _parallel_instance(rng, 4)
        a = parallel_alpha_star(wl, wu, c).alpha_star
        worst4 = max(worst4, abs(a - parallel_alpha_zoom(wl, wu, c)) / a)
    wl, wu = np.array([1.0, 1.0]), np.array([2.0, 4.0])
    tags = []
    for q, want_in, want_out in ((wl[0] / wu[1], "middle", "wl1-wu2"), (wu[0] / wl[1], "middle", "wu1-wl2")):
        sgn = 1 if want_out == "wu1-wl2" else -1
        tags.append(two_link_regime(wl, wu, np.array([q * (1 - sgn * 1e-6), 1.0])) == want_in)
        tags.append(two_link_regime(wl, wu, np.array([q * (1 + sgn * 1e-6), 1.0])) == want_out)
    ok = worst2 <= 1e-3 and worst4 <= 1e-3 and all(tags)
    record("4", ok, f"n=2 rel error {worst2:.1e}, n=4 rel error {worst4:.1e}, boundary tags {sum(tags)}/4",
           time.perf_counter() - t0, 60)


def test_criterion_05_equivalent_capacity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    worst_closed = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 6))
        wl, wu, c = _parallel_instance(rng, n)
        closed = eqcap_parallel_constant(wl, wu, c)
        comp = compose_parallel([PiecewiseCapacity.constant(c[i], wl[i], wu[i]) for i in range(n)])
        x = np.linspace(closed.lo, closed.hi, 200)
        worst_closed = max(worst_closed, np.abs(comp.exact(x) - closed(x)).max() / max(1.0, closed.vmax))

    net = bundled("fig5")
    tree = tree_reduce(net)
    steps = tree.steps
    upper = {s.produced: s for s in steps}
    const = {lid: PiecewiseCapacity.constant(net.cu[i], net.wl[i], net.wu[i])
             for i, lid in enumerate(net.link_ids)}

    def part(label):
        if label in upper:
            s = upper[label]
            return s.upper, s.wl, s.wu
        c = const[int(label)]
        return c, c.lo, c.hi

    shapes, worst_grid = True, 0.0
    for s in steps:
        shapes &= s0_check(s.upper)["ok"]
        (c1, lo1, hi1), (c2, lo2, hi2) = (part(a) for a in s.absorbed)
        oracle = series_cap_grid if s.kind == "series" else parallel_cap_grid
        xs = np.linspace(s.wl, s.wu, 22)[1:-1]
        for x in xs:
            ref = oracle(c1, lo1, hi1, c2, lo2, hi2, x)
            worst_grid = max(worst_grid, abs(float(s.upper(x)) - ref) / max(1.0, abs(ref)))
    ok = worst_closed <= 1e-9 and shapes and worst_grid <= 1e-3 and len(steps) == 4
    record("5", ok, f"closed vs composed {worst_closed:.1e}; {len(steps)} steps S0 {shapes}, "
                    f"grid rel error {worst_grid:.1e}", time.perf_counter() - t0, 300)


def test_criterion_06_multilevel_consistency():
    t0 = time.perf_counter()
    net = bundled("fig5")
    r = multilevel_margin(net)
    top = r.tree.steps[-1].upper
    s, t = net.node_index("v1"), net.node_index("v4")
    best, diffs = two_terminal_capacity_grid(net.n_nodes, np.asarray(net.tail), np.asarray(net.head),
                                             net.wl, net.wu, net.cu, s, t, k=21)
    grid_nu = 2 * (best - 1.0)
    bound = 2 * diffs.sum()
    twice = 2 * (top.vmax - 1.0)
    ok = (r.tree.is_link and abs(r.nu_star - twice) <= 1e-9 * max(1, twice)
          and grid_nu <= r.nu_star + 1e-9 and r.nu_star - grid_nu <= bound)
    record("6", ok, f"nu {r.nu_star:.6f}, grid {grid_nu:.6f}, resolution bound {bound:.3f}",
           time.perf_counter() - t0, 600)


def test_criterion_07_ieee39():
    t0 = time.perf_counter()
    base = bundled("ieee39")
    fixed = scaled_bounds(base, 1.0)
    a_none = alpha_at(fixed, fixed.wu)
    ap_bound, _ = multiplicative_bounds(base)
    half = scaled_bounds(base, 0.5)
    res = solve_direction(half, "plus", SubgradConfig(eta0=0.2, restarts=8, seed=0))
    hits = int(sum(a >= 5.19 for a in res.restart_alphas[1:]))
    t_abc = time.perf_counter() - t0
    near = scaled_bounds(base, 0.95)
    rs = random_search(near, budget_s=600.0, seed=0, target=4.80)
    ok = (abs(a_none - 4.725) <= 1e-3 and ap_bound <= 5.2 + 1e-9 and hits >= 3
          and rs.alpha >= 4.80)
    record("7", ok and t_abc < 900,
           f"(a) {a_none:.4f} (b) {ap_bound:.4f} (c) {hits}/8 restarts >= 5.19, best {res.alpha:.4f} "
           f"(d) {rs.alpha:.4f} after {rs.samples} samples; (a)-(c) took {t_abc:.1f} s of 900", time.perf_counter() - t0, 900 + 600)


def test_criterion_08_u1():
    rng = np.random.default_rng(808)
    t0 = time.perf_counter()
    agree, w_err, regimes = 0, 0.0, set()
    for _ in range(200):
        n = int(rng.integers(2, 5))
        wl, wu, c = _parallel_instance(rng, n)
        w0 = rng.uniform(wl, wu)
        V_star = u1_equilibrium_predict(w0, wl, c, 1.0).V_star
        alpha = rng.uniform(0.6, 1.3) * V_star
        pred = u1_equilibrium_predict(w0, wl, c, alpha)
        regimes.add(pred.regime)
        lam = rng.uniform(0.5, 2.0, n)
        tr = simulate(parallel_network(wl, wu, c, w=w0), ControllerSpec("u1", rates=lam, record_every=10**6),
                      alpha, w0=w0)
        want = "infeasible" if pred.regime == "iii" else "feasible"
        agree += tr.verdict == want
        if pred.regime == "ii":
            w_err = max(w_err, np.abs(tr.w_final - pred.w_star).max())
    iff_ok, truth = 0, []
    for k in range(100):
        wl, wu, c = _parallel_instance(rng, int(rng.integers(2, 4)))
        cf = parallel_alpha_star(wl, wu, c)
        # half the starts sit on the optimal ray, which makes u1 maximally robust
        w0 = (np.clip(cf.w_opt * rng.uniform(1.0, 1.6), wl, wu) if k % 2 else rng.uniform(wl, wu))
        res = u1_maximal_robustness_check(w0, wl, wu, c)
        truth.append(res["maximal"])
        # maximal: u1 holds just below alpha*; otherwise it fails somewhere in (V*, alpha*)
        net = parallel_network(wl, wu, c, w=w0)
        if res["maximal"]:
            alpha, want = cf.alpha_star * (1 - 1e-3), "feasible"
        else:
            alpha, want = 0.5 * (res["V_star"] + cf.alpha_star), "infeasible"
        tr = simulate(net, ControllerSpec("u1", record_every=10**6), alpha, w0=w0)
        iff_ok += tr.verdict == want
    split = len(set(truth)) == 2
    ok = agree == 200 and w_err < 1e-3 and iff_ok == 100 and split
    record("8", ok, f"verdicts {agree}/200 (regimes {sorted(regimes)}), w* error {w_err:.1e}, "
                    f"maximality iff {iff_ok}/100 with {sum(truth)} true", time.perf_counter() - t0, 300)


def test_criterion_09_u2():
    rng = np.random.default_rng(909)
    t0 = time.perf_counter()
    good = bad = 0
    for _ in range(50):
        wl, wu, c = _parallel_instance(rng, 2)
        net = parallel_network(wl, wu, c)
        a = parallel_alpha_star(wl, wu, c).alpha_star
        lam = rng.uniform(0.5, 2.0, 2)
        w0 = rng.uniform(wl, wu)
        spec = ControllerSpec("u2", rates=lam, record_every=10**6)
        good += simulate(net, spec, 0.99 * a, w0=w0).verdict == "feasible"
        bad += simulate(net, spec, 1.05 * c.sum(), w0=w0).verdict == "infeasible"
    record("9", good == 50 and bad == 50, f"feasible {good}/50 at 0.99 alpha*, infeasible {bad}/50 above c1+c2",
           time.perf_counter() - t0, 120)


def test_criterion_10_ieee39_u1():
    t0 = time.perf_counter()
    net = scaled_bounds(bundled("ieee39"), 0.5)
    tr = simulate(net, ControllerSpec("u1", record_every=10**6), 5.19, w0=net.wu)
    peak = np.abs(tr.f_final / np.where(tr.f_final >= 0, net.cu, -net.cl)).max()
    record("10", tr.verdict == "feasible", f"verdict {tr.verdict}, worst loading {peak:.4f}",
           time.perf_counter() - t0, 120)


def test_criterion_11_property_suites():
    rng = np.random.default_rng(1111)
    t0 = time.perf_counter()
    bound_ok = all(flow_bound_check(random_net(rng, feasible=False)) for _ in range(500))

    circ_ok = True
    for _ in range(100):
        net = random_net(rng, feasible=False)
        A = incidence(net)
        _, s, vt = np.linalg.svd(A)
        null = vt[int((s > 1e-9).sum()):]
        f = solve_flow(net).f + (3 * rng.normal(size=len(null)) @ null if len(null) else 0.0)
        g = remove_circulations(net, f)
        loose = net.replace(cl=-np.full(net.n_links, 1e9), cu=np.full(net.n_links, 1e9))
        circ_ok &= (np.abs(A @ g - A @ f).max() < 1e-9 * max(1.0, np.abs(f).max())
                    and feasibility_class(loose, g).in_F0)

    mono_ok = True
    for _ in range(200):
        net = random_net(rng, feasible=False)
        a, b = (net.nodes[int(k)] for k in rng.choice(net.n_nodes, 2, replace=False))
        dw = rng.uniform(0, 1, net.n_links) * (rng.random(net.n_links) < 0.5)
        mono_ok &= equivalent_weight(net, a, b, net.w + dw) >= equivalent_weight(net, a, b) * (1 - 1e-10)

    certs = []
    for name in ("fig5", "fig6", "ieee39"):
        certs += multilevel_margin(bundled(name)).tree.certificates
    for _ in range(100):
        n, edges = series_parallel(rng, int(rng.integers(1, 8)))
        m = len(edges)
        wu = rng.uniform(1, 4, m)
        p = np.zeros(n)
        p[0], p[1] = 1.0, -1.0
        net = Network.build(edges, w=wu, wl=wu * rng.uniform(0.2, 0.9, m), wu=wu, cu=rng.uniform(1, 3, m), p=p)
        certs += tree_reduce(net).certificates
    cert_max = max(certs)
    ok = bound_ok and circ_ok and mono_ok and cert_max < 1e-8
    record("11", ok, f"flow bound {bound_ok}, circulation removal {circ_ok}, H monotone {mono_ok}, "
                     f"{len(certs)} reduction certificates, max {cert_max:.1e}", time.perf_counter() - t0, 600)
