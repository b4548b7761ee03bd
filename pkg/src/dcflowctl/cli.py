"""Command-line front end.

    dcflowctl <command> NETWORK [options]

NETWORK is a schema-1 JSON file or one of the bundled names fig1, fig5,
fig6, ieee39.  Results go to stdout as CSV or JSON (--output); --report
writes the full run report as JSON and --plot DIR additionally renders PNG
figures.  Exit status: 0 success, 2 invalid input, 3 result not certified.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from dcflowctl import netio
from dcflowctl.netcore import Network, NetworkError, feasibility_class, solve_flow

EXIT_OK, EXIT_INVALID, EXIT_WARN = 0, 2, 3

DEFAULT_OUTPUT = {
    "flow": "csv", "jacobian": "csv", "eqcap": "csv", "simulate": "csv",
    "margin-mincut": "json", "margin-subgrad": "json", "margin-multilevel": "json",
    "margin-random": "json", "reduce": "json",
}


@dataclass
class RunReport:
    command: list
    inputs_hash: str
    results: dict
    wall_time: float
    table: tuple | None = None          # (header, rows) for CSV output
    warnings: list = field(default_factory=list)
    figures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"command": self.command, "inputs_hash": self.inputs_hash,
             "results": self.results, "wall_time": self.wall_time}
        if self.warnings:
            d["warnings"] = self.warnings
        if self.figures:
            d["figures"] = self.figures
        return d


@dataclass(frozen=True)
class Scenario:
    network: str
    command: str
    options: dict


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _floats(text: str | None):
    if text is None:
        return None
    return np.array([float(t) for t in text.replace(";", ",").split(",") if t.strip()])


def _net_for(args) -> Network:
    net = netio.load_network(args.network)
    net = netio.scaled_bounds(net, args.wl_scale)
    w = _floats(getattr(args, "weights", None))
    if w is not None:
        if len(w) != net.n_links:
            raise NetworkError(f"--weights needs {net.n_links} values")
        net = net.with_weights(w)
    p = _floats(getattr(args, "p", None))
    if p is not None:
        if len(p) != net.n_nodes:
            raise NetworkError(f"--p needs {net.n_nodes} values")
        net = net.with_p(p)
    return net


def _node(net: Network, token: str):
    for v in net.nodes:
        if str(v) == token:
            return v
    raise NetworkError(f"unknown node {token!r}")


# ---------------------------------------------------------------- commands

def cmd_flow(net, args):
    p = net.p * args.alpha
    st = solve_flow(net, p=p)
    fc = feasibility_class(net.with_p(p), st.f, tol=args.tol)
    header = ["link", "tail", "head", "w", "f", "cl", "cu"]
    rows = [[lid, net.nodes[int(net.tail[i])], net.nodes[int(net.head[i])], net.w[i], st.f[i],
             net.cl[i], net.cu[i]] for i, lid in enumerate(net.link_ids)]
    res = {"flows": dict(zip(map(str, net.link_ids), st.f)),
           "potentials": dict(zip(map(str, net.nodes), st.phi)),
           "in_F0": fc.in_F0, "in_F1": fc.in_F1, "in_F2": fc.in_F2}
    figs = []
    if args.plot:
        from dcflowctl import plotting
        figs.append(plotting.flows(args.plot, net.link_ids, st.f, net.cl, net.cu))
    return res, (header, rows), [], figs


def cmd_jacobian(net, args):
    from dcflowctl.sensitivity import column_sign_check, jacobian
    J = jacobian(net)
    ids = [str(l) for l in net.link_ids]
    header = ["link"] + ids
    rows = [[ids[i]] + J[i].tolist() for i in range(net.n_links)]
    signs = [column_sign_check(net, i, J=J, tol=args.tol)["ok"] for i in range(net.n_links)]
    warn = [] if all(signs) else ["sign structure check failed on some columns"]
    return {"jacobian": J, "links": ids, "sign_checks_ok": all(signs)}, (header, rows), warn, []


def cmd_margin_mincut(net, args):
    from dcflowctl.mincut import margin
    rep = margin(net, support_only=args.support_only)
    res = {"nu_star": rep.nu_star, "kind": rep.kind, "cut": list(rep.cut),
           "delta": list(rep.delta), "alpha_plus_bound": rep.alpha_plus_bound,
           "alpha_minus_bound": rep.alpha_minus_bound}
    return res, None, [], []


def cmd_margin_subgrad(net, args):
    from dcflowctl.subgrad import SubgradConfig, solve_multiplicative
    cfg = SubgradConfig(eta0=args.eta, schedule=args.schedule, max_iters=args.iters,
                        restarts=args.restarts, seed=args.seed)
    dirs = ("plus", "minus") if args.direction == "both" else (args.direction,)
    r = solve_multiplicative(net, cfg, dirs)
    res = {"alpha_plus": r.alpha_plus, "alpha_minus": r.alpha_minus, "nu_M": r.nu_M,
           "w_star": {d: dict(zip(map(str, net.link_ids), w)) for d, w in r.w_star.items()},
           "restart_alphas": r.restart_alphas, "certified": r.certified}
    n = max(len(t) for t in r.trace.values())
    header = ["iter"] + [f"alpha_{d}" for d in r.trace]
    rows = [[k] + [t[min(k, len(t) - 1)] for t in r.trace.values()] for k in range(n)]
    figs = []
    if args.plot:
        from dcflowctl import plotting
        figs.append(plotting.objective_trace(args.plot, r.trace))
    return res, (header, rows), list(r.warnings), figs


def cmd_margin_random(net, args):
    from dcflowctl.subgrad import random_search
    r = random_search(net, direction=args.direction, budget_s=args.budget,
                      max_samples=args.samples, seed=args.seed, target=args.target)
    res = {"alpha": r.alpha, "samples": r.samples,
           "w_best": dict(zip(map(str, net.link_ids), r.w_best))}
    table = (["sample", "best_alpha"], [list(h) for h in r.history])
    return res, table, [], []


def _step_dict(s):
    d = {"kind": s.kind, "absorbed": list(s.absorbed), "produced": s.produced,
         "nodes": list(s.nodes), "certificate": s.certificate}
    if s.upper is not None:
        d.update(wl=s.wl, wu=s.wu, upper_max=s.upper.vmax, lower_min=-s.lower_mag.vmax)
    if s.removed_node is not None:
        d["removed_node"] = s.removed_node
    return d


def _tree_dict(tree):
    return {"steps": [_step_dict(s) for s in tree.steps], "is_tree": tree.is_tree,
            "is_link": tree.is_link, "terminal_nodes": list(tree.terminal_nodes),
            "terminal_links": [l.label for l in tree.terminal_links]}


def _cert_warnings(tree):
    bad = [s.produced or s.kind for s in tree.steps if s.certificate > 1e-8]
    return [f"flow-equivalence certificate above 1e-8 at {b}" for b in bad]


def cmd_reduce(net, args):
    from dcflowctl.reduction import find_reduction, tree_reduce
    tree = tree_reduce(net)
    cand = find_reduction(net)
    res = {"tree": _tree_dict(tree),
           "separator": None if cand is None else {"v1": cand.v1, "v2": cand.v2,
                                                   "E1": list(cand.E1), "E2": list(cand.E2)}}
    figs = []
    if args.plot:
        from dcflowctl import plotting
        figs += plotting.reduction_steps(args.plot, tree.steps)
    return res, None, _cert_warnings(tree), figs


def cmd_margin_multilevel(net, args):
    from dcflowctl.reduction import ReduceConfig, multilevel_margin
    cfg = ReduceConfig(samples=args.samples, grid_points=args.grid_points, seed=args.seed)
    r = multilevel_margin(net, cfg)
    res = {"nu_star": r.nu_star, "kind": r.kind, "delta": r.delta, "feasible": r.feasible,
           "per_pair": {f"{a}->{b}": v for (a, b), v in r.per_pair.items()},
           "tree": _tree_dict(r.tree), "certificates": r.tree.certificates}
    figs = []
    if args.plot:
        from dcflowctl import plotting
        figs += plotting.reduction_steps(args.plot, r.tree.steps)
    warn = _cert_warnings(r.tree)
    if not r.feasible:
        warn.append("base load infeasible on the reduced network")
    return res, None, warn, figs


def cmd_eqcap(net, args):
    from dcflowctl.reduction import ReduceConfig, equivalent_capacity_between
    v1, v2 = (_node(net, t) for t in args.between)
    tree, up, dn = equivalent_capacity_between(net, v1, v2, ReduceConfig(samples=args.samples))
    x = np.linspace(up.lo, up.hi, args.points)
    lower, upper = -dn(x), up(x)
    rows = [[a, b, c] for a, b, c in zip(x, lower, upper)]
    res = {"between": [v1, v2], "domain": [up.lo, up.hi], "upper_max": up.vmax,
           "lower_min": -dn.vmax, "tree": _tree_dict(tree)}
    figs = []
    if args.plot:
        from dcflowctl import plotting
        figs.append(plotting.capacity_curves(args.plot, x, lower, upper))
    return res, (["weq", "C_lower", "C_upper"], rows), _cert_warnings(tree), figs


def cmd_simulate(net, args):
    from dcflowctl.dynamics import ControllerSpec, simulate
    rates = _floats(args.rates)
    spec = ControllerSpec(kind=args.controller, rates=rates, dt=args.dt, horizon=args.horizon,
                          record_every=args.record_every)
    tr = simulate(net, spec, args.alpha)
    n = net.n_links
    header = ["t"] + [f"w_{l}" for l in net.link_ids] + [f"f_{l}" for l in net.link_ids]
    rows = [[t] + list(W) + list(F) for t, W, F in zip(tr.times, tr.W, tr.F)]
    res = {"verdict": tr.verdict, "guarantee": "yes" if tr.guarantee else "no guarantee",
           "converged": tr.converged, "steps": tr.steps,
           "w_final": dict(zip(map(str, net.link_ids), tr.w_final)),
           "f_final": dict(zip(map(str, net.link_ids), tr.f_final)),
           "events": [list(e) for e in tr.events[:n * 4]]}
    figs = []
    if args.plot:
        from dcflowctl import plotting
        figs.append(plotting.simulation(args.plot, tr.times, tr.W, tr.F, net.cl, net.cu))
    return res, (header, rows), [], figs


COMMANDS = {
    "flow": cmd_flow, "jacobian": cmd_jacobian, "margin-mincut": cmd_margin_mincut,
    "margin-subgrad": cmd_margin_subgrad, "margin-random": cmd_margin_random,
    "margin-multilevel": cmd_margin_multilevel, "eqcap": cmd_eqcap,
    "simulate": cmd_simulate, "reduce": cmd_reduce,
}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("network", help="network JSON file or bundled name (fig1, fig5, fig6, ieee39)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-9)
    common.add_argument("--output", choices=("json", "csv"), default=None)
    common.add_argument("--report", metavar="PATH", help="also write the run report as JSON")
    common.add_argument("--plot", metavar="DIR", help="render PNG figures into DIR")
    common.add_argument("--wl-scale", type=float, default=None,
                        help="replace wl by this fraction of wu")
    common.add_argument("--weights", help="comma-separated link weights to use instead of w")
    common.add_argument("--p", help="comma-separated injections to use instead of p")

    ap = argparse.ArgumentParser(prog="dcflowctl", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("flow", parents=[common], help="link flows and feasibility class")
    s.add_argument("--alpha", type=float, default=1.0, help="scale the injections")
    sub.add_parser("jacobian", parents=[common], help="flow sensitivity to link weights")
    s = sub.add_parser("margin-mincut", parents=[common], help="min-cut margin and bounds")
    s.add_argument("--support-only", action="store_true",
                   help="restrict directions to injection nodes")
    s = sub.add_parser("margin-subgrad", parents=[common], help="multiplicative margin by subgradient")
    s.add_argument("--direction", choices=("plus", "minus", "both"), default="both")
    s.add_argument("--eta", type=float, default=0.2)
    s.add_argument("--schedule", choices=("sqrt", "constant"), default="sqrt")
    s.add_argument("--iters", type=int, default=400)
    s.add_argument("--restarts", type=int, default=8)
    s = sub.add_parser("margin-random", parents=[common], help="random weight search for alpha")
    s.add_argument("--direction", choices=("plus", "minus"), default="plus")
    s.add_argument("--budget", type=float, default=60.0, help="time budget in seconds")
    s.add_argument("--samples", type=int, default=None, help="sample cap (overrides budget)")
    s.add_argument("--target", type=float, default=None, help="stop once alpha reaches this value")
    s = sub.add_parser("margin-multilevel", parents=[common], help="margin through network reduction")
    s.add_argument("--samples", type=int, default=400, help="samples per monotone phase")
    s.add_argument("--grid-points", type=int, default=21, help="grid points per weight for general parts")
    s = sub.add_parser("eqcap", parents=[common], help="equivalent capacity between two nodes")
    s.add_argument("--between", nargs=2, required=True, metavar=("V1", "V2"))
    s.add_argument("--points", type=int, default=101)
    s.add_argument("--samples", type=int, default=400)
    s = sub.add_parser("simulate", parents=[common], help="weight-control dynamics after a load jump")
    s.add_argument("--controller", choices=("u1", "u2"), default="u1")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--dt", type=float, default=None)
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--rates", help="comma-separated per-link rates")
    s.add_argument("--record-every", type=int, default=1)
    sub.add_parser("reduce", parents=[common], help="reduction sequence and a separator")
    return ap


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def run(argv) -> tuple[RunReport, str]:
    """Parse argv, execute, and return the report with its formatted stdout text."""
    argv = list(argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    args = build_parser().parse_args(argv)
    text = netio.read_network_text(args.network)
    t0 = time.perf_counter()
    net = _net_for(args)
    res, table, warns, figs = COMMANDS[args.command](net, args)
    report = RunReport(command=["dcflowctl"] + argv, inputs_hash=netio.input_hash(text),
                       results=_jsonable(res), wall_time=time.perf_counter() - t0,
                       table=table, warnings=warns, figures=figs)
    fmt = args.output or DEFAULT_OUTPUT[args.command]
    if fmt == "csv" and table is not None:
        out = _csv_text(*table)
    elif fmt == "csv":
        flat = [[k, json.dumps(v)] for k, v in report.results.items()]
        out = _csv_text(["key", "value"], flat)
    else:
        d = report.to_dict()
        if table is not None:
            d["table"] = {"header": table[0], "rows": _jsonable(table[1])}
        out = json.dumps(d, indent=1) + "\n"
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)
            fh.write("\n")
    return report, out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        report, out = run(argv)
    except (NetworkError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sys.stdout.write(out)
    if report.results.get("verdict") is not None and not out.lstrip().startswith("{"):
        print(json.dumps({"verdict": report.results["verdict"],
                          "guarantee": report.results["guarantee"]}), file=sys.stderr)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_WARN if report.warnings else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
