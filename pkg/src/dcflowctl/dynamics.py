"""Decentralized weight-control dynamics and parallel-network closed forms.

Two local controllers move each link weight at a constant rate:

* u1 lowers w_i while link i is overloaded and w_i > wl_i;
* u2 also raises w_i while link i is within capacity, its flow magnitude is
  growing and w_i < wu_i.

The closed forms here cover n parallel links (two nodes) with constant
capacities c and a transfer of magnitude alpha.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dcflowctl.netcore import Network, NetworkError, incidence

TRIGGER_TOL = 1e-9
DEADBAND = 1e-9


# ---------------------------------------------------------------- closed forms

@dataclass
class ParallelClosedForm:
    alpha_star: float
    w_opt: np.ndarray
    g_max: float
    regime: str | None = None        # n = 2 only: "wl1-wu2", "middle", "wu1-wl2"
    V: np.ndarray | None = None      # V_k for links sorted by w0/c (only with w0)
    V_star: float | None = None
    r_star: float | None = None
    k_bar: int | None = None         # 1-based, as in the sorted order
    order: np.ndarray | None = None  # sorting permutation used for V


def _u1_sorted_quantities(w0, wl, c):
    w0, wl, c = (np.asarray(x, float) for x in (w0, wl, c))
    r = w0 / c
    order = np.argsort(r, kind="stable")
    rs, ws, cs = r[order], w0[order], c[order]
    n = len(c)
    r_star = float(np.max(wl / c))
    prefix_w = np.concatenate([[0.0], np.cumsum(ws)])      # sum_{i<k} w0_i
    suffix_c = np.concatenate([np.cumsum(cs[::-1])[::-1], [0.0]])  # sum_{i>=k} c_i
    V = np.array([prefix_w[k] / rs[k] + suffix_c[k] for k in range(n)])
    kb = int(np.argmax(rs >= r_star * (1 - 1e-15)))  # 0-based first index with r_k >= r*
    V_star = prefix_w[kb] / r_star + suffix_c[kb] if r_star > 0 else suffix_c[0]
    return order, rs, V, float(V_star), r_star, kb + 1


def parallel_alpha_star(wl, wu, c, w0=None) -> ParallelClosedForm:
    """Largest transfer through parallel links under weight control.

    With g_max = 1 / max_i wl_i / c_i, links with wu_i < c_i / g_max sit at
    their upper weight and the rest are saturated.
    """
    wl, wu, c = (np.asarray(x, float) for x in (wl, wu, c))
    if not (wl.shape == wu.shape == c.shape) or wl.ndim != 1:
        raise NetworkError("parallel closed form needs equal-length 1-D bounds")
    if np.any(wu <= 0) or np.any(wl < 0) or np.any(wl > wu) or np.any(c <= 0):
        raise NetworkError("bad parallel-link data")
    ratio = np.max(wl / c)
    g_max = np.inf if ratio == 0 else 1.0 / ratio
    below = wu < c * ratio                    # wu_i < c_i / g_max
    alpha = (g_max * wu[below].sum() if below.any() else 0.0) + c[~below].sum()
    w_opt = np.minimum(c * ratio, wu) if ratio > 0 else wu.copy()
    res = ParallelClosedForm(alpha_star=float(alpha), w_opt=w_opt, g_max=float(g_max))
    if len(c) == 2:
        res.regime = two_link_regime(wl, wu, c)
    if w0 is not None:
        order, _, V, V_star, r_star, kb = _u1_sorted_quantities(w0, wl, c)
        res.V, res.V_star, res.r_star, res.k_bar, res.order = V, V_star, r_star, kb, order
    return res


def two_link_regime(wl, wu, c) -> str:
    """Which weight pair is optimal for two parallel links."""
    q = c[0] / c[1]
    if q < wl[0] / wu[1]:
        return "wl1-wu2"
    if q > wu[0] / wl[1]:
        return "wu1-wl2"
    return "middle"


def two_link_alpha(wl, wu, c) -> float:
    tag = two_link_regime(wl, wu, c)
    if tag == "wl1-wu2":
        return c[0] * (1 + wu[1] / wl[0])
    if tag == "wu1-wl2":
        return c[1] * (1 + wu[0] / wl[1])
    return c[0] + c[1]


@dataclass
class EquilibriumPrediction:
    regime: str                  # "i", "ii" or "iii"
    w_star: np.ndarray | None
    V: np.ndarray
    V_star: float
    k_hat: int | None = None     # 1-based in sorted order
    r_hat: float | None = None


def u1_equilibrium_predict(w0, wl, c, alpha: float) -> EquilibriumPrediction:
    """Terminal weights of u1 on parallel links for transfer alpha."""
    w0, wl, c = (np.asarray(x, float) for x in (w0, wl, c))
    order, rs, V, V_star, _, _ = _u1_sorted_quantities(w0, wl, c)
    n = len(c)
    if alpha <= V[-1]:
        return EquilibriumPrediction("i", w0.copy(), V, V_star)
    if alpha > V_star:
        return EquilibriumPrediction("iii", None, V, V_star)
    ws, cs = w0[order], c[order]
    k = int(np.argmax(alpha >= V))          # 0-based first j with alpha >= V_j
    if k == 0 and np.isclose(alpha, V[0], rtol=1e-12):
        r_hat = rs[0]
    else:
        r_hat = ws[:k].sum() / (alpha - cs[k:].sum())
    wstar_sorted = np.concatenate([ws[:k], r_hat * cs[k:]])
    w_star = np.empty(n)
    w_star[order] = wstar_sorted
    return EquilibriumPrediction("ii", w_star, V, V_star, k_hat=k + 1, r_hat=float(r_hat))


def u1_maximal_robustness_check(w0, wl, wu, c) -> dict:
    """u1 attains the largest transfer iff w0 >= w_opt componentwise."""
    cf = parallel_alpha_star(wl, wu, c, w0=w0)
    ok = bool(np.all(np.asarray(w0, float) >= cf.w_opt * (1 - 1e-12)))
    return {"maximal": ok, "V_star": cf.V_star, "alpha_star": cf.alpha_star, "w_opt": cf.w_opt}


# ---------------------------------------------------------------- simulation

@dataclass(frozen=True)
class ControllerSpec:
    kind: str = "u1"
    rates: np.ndarray | None = None      # per-link lambda; default wu - wl (or wu)
    dt: float | None = None              # default 1e-3 / max lambda
    horizon: float | None = None         # default 10 / min lambda
    feas_tol: float = 1e-6
    record_every: int = 1

    def __post_init__(self):
        if self.kind not in ("u1", "u2"):
            raise ValueError("controller kind must be u1 or u2")
        if self.rates is not None and np.any(np.asarray(self.rates) <= 0):
            raise ValueError("rates must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class SimTrace:
    times: np.ndarray
    W: np.ndarray
    F: np.ndarray
    verdict: str
    w_final: np.ndarray
    f_final: np.ndarray
    events: list = field(default_factory=list)
    steps: int = 0
    converged: bool = False
    guarantee: bool = True


def default_rates(net: Network) -> np.ndarray:
    span = net.wu - net.wl
    return np.where(span > 0, span, net.wu).astype(float)


class _FlowEval:
    """Flows for changing weights via a grounded Laplacian solve."""

    def __init__(self, net: Network):
        self.A = incidence(net)
        self.Ag = self.A[1:]

    def __call__(self, w, p):
        L = (self.Ag * w) @ self.Ag.T
        phi = np.concatenate([[0.0], np.linalg.solve(L, p[1:])])
        return w * (self.A.T @ phi)

    def stop_weights(self, w, f, idx, target):
        """Weight at which each link in idx carries |target|, the other weights held.

        Seen from its end nodes the rest of the network is a source behind an
        equivalent weight, so f_i(x) = x V / (1 + x R) with R, V recovered from
        the current flow and theta_i = w_i a_i^T L^+ a_i.  Bridges give -inf.
        """
        L = (self.Ag * w) @ self.Ag.T
        cols = self.Ag[:, idx]
        theta = w[idx] * np.einsum("ij,ij->j", cols, np.linalg.solve(L, cols))
        out = np.full(len(idx), -np.inf)
        ok = theta < 1 - 1e-12
        wi, th = w[idx][ok], theta[ok]
        R = th / (wi * (1 - th))
        V = np.abs(f[idx][ok]) / (wi * (1 - th))
        t = np.abs(target[ok])
        out[ok] = t / np.maximum(V - t * R, 1e-300)
        return out


def is_parallel(net: Network) -> bool:
    return net.n_nodes == 2


def simulate(net: Network, spec: ControllerSpec, alpha: float, w0=None) -> SimTrace:
    """Forward-Euler simulation after the load jumps from net.p to alpha * net.p."""
    w = (net.w if w0 is None else np.asarray(w0, float)).astype(float).copy()
    if np.any(w < net.wl - 1e-15) or np.any(w > net.wu + 1e-15):
        raise NetworkError("initial weight outside [wl, wu]")
    lam = default_rates(net) if spec.rates is None else np.broadcast_to(
        np.asarray(spec.rates, float), (net.n_links,)).copy()
    dt = spec.dt if spec.dt is not None else 1e-3 / lam.max()
    horizon = spec.horizon if spec.horizon is not None else 10.0 / lam.min()
    n_steps = int(np.ceil(horizon / dt))
    flow = _FlowEval(net)
    p = alpha * net.p
    band = DEADBAND * np.abs(p).sum()
    hi = net.cu * (1 + TRIGGER_TOL)
    lo = net.cl * (1 + TRIGGER_TOL)

    f_prev = flow(w, net.p)       # just before the load change
    f = flow(w, p)
    times, Ws, Fs = [0.0], [w.copy()], [f.copy()]
    events = []
    was_clamped = np.zeros(net.n_links, bool)
    converged = False
    k = 0
    for k in range(1, n_steps + 1):
        over = ((f > hi) | (f < lo)) & (w > net.wl)
        u = np.where(over, -lam, 0.0)
        if spec.kind == "u2":
            within = (f <= net.cu) & (f >= net.cl)
            rising = np.abs(f) - np.abs(f_prev) > band
            up = within & rising & (w < net.wu)
            u = np.where(up, lam, u)
        if not np.any(u):
            converged = True
            break
        w_new = w + dt * u
        dec = np.flatnonzero(u < 0)
        if len(dec):
            # localize the cap crossing inside the step instead of overshooting it
            target = np.where(f[dec] > 0, net.cu[dec], net.cl[dec])
            w_new[dec] = np.maximum(w_new[dec], np.minimum(w[dec], flow.stop_weights(w, f, dec, target)))
        w_new = np.clip(w_new, net.wl, net.wu)
        clamped = (w_new == net.wl) | (w_new == net.wu)
        for i in np.flatnonzero(clamped & ~was_clamped & (u != 0)):
            events.append((k * dt, int(i), "weight bound"))
        was_clamped = clamped
        w = w_new
        f_prev, f = f, flow(w, p)
        if k % spec.record_every == 0:
            times.append(k * dt)
            Ws.append(w.copy())
            Fs.append(f.copy())
    t_end = k * dt
    if times[-1] != t_end:
        times.append(t_end)
        Ws.append(w.copy())
        Fs.append(f.copy())
    slack = spec.feas_tol * np.maximum(np.abs(net.cl), np.abs(net.cu))
    feasible = bool(np.all(f <= net.cu + slack) and np.all(f >= net.cl - slack))
    guarantee = spec.kind == "u1" or (is_parallel(net) and net.n_links == 2)
    return SimTrace(times=np.array(times), W=np.array(Ws), F=np.array(Fs),
                    verdict="feasible" if feasible else "infeasible",
                    w_final=w, f_final=f, events=events, steps=k,
                    converged=converged, guarantee=guarantee)


def parallel_network(wl, wu, c, w=None, transfer: float = 1.0) -> Network:
    """Two-node network with len(c) parallel links carrying `transfer` from node 0."""
    wl, wu, c = (np.asarray(x, float) for x in (wl, wu, c))
    n = len(c)
    return Network(nodes=(0, 1), link_ids=tuple(range(1, n + 1)), tail=[0] * n, head=[1] * n,
                   w=wu if w is None else w, wl=wl, wu=wu, cl=-c, cu=c,
                   p=[transfer, -transfer])
