"""Weight control against multiplicative load changes.

For p = alpha * p0 the flow is alpha * f(w, p0), so the largest feasible
alpha at weight w is 1 / max_i f_i(w) / c_i with a per-link effective
capacity c.  The best alpha over the weight box is found with a regularized
projected subgradient method.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from dcflowctl.netcore import Network, batch_flows, solve_flow
from dcflowctl.sensitivity import jacobian

DIRECTIONS = ("plus", "minus")


@dataclass(frozen=True)
class SubgradConfig:
    eta0: float = 0.2
    schedule: str = "sqrt"          # "sqrt": eta0 / sqrt(1 + t/50); "constant": eta0
    max_iters: int = 400
    stagnation_tol: float = 1e-10
    stagnation_iters: int = 60
    restarts: int = 8
    active_tol: float = 1e-6
    model_tol: float = 0.05         # also model links within this relative gap, with offsets
    qp_tol: float = 1e-9
    normalize: bool = True          # take steps in the coordinates w_i / wu_i
    seed: int = 0

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if self.schedule not in ("sqrt", "constant"):
            raise ValueError("schedule must be 'sqrt' or 'constant'")

    def eta(self, t: int) -> float:
        if self.schedule == "constant":
            return self.eta0
        return self.eta0 / np.sqrt(1.0 + t / 50.0)


@dataclass
class DirectionResult:
    alpha: float
    w_star: np.ndarray
    trace: list
    restart_alphas: list
    certified: bool


@dataclass
class MultiplicativeResult:
    alpha_plus: float
    alpha_minus: float
    nu_M: float
    w_star: dict
    trace: dict
    restart_alphas: dict
    certified: bool
    warnings: list = field(default_factory=list)


def effective_capacity(net: Network, f, direction: str = "plus") -> np.ndarray:
    f = np.asarray(f, float)
    if direction == "plus":
        return np.where(f >= 0, net.cu, net.cl)
    if direction == "minus":
        return np.where(f >= 0, -net.cl, -net.cu)
    raise ValueError(f"unknown direction {direction!r}")


def objective(net: Network, w, direction: str = "plus") -> float:
    f = solve_flow(net, w).f
    return float(np.max(f / effective_capacity(net, f, direction)))


def alpha_at(net: Network, w, direction: str = "plus") -> float:
    obj = objective(net, w, direction)
    return np.inf if obj <= 0 else 1.0 / obj


def _box_qp_step(G: np.ndarray, eta: float, lo: np.ndarray, hi: np.ndarray, tol: float,
                 max_iter: int = 5000, b: np.ndarray | None = None) -> np.ndarray:
    """argmin over lo <= d <= hi of max_k (b[k] + G[k] . d) + |d|^2 / (2 eta).

    Solved in the dual: maximize over the simplex phi(lam) = lam . b +
    min_d (G^T lam) . d + |d|^2/(2 eta), whose minimizer is
    d = clip(-eta G^T lam, lo, hi).  Projected gradient ascent on lam until
    the duality gap drops below tol.
    """
    K = G.shape[0]
    b = np.zeros(K) if b is None else np.asarray(b, float)
    if K == 1:
        return np.clip(-eta * G[0], lo, hi)

    def d_of(lam):
        return np.clip(-eta * (G.T @ lam), lo, hi)

    def primal(d):
        return np.max(b + G @ d) + d @ d / (2 * eta)

    def dual(lam, d):
        return lam @ (b + G @ d) + d @ d / (2 * eta)

    lam = np.full(K, 1.0 / K)
    step = 1.0 / (eta * max(np.linalg.norm(G, 2) ** 2, 1e-300))
    best_d, best_p = None, np.inf
    for _ in range(max_iter):
        d = d_of(lam)
        pv = primal(d)
        if pv < best_p:
            best_p, best_d = pv, d
        gap = best_p - dual(lam, d)
        if gap <= tol * max(1.0, abs(best_p)):
            break
        lam = _project_simplex(lam + step * (b + G @ d))
    return best_d


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _run_direction(net: Network, direction: str, w0: np.ndarray, cfg: SubgradConfig):
    scale = net.wu if cfg.normalize else np.ones(net.n_links)
    x = w0 / scale
    xl, xu = net.wl / scale, net.wu / scale
    best_obj, best_w = np.inf, w0.copy()
    trace = []
    stall = 0
    for t in range(cfg.max_iters):
        w = x * scale
        f = solve_flow(net, w).f
        c = effective_capacity(net, f, direction)
        r = f / c
        obj = float(r.max())
        if obj < best_obj - cfg.stagnation_tol * max(1.0, abs(best_obj)):
            stall = 0
        else:
            stall += 1
        if obj < best_obj:
            best_obj, best_w = obj, w.copy()
        trace.append(best_obj)
        if stall >= cfg.stagnation_iters:
            break
        tol = max(cfg.active_tol, cfg.model_tol) * abs(obj)
        active = np.flatnonzero(r >= obj - tol)
        J = jacobian(net, w)
        G = (J[active, :] / c[active, None]) * scale[None, :]
        off = np.where(r[active] >= obj - cfg.active_tol * abs(obj), 0.0, r[active] - obj)
        d = _box_qp_step(G, cfg.eta(t), xl - x, xu - x, cfg.qp_tol, b=off)
        if not np.any(d):
            break
        x = np.clip(x + d, xl, xu)
    return best_obj, best_w, trace


def _certify(net: Network, w, alpha: float, direction: str, tol: float = 1e-6) -> bool:
    sgn = 1.0 if direction == "plus" else -1.0
    f = solve_flow(net, w, sgn * alpha * net.p).f
    slack = tol * np.maximum(np.abs(net.cl), np.abs(net.cu))
    return bool(np.all(f <= net.cu + slack) and np.all(f >= net.cl - slack))


def solve_direction(net: Network, direction: str, cfg: SubgradConfig = SubgradConfig()) -> DirectionResult:
    rng = np.random.default_rng(cfg.seed)
    starts = [net.wu.astype(float).copy()]
    starts += [rng.uniform(net.wl, net.wu) for _ in range(cfg.restarts)]
    best = (np.inf, None, None)
    alphas = []
    for w0 in starts:
        obj, w, tr = _run_direction(net, direction, w0, cfg)
        alphas.append(np.inf if obj <= 0 else 1.0 / obj)
        if obj < best[0]:
            best = (obj, w, tr)
    obj, w, tr = best
    alpha = np.inf if obj <= 0 else 1.0 / obj
    ok = np.isfinite(alpha) and _certify(net, w, alpha, direction)
    return DirectionResult(alpha=alpha, w_star=w, trace=[1.0 / v if v > 0 else np.inf for v in tr],
                           restart_alphas=alphas, certified=bool(ok))


def solve_multiplicative(net: Network, cfg: SubgradConfig = SubgradConfig(),
                         directions=DIRECTIONS) -> MultiplicativeResult:
    """Best scaling factors of p0 in both directions and the resulting margin."""
    res = {d: solve_direction(net, d, cfg) for d in directions}
    ap = res["plus"].alpha if "plus" in res else np.nan
    am = res["minus"].alpha if "minus" in res else np.nan
    norm = float(np.abs(net.p).sum())
    cands = []
    if "plus" in res:
        cands.append(ap - 1.0)
    if "minus" in res:
        cands.append(am + 1.0)
    nu = norm * min(cands)
    warnings = [f"{d}: certificate failed" for d, r in res.items() if not r.certified]
    return MultiplicativeResult(
        alpha_plus=ap, alpha_minus=am, nu_M=max(nu, 0.0),
        w_star={d: r.w_star for d, r in res.items()},
        trace={d: r.trace for d, r in res.items()},
        restart_alphas={d: r.restart_alphas for d, r in res.items()},
        certified=not warnings, warnings=warnings)


@dataclass
class RandomSearchResult:
    alpha: float
    w_best: np.ndarray
    samples: int
    elapsed: float
    history: list


def random_search(net: Network, direction: str = "plus", budget_s: float = 60.0,
                  max_samples: int | None = None, batch: int = 2048, seed: int = 0,
                  include_bounds: bool = True, target: float | None = None) -> RandomSearchResult:
    """Uniform sampling of weights in [wl, wu], keeping the best alpha.

    Stops at the time budget, the sample cap, or once alpha reaches target.
    """
    rng = np.random.default_rng(seed)
    sgn = 1.0 if direction == "plus" else -1.0
    t0 = time.perf_counter()
    best_a, best_w = -np.inf, net.wu.copy()
    if include_bounds:
        for w in (net.wu, net.wl):
            if np.all(w > 0):
                a = alpha_at(net, w, direction)
                if a > best_a:
                    best_a, best_w = a, w.copy()
    n_done = 0
    history = []
    while True:
        if time.perf_counter() - t0 >= budget_s:
            break
        if max_samples is not None and n_done >= max_samples:
            break
        if target is not None and best_a >= target:
            break
        b = batch if max_samples is None else min(batch, max_samples - n_done)
        W = rng.uniform(net.wl, net.wu, size=(b, net.n_links))
        F = batch_flows(net, W, net.p)
        C = np.where(F >= 0, net.cu, net.cl) if sgn > 0 else np.where(F >= 0, -net.cl, -net.cu)
        obj = (F / C).max(axis=1)
        k = int(np.argmin(obj))
        if obj[k] > 0 and 1.0 / obj[k] > best_a:
            best_a, best_w = 1.0 / obj[k], W[k].copy()
            history.append((n_done + k, best_a))
        n_done += b
    return RandomSearchResult(alpha=float(best_a), w_best=best_w, samples=n_done,
                              elapsed=time.perf_counter() - t0, history=history)
