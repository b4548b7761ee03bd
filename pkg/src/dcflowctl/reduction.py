"""Two-terminal reductions and equivalent capacity functions.

A sub-network attached to the rest of the grid only at nodes v1, v2 and free
of injections behaves, seen from outside, like one link whose weight is the
equivalent weight H = 1 / (a^T L^+ a).  Its equivalent capacity C(weq) is the
largest flow it can pass from v1 to v2 when its internal weights are chosen
with H(w) = weq.  For series and parallel compositions C is computed from the
capacity functions of the parts:

* series:   psi_i = C_i,      H = harmonic sum,  C = g
* parallel: psi_i = C_i / w,  H = sum,           C = weq * g

where g(weq) = max over H(w) = weq of min_i psi_i(w_i).  When every psi_i is
unimodal (increasing, flat, decreasing) g is found from the inverses of the
psi_i: with omega+_i(y) the smallest weight where psi_i reaches y (or wl_i)
and omega-_i(y) the largest (or wu_i), g inverts H(omega+(y)) on its rising
part and H(omega-(y)) on its falling part, with the plateau value
min_i max psi_i in between.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from dcflowctl.netcore import (
    Network,
    NetworkError,
    batch_solve,
    laplacian,
    pinv_laplacian,
    solve_flow,
)
from dcflowctl.mincut import margin as mincut_margin

SHAPE_RTOL = 1e-9
FLAT_RTOL = 1e-12
CERT_TOL = 1e-7


class ReductionError(RuntimeError):
    """Internal invariant violation during a reduction."""


# --------------------------------------------------------------- equivalent weight

def _unit(n: int, i: int, j: int) -> np.ndarray:
    a = np.zeros(n)
    a[i], a[j] = 1.0, -1.0
    return a


def equivalent_weight(net: Network, v1, v2, w=None) -> float:
    """Two-terminal equivalent weight between nodes v1 and v2 (node ids)."""
    i, j = net.node_index(v1), net.node_index(v2)
    if i == j:
        raise NetworkError("equivalent weight needs two distinct nodes")
    Lp = pinv_laplacian(laplacian(net, w))
    a = _unit(net.n_nodes, i, j)
    return 1.0 / float(a @ Lp @ a)


def harmonic(ws) -> float:
    ws = np.asarray(ws, float)
    if np.any(ws <= 0):
        return 0.0
    return 1.0 / np.sum(1.0 / ws)


# --------------------------------------------------------------- capacity functions

@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    kind: str                       # constant | linear | hyperbolic | sampled
    a: float = 0.0
    b: float = 0.0
    xs: np.ndarray | None = None
    ys: np.ndarray | None = None

    def value(self, x):
        x = np.asarray(x, float)
        if self.kind == "constant":
            return np.full_like(x, self.a)
        if self.kind == "linear":
            return self.a * x
        if self.kind == "hyperbolic":
            return self.a * x / (x - self.b)
        return np.interp(x, self.xs, self.ys)

    def slope(self, x: float, side: int) -> float | None:
        """One-sided slope from the closed form; None for sampled pieces."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "linear":
            return self.a
        if self.kind == "hyperbolic":
            return -self.a * self.b / (x - self.b) ** 2
        return None


def _unimodal_shape(fn: Callable, lo: float, hi: float, extra=()) -> tuple[float, float, float]:
    """(max value, first and last point at the max) of a unimodal function."""
    if hi <= lo:
        v = float(fn(np.array([lo]))[0])
        return v, lo, lo
    grid = np.unique(np.concatenate([np.linspace(lo, hi, 2001), np.clip(np.asarray(extra, float), lo, hi)]))
    v = fn(grid)
    k = int(np.argmax(v))
    # sharpen an isolated peak between grid neighbours
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    for _ in range(100):
        if b - a <= 1e-14 * max(1.0, abs(b)):
            break
        m1, m2 = a + (b - a) / 3, b - (b - a) / 3
        f1, f2 = fn(np.array([m1, m2]))
        if f1 < f2:
            a = m1
        else:
            b = m2
    peak = float(fn(np.array([0.5 * (a + b)]))[0])
    vmax = max(float(v[k]), peak)
    tol = SHAPE_RTOL * max(1.0, abs(vmax))
    top = np.flatnonzero(v >= vmax - tol)
    if len(top) == 0:
        x0 = 0.5 * (a + b)
        return vmax, x0, x0

    def edge(inside: float, outside: float) -> float:
        for _ in range(200):
            mid = 0.5 * (inside + outside)
            if abs(inside - outside) <= 1e-15 * max(1.0, abs(mid)):
                break
            if fn(np.array([mid]))[0] >= vmax - tol:
                inside = mid
            else:
                outside = mid
        return inside

    i0, i1 = top[0], top[-1]
    x_up = grid[i0] if i0 == 0 else edge(grid[i0], grid[i0 - 1])
    x_dn = grid[i1] if i1 == len(grid) - 1 else edge(grid[i1], grid[i1 + 1])
    if len(top) == 1 and not (lo < 0.5 * (a + b) < hi):
        x_up = x_dn = grid[i0]
    elif len(top) == 1:
        x_up = min(x_up, 0.5 * (a + b))
        x_dn = max(x_dn, 0.5 * (a + b))
    return vmax, float(x_up), float(x_dn)


class PiecewiseCapacity:
    """Unimodal capacity function of an equivalent weight on [lo, hi].

    ``__call__`` evaluates the stored segments (vectorized).  Functions built
    by composition also carry an exact evaluator (``exact``) that solves for
    the level of the inner problem directly from the parts, and a witness map
    returning part weights that attain the value.
    """

    def __init__(self, segments: Sequence[Segment], label: str = "",
                 exact: Callable[[float], float] | None = None,
                 witness: Callable[[float], tuple] | None = None,
                 parts: tuple = (), mode: str | None = None):
        segs = [s for s in segments if s.hi > s.lo] or list(segments[:1])
        self.segments = tuple(segs)
        self.lo = float(segs[0].lo)
        self.hi = float(segs[-1].hi)
        self.label = label
        self._exact = exact
        self._witness = witness
        self.parts = parts
        self.mode = mode
        self._breaks = np.array([s.lo for s in segs[1:]])
        extra = [s.lo for s in segs] + [s.hi for s in segs]
        for s in segs:
            if s.kind == "sampled":
                extra.extend(s.xs.tolist())
        self.vmax, self.x_up, self.x_dn = _unimodal_shape(self.__call__, self.lo, self.hi, extra)

    # construction helpers
    @classmethod
    def constant(cls, k: float, lo: float, hi: float, label: str = "") -> "PiecewiseCapacity":
        return cls([Segment(lo, hi, "constant", a=float(k))], label=label)

    @classmethod
    def from_samples(cls, xs, ys, label: str = "") -> "PiecewiseCapacity":
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        return cls([Segment(xs[0], xs[-1], "sampled", xs=xs, ys=ys)], label=label)

    @property
    def is_constant(self) -> bool:
        return len(self.segments) == 1 and self.segments[0].kind == "constant"

    def __call__(self, x):
        x = np.asarray(x, float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        idx = np.searchsorted(self._breaks, x, side="right")
        out = np.empty_like(x)
        for k, s in enumerate(self.segments):
            sel = idx == k
            if np.any(sel):
                out[sel] = s.value(x[sel])
        return out[0] if scalar else out

    def exact(self, x):
        """Value from the exact evaluator when available, else the segments."""
        if self._exact is None:
            return self(x)
        x = np.asarray(x, float)
        if x.ndim == 0:
            return float(self._exact(float(x)))
        return np.array([self._exact(float(v)) for v in x])

    def witness(self, x: float):
        if self._witness is None:
            return None
        return self._witness(float(x))

    def segment_at(self, x: float, side: int) -> Segment | None:
        for s in self.segments:
            if side < 0 and s.lo < x <= s.hi:
                return s
            if side > 0 and s.lo <= x < s.hi:
                return s
        return None

    def inverse_rise(self, y: float) -> float:
        """Smallest x with value y on the rising part (lo if y is below C(lo))."""
        return _inverse(self, y, self.lo, self.x_up, rising=True)

    def inverse_fall(self, y: float) -> float:
        """Largest x with value y on the falling part (hi if y is below C(hi))."""
        return _inverse(self, y, self.x_dn, self.hi, rising=False)

    def __repr__(self):
        kinds = ",".join(s.kind for s in self.segments)
        return (f"PiecewiseCapacity({self.label or '?'} on [{self.lo:.6g}, {self.hi:.6g}], "
                f"max {self.vmax:.6g} on [{self.x_up:.6g}, {self.x_dn:.6g}], {kinds})")


def _inverse(fn, y, a, b, rising):
    end = a if rising else b
    fa = float(fn(np.array([end]))[0])
    if y <= fa:
        return end
    if y >= fn.vmax:
        return b if rising else a
    g = lambda x: float(fn(np.array([x]))[0]) - y
    return brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


class _Psi:
    """psi(w) = C(w) (series) or C(w) / w (parallel), with its inverses."""

    def __init__(self, cap: PiecewiseCapacity, mode: str):
        self.cap = cap
        self.mode = mode
        self.lo, self.hi = cap.lo, cap.hi
        if mode == "series":
            self.vmax, self.x_up, self.x_dn = cap.vmax, cap.x_up, cap.x_dn
        else:
            if self.lo <= 0:
                raise ReductionError("parallel composition needs positive lower weight bounds")
            extra = [s.lo for s in cap.segments] + [cap.x_up, cap.x_dn]
            for s in cap.segments:
                if s.kind == "sampled":
                    extra.extend(s.xs.tolist())
            if all(s.kind in ("constant", "hyperbolic") for s in cap.segments):
                # strictly decreasing once divided by w
                self.vmax = float(self(np.array([self.lo]))[0])
                self.x_up = self.x_dn = self.lo
            else:
                self.vmax, self.x_up, self.x_dn = _unimodal_shape(self, self.lo, self.hi, extra)

    def __call__(self, w):
        w = np.asarray(w, float)
        v = self.cap(w)
        return v if self.mode == "series" else v / w

    def omega_plus(self, y: float) -> float:
        if self.mode == "parallel" and self.cap.is_constant:
            c = self.cap.segments[0].a
            return self.lo if y <= c / self.lo else min(c / y, self.hi)
        return _inverse(self, y, self.lo, self.x_up, rising=True)

    def omega_minus(self, y: float) -> float:
        if self.mode == "parallel" and self.cap.is_constant:
            c = self.cap.segments[0].a
            return self.hi if y <= c / self.hi else max(c / y, self.lo)
        return _inverse(self, y, self.x_dn, self.hi, rising=False)


def _levels(a: float, b: float, n: int) -> np.ndarray:
    if b <= a:
        return np.array([a])
    return np.linspace(a, b, n)


def _compose(caps: Sequence[PiecewiseCapacity], mode: str, samples: int = 400,
             label: str = "") -> PiecewiseCapacity:
    caps = list(caps)
    if len(caps) == 1:
        return caps[0]
    psis = [_Psi(c, mode) for c in caps]
    lo_w = np.array([c.lo for c in caps])
    hi_w = np.array([c.hi for c in caps])
    H = harmonic if mode == "series" else (lambda ws: float(np.sum(ws)))
    g_lo = min(float(ps(np.array([ps.lo]))[0]) for ps in psis)
    g_hi = min(float(ps(np.array([ps.hi]))[0]) for ps in psis)
    g_max = min(ps.vmax for ps in psis)
    W_lo, W_hi = H(lo_w), H(hi_w)

    def om_plus(y):
        return np.array([ps.omega_plus(y) for ps in psis])

    def om_minus(y):
        return np.array([ps.omega_minus(y) for ps in psis])

    def gp(y):
        return H(om_plus(y))

    def gm(y):
        return H(om_minus(y))

    x_up, x_dn = gp(g_max), gm(g_max)
    x_up = min(max(x_up, W_lo), W_hi)
    x_dn = min(max(x_dn, x_up), W_hi)

    def trace(ghat, a, b):
        ys = _levels(a, b, samples)
        xs = np.array([ghat(y) for y in ys])
        span = (W_hi - W_lo) / samples
        for _ in range(4):
            gaps = np.flatnonzero(np.diff(xs) > span)
            if len(gaps) == 0 or len(ys) > 8 * samples:
                break
            ymid = 0.5 * (ys[gaps] + ys[gaps + 1])
            xmid = np.array([ghat(y) for y in ymid])
            ys = np.insert(ys, gaps + 1, ymid)
            xs = np.insert(xs, gaps + 1, xmid)
        return xs, ys

    def to_value(x, y):
        return y if mode == "series" else x * y

    segs = []
    if x_up > W_lo:
        xs, ys = trace(gp, g_lo, g_max)
        xs[0], xs[-1] = W_lo, x_up
        order = np.argsort(xs, kind="stable")
        xs, ys = np.maximum.accumulate(xs[order]), ys[order]
        segs.append(Segment(W_lo, x_up, "sampled", xs=xs, ys=to_value(xs, ys)))
    if x_dn > x_up or not segs:
        kind = "constant" if mode == "series" else "linear"
        segs.append(Segment(x_up, max(x_dn, x_up), kind, a=g_max))
    if W_hi > x_dn:
        xs, ys = trace(gm, g_hi, g_max)
        xs, ys = xs[::-1], ys[::-1]
        xs[0], xs[-1] = x_dn, W_hi
        xs = np.maximum.accumulate(xs)
        segs.append(Segment(x_dn, W_hi, "sampled", xs=xs, ys=to_value(xs, ys)))

    def level(x):
        if x < x_up:
            if x <= W_lo:
                return g_lo
            return brentq(lambda y: gp(y) - x, g_lo, g_max, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        if x > x_dn:
            if x >= W_hi:
                return g_hi
            return brentq(lambda y: gm(y) - x, g_hi, g_max, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return g_max

    def exact(x):
        return to_value(x, level(x))

    def witness(x):
        y = level(x)
        if x < x_up:
            w = om_plus(y)
        elif x > x_dn:
            w = om_minus(y)
        else:
            a, b = om_plus(g_max), om_minus(g_max)
            if abs(H(b) - H(a)) <= 1e-15 * max(1.0, x):
                w = a
            else:
                t = brentq(lambda s: H((1 - s) * a + s * b) - x, 0.0, 1.0, xtol=1e-15)
                w = (1 - t) * a + t * b
        return w, to_value(x, y)

    return PiecewiseCapacity(segs, label=label, exact=exact, witness=witness,
                             parts=tuple(caps), mode=mode)


def compose_series(caps: Sequence[PiecewiseCapacity], samples: int = 400, label: str = "") -> PiecewiseCapacity:
    """Equivalent capacity of links in series; the domain is [H(wl), H(wu)], H harmonic."""
    for c in caps:
        if not s0_check(c, strict=False)["ok"]:
            raise ReductionError(f"series input {c.label or c} is not unimodal")
    return _compose(caps, "series", samples, label)


def compose_parallel(caps: Sequence[PiecewiseCapacity], samples: int = 400, label: str = "") -> PiecewiseCapacity:
    """Equivalent capacity of parallel links; the domain is [sum wl, sum wu]."""
    for c in caps:
        if not s0_check(c, strict=False)["ok"]:
            raise ReductionError(f"parallel input {c.label or c} is not unimodal")
    return _compose(caps, "parallel", samples, label)


def eqcap_parallel_constant(wl, wu, c, label: str = "") -> PiecewiseCapacity:
    """Closed-form equivalent capacity of parallel links with constant capacities.

    Linear weq * g_max up to sum_i min(c_i / g_max, wu_i), then a piecewise
    rational tail weq * A / (weq - B) where A sums the capacities of links not
    yet at their upper weight and B sums the upper weights of those that are.
    """
    wl, wu, c = (np.asarray(x, float) for x in (wl, wu, c))
    if np.any(wl <= 0) or np.any(c <= 0):
        raise NetworkError("closed form needs wl > 0 and c > 0")
    lo, hi = wl.sum(), wu.sum()
    g_max = float(np.min(c / wl))

    def ghat_minus(y):
        return float(np.sum(np.minimum(c / y, wu)))

    x0 = min(ghat_minus(g_max), hi)
    segs = [Segment(lo, x0, "linear", a=g_max)]
    sat_level = c / wu                        # level at which link i reaches wu
    pending = np.flatnonzero(sat_level < g_max)
    pending = pending[np.argsort(-sat_level[pending], kind="stable")]
    saturated = sat_level >= g_max
    x = x0
    for i in pending:
        xb = min(ghat_minus(sat_level[i]), hi)
        A = c[~saturated].sum()
        B = wu[saturated].sum()
        if xb > x:
            if B == 0:
                segs.append(Segment(x, xb, "constant", a=A))
            else:
                segs.append(Segment(x, xb, "hyperbolic", a=A, b=B))
        saturated[i] = True
        x = xb
    if x < hi and saturated.all():
        # rounding gap after the last link reaches wu; stretch the last piece
        segs[-1] = replace(segs[-1], hi=hi)
    elif x < hi:
        A = c[~saturated].sum()
        B = wu[saturated].sum()
        segs.append(Segment(x, hi, "constant", a=A) if B == 0 else Segment(x, hi, "hyperbolic", a=A, b=B))
    return PiecewiseCapacity(segs, label=label)


def gderivatives(cap: PiecewiseCapacity, x: float) -> tuple[float | None, float | None]:
    """(left, right) one-sided slopes; None on the side outside the domain."""
    out = []
    for side in (-1, 1):
        seg = cap.segment_at(x, side)
        if seg is None:
            out.append(None)
            continue
        s = seg.slope(x, side)
        if s is None:
            h = 1e-6 * max(abs(x), 1e-12)
            if side < 0:
                h = min(h, x - seg.lo)
                s = (float(cap(x)) - float(seg.value(x - h))) / h
            else:
                h = min(h, seg.hi - x)
                s = (float(seg.value(x + h)) - float(cap(x))) / h
        out.append(float(s))
    return out[0], out[1]


def s0_check(cap: PiecewiseCapacity, n: int = 200, rtol: float = 1e-9, strict: bool = True) -> dict:
    """Rise, plateau, fall structure on an n-point grid.

    With strict=False flat stretches below the maximum are accepted (weakly
    unimodal), which is what the composition rules need.
    """
    x = np.linspace(cap.lo, cap.hi, n)
    v = cap(x)
    scale = max(1.0, np.abs(v).max())
    tol = rtol * scale
    flat = FLAT_RTOL * scale
    top_val = max(v.max(), cap.vmax)
    top = np.flatnonzero(v >= top_val - tol)
    reasons = []
    if len(top) == 0:
        top = np.array([int(np.argmax(v))])
    if np.any(np.diff(top) != 1):
        reasons.append("maximum set not contiguous")
    d = np.diff(v)
    i0, i1 = top[0], top[-1]
    rise, fall = d[:i0], d[i1:]
    if np.any(rise < -tol):
        reasons.append("decrease before the maximum")
    if strict and np.any(np.abs(rise) <= flat):
        reasons.append("flat stretch below the maximum")
    if np.any(fall > tol):
        reasons.append("increase after the maximum")
    if strict and np.any(np.abs(fall) <= flat):
        reasons.append("flat stretch below the maximum")
    if not np.all(np.isfinite(v)):
        reasons.append("non-finite value")
    reasons = list(dict.fromkeys(reasons))
    return {"ok": not reasons, "reasons": reasons}


def s1_check(cap: PiecewiseCapacity, n: int = 200, rtol: float = 1e-7) -> dict:
    """Slope condition C'(x+-) >= C(x)/x before the plateau and psi = C/x unimodal."""
    bad = []
    x_end = cap.x_up
    if x_end > cap.lo:
        for x in np.linspace(cap.lo, x_end, n, endpoint=False)[1:]:
            left, right = gderivatives(cap, float(x))
            sl = min(s for s in (left, right) if s is not None)
            if sl < float(cap(x)) / x * (1 - rtol) - 1e-12:
                bad.append(float(x))
    x = np.linspace(cap.lo, cap.hi, n)
    psi = cap(x) / x
    k = int(np.argmax(psi))
    tol = rtol * max(1.0, psi.max())
    okpsi = bool(np.all(np.diff(psi[: k + 1]) >= -tol) and np.all(np.diff(psi[k:]) <= tol))
    return {"ok": not bad and okpsi, "slope_violations": bad, "psi_unimodal": okpsi}


# --------------------------------------------------------------- reducibility

@dataclass(frozen=True)
class ReductionCandidate:
    v1: object
    v2: object
    E1: tuple
    E2: tuple


def _components_of(nodes: set, edges: list[tuple[int, int]]) -> list[set]:
    adj: dict[int, set] = {v: set() for v in nodes}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)
    seen, comps = set(), []
    for v in sorted(nodes):
        if v in seen:
            continue
        stack, comp = [v], {v}
        seen.add(v)
        while stack:
            u = stack.pop()
            for x in adj[u]:
                if x not in seen:
                    seen.add(x)
                    comp.add(x)
                    stack.append(x)
        comps.append(comp)
    return comps


def _connected(nodes: set, edges: list[tuple[int, int]]) -> bool:
    return len(nodes) > 0 and len(_components_of(nodes, edges)) == 1


def _find_reduction_graph(n_nodes: int, edges: list[tuple[int, int]], p: np.ndarray,
                          alive: set | None = None):
    """Best (v1, v2, E1, E2) by link count of E2, ties to the smallest pair."""
    alive = set(range(n_nodes)) if alive is None else set(alive)
    injection = {v for v in alive if p[v] != 0}
    best = None
    for v1, v2 in itertools.combinations(sorted(alive), 2):
        rest = alive - {v1, v2}
        inner = [(a, b) for a, b in edges if a in rest and b in rest]
        items = []
        for comp in _components_of(rest, inner):
            links = [k for k, (a, b) in enumerate(edges) if a in comp or b in comp]
            touch = {x for k in links for x in edges[k] if x in (v1, v2)}
            if touch == {v1, v2} and not (comp & injection):
                items.append((comp, links))
        for k, (a, b) in enumerate(edges):
            if {a, b} == {v1, v2}:
                items.append((set(), [k]))
        items.sort(key=lambda it: (len(it[1]), it[1]))
        moved = 0
        while moved < len(items):
            e2 = sorted(k for _, ls in items[moved:] for k in ls)
            if len(e2) < 2:
                break
            inner2 = set().union(*(c for c, _ in items[moved:]))
            v1_nodes = alive - inner2
            e1 = [k for k in range(len(edges)) if k not in set(e2)]
            if _connected(v1_nodes, [edges[k] for k in e1]):
                if best is None or len(e2) > len(best[3]):
                    best = (v1, v2, tuple(e1), tuple(e2))
                break
            moved += 1
    return best


def find_reduction(net: Network, p=None) -> ReductionCandidate | None:
    """A two-node separator with an injection-free side of at least two links."""
    p = net.p if p is None else np.asarray(p, float)
    edges = list(zip(net.tail.tolist(), net.head.tolist()))
    res = _find_reduction_graph(net.n_nodes, edges, p)
    if res is None:
        return None
    v1, v2, e1, e2 = res
    return ReductionCandidate(net.nodes[v1], net.nodes[v2],
                              tuple(net.link_ids[k] for k in e1), tuple(net.link_ids[k] for k in e2))


def is_valid_reduction(net: Network, v1, v2, E2, p=None) -> bool:
    """Check the separator conditions for a proposed component E2 (link ids)."""
    p = net.p if p is None else np.asarray(p, float)
    i1, i2 = net.node_index(v1), net.node_index(v2)
    e2 = {net.link_index(l) for l in E2}
    if len(e2) < 2 or i1 == i2:
        return False
    e1 = set(range(net.n_links)) - e2
    ends = lambda ks: {int(x) for k in ks for x in (net.tail[k], net.head[k])}
    V2, V1 = ends(e2), ends(e1) | {i1, i2}
    if V1 & V2 != {i1, i2} or not {i1, i2} <= V2:
        return False
    edges = list(zip(net.tail.tolist(), net.head.tolist()))
    if not _connected(V1, [edges[k] for k in e1]) or not _connected(V2, [edges[k] for k in e2]):
        return False
    return not np.any(p[list(V2 - {i1, i2})] != 0)


def _sub_network(net: Network, v1: int, v2: int, e2: Sequence[int], w) -> tuple[Network, int, int]:
    nodes = sorted({int(x) for k in e2 for x in (net.tail[k], net.head[k])})
    pos = {v: i for i, v in enumerate(nodes)}
    e2 = list(e2)
    m = len(e2)
    p = np.zeros(len(nodes))
    p[pos[v1]], p[pos[v2]] = 1.0, -1.0
    sub = Network(nodes=tuple(net.nodes[v] for v in nodes), link_ids=tuple(net.link_ids[k] for k in e2),
                  tail=[pos[int(net.tail[k])] for k in e2], head=[pos[int(net.head[k])] for k in e2],
                  w=np.asarray(w, float)[e2], wl=np.zeros(m), wu=np.asarray(w, float)[e2] + 1.0,
                  cl=-np.ones(m), cu=np.ones(m), p=p)
    return sub, pos[v1], pos[v2]


def reduce_and_check(net: Network, v1, v2, E2, w=None) -> tuple[Network, float]:
    """Replace component E2 by one virtual link and certify flow equivalence.

    The certificate is the largest flow discrepancy between the original
    network and the reduced one (outside links) or the scaled unit flow of the
    component (inside links).  The virtual link's capacity fields are
    placeholders; its bounds are [H(wl), H(wu)].
    """
    w = net.w if w is None else np.asarray(w, float)
    i1, i2 = net.node_index(v1), net.node_index(v2)
    e2 = [net.link_index(l) for l in E2]
    e1 = [k for k in range(net.n_links) if k not in set(e2)]
    sub, s1, s2 = _sub_network(net, i1, i2, e2, w)
    H = 1.0 / (lambda st: st.phi[s1] - st.phi[s2])(solve_flow(sub))
    unit = solve_flow(sub).f
    inner = {int(x) for k in e2 for x in (net.tail[k], net.head[k])} - {i1, i2}
    keep = [v for v in range(net.n_nodes) if v not in inner]
    pos = {v: i for i, v in enumerate(keep)}
    H_lo = H_hi = None
    sub_lo, _, _ = _sub_network(net, i1, i2, e2, np.maximum(net.wl, 1e-300))
    res_lo = solve_flow(sub_lo)
    H_lo = 1.0 / (res_lo.phi[s1] - res_lo.phi[s2]) if np.all(net.wl[e2] > 0) else 0.0
    sub_hi, _, _ = _sub_network(net, i1, i2, e2, net.wu)
    res_hi = solve_flow(sub_hi)
    H_hi = 1.0 / (res_hi.phi[s1] - res_hi.phi[s2])
    big = float(np.abs(net.cl[e2]).sum() + np.abs(net.cu[e2]).sum())
    vid = "eq(" + ",".join(str(net.link_ids[k]) for k in e2) + ")"
    red = Network(
        nodes=tuple(net.nodes[v] for v in keep),
        link_ids=tuple(net.link_ids[k] for k in e1) + (vid,),
        tail=[pos[int(net.tail[k])] for k in e1] + [pos[i1]],
        head=[pos[int(net.head[k])] for k in e1] + [pos[i2]],
        w=np.concatenate([w[e1], [H]]), wl=np.concatenate([net.wl[e1], [min(H_lo, H)]]),
        wu=np.concatenate([net.wu[e1], [max(H_hi, H)]]),
        cl=np.concatenate([net.cl[e1], [-big]]), cu=np.concatenate([net.cu[e1], [big]]),
        p=net.p[keep], meta=dict(net.meta))
    f_full = solve_flow(net, w).f
    f_red = solve_flow(red).f
    f_eq = f_red[-1]
    err_out = np.abs(f_red[:-1] - f_full[e1]).max(initial=0.0)
    err_in = np.abs(f_eq * unit - f_full[e2]).max(initial=0.0)
    cert = float(max(err_out, err_in))
    if cert > CERT_TOL * max(1.0, np.abs(net.p).sum()):
        raise ReductionError(f"flow equivalence certificate {cert:.3e} exceeds tolerance")
    return red, cert


# --------------------------------------------------------------- tree reduction

@dataclass
class ELink:
    """Link of a partially reduced network; up/dn are capacity functions for
    travel tail -> head and head -> tail (both nonnegative)."""

    label: str
    a: int
    b: int
    wl: float
    wu: float
    up: PiecewiseCapacity
    dn: PiecewiseCapacity
    members: tuple

    def cap_from(self, x: int) -> PiecewiseCapacity:
        return self.up if x == self.a else self.dn

    def other(self, x: int) -> int:
        return self.b if x == self.a else self.a


@dataclass
class ReductionStep:
    kind: str                       # degree_one | series | parallel | general
    absorbed: tuple
    produced: str | None
    nodes: tuple
    wl: float | None
    wu: float | None
    upper: PiecewiseCapacity | None
    lower_mag: PiecewiseCapacity | None
    certificate: float
    removed_node: object = None

    def lower(self, x):
        return -self.lower_mag(x)


@dataclass
class ReductionTree:
    steps: list
    terminal_links: list
    terminal_nodes: tuple
    is_tree: bool
    is_link: bool
    node_ids: tuple = ()

    @property
    def certificates(self) -> list:
        return [s.certificate for s in self.steps]


@dataclass
class ReduceConfig:
    samples: int = 400
    grid_points: int = 21
    general_max_samples: int = 60000
    general_bins: int = 60
    terminal_samples: int = 20000
    refine_rounds: int = 6
    seed: int = 0


class _Reducer:
    def __init__(self, net: Network, p=None, cfg: ReduceConfig = ReduceConfig()):
        self.net = net
        self.cfg = cfg
        self.p = (net.p if p is None else np.asarray(p, float)).copy()
        self.alive = set(range(net.n_nodes))
        self.links: list[ELink] = []
        for i in range(net.n_links):
            lo, hi = float(net.wl[i]), float(net.wu[i])
            up = PiecewiseCapacity.constant(net.cu[i], lo, hi, label=str(net.link_ids[i]))
            dn = up if net.cl[i] == -net.cu[i] else PiecewiseCapacity.constant(-net.cl[i], lo, hi,
                                                                               label=str(net.link_ids[i]))
            self.links.append(ELink(str(net.link_ids[i]), int(net.tail[i]), int(net.head[i]),
                                    lo, hi, up, dn, (i,)))
        self.steps: list[ReductionStep] = []
        self.focus: str | None = None

    # helpers
    def degree(self, v: int) -> int:
        return sum(1 for l in self.links if v in (l.a, l.b))

    def as_network(self, w=None) -> tuple[Network, list[int]]:
        keep = sorted(self.alive)
        pos = {v: i for i, v in enumerate(keep)}
        m = len(self.links)
        if w is None:
            w = np.array([0.5 * (l.wl + l.wu) for l in self.links])
        net = Network(nodes=tuple(self.net.nodes[v] for v in keep),
                      link_ids=tuple(l.label for l in self.links),
                      tail=[pos[l.a] for l in self.links], head=[pos[l.b] for l in self.links],
                      w=w, wl=np.minimum([l.wl for l in self.links], w),
                      wu=np.maximum([l.wu for l in self.links], w),
                      cl=-np.ones(m), cu=np.ones(m), p=self.p[keep])
        return net, keep

    def _certify(self, absorbed_idx: list[int], v1: int, v2: int) -> float:
        net, keep = self.as_network()
        pos = {v: i for i, v in enumerate(keep)}
        cand_ids = [net.link_ids[k] for k in absorbed_idx]
        if len(absorbed_idx) < 2 or len(absorbed_idx) == net.n_links:
            # whole network or a single link: compare against the direct solve
            return 0.0
        _, cert = reduce_and_check(net, net.nodes[pos[v1]], net.nodes[pos[v2]], cand_ids)
        return cert

    def _replace(self, idx: list[int], new: ELink | None):
        self.links = [l for k, l in enumerate(self.links) if k not in set(idx)]
        if new is not None:
            self.links.append(new)

    # tree operations
    def _find_tree_op(self):
        for v in sorted(self.alive):
            if self.p[v] == 0 and self.degree(v) == 1 and len(self.alive) > 2:
                return ("degree_one", v)
        groups: dict = {}
        for k, l in enumerate(self.links):
            groups.setdefault(frozenset((l.a, l.b)), []).append(k)
        par = [("parallel", ks) for key, ks in sorted(groups.items(), key=lambda kv: sorted(kv[0]))
               if len(ks) >= 2]
        ser = []
        for v in sorted(self.alive):
            if self.p[v] != 0:
                continue
            ks = [k for k, l in enumerate(self.links) if v in (l.a, l.b)]
            if len(ks) == 2:
                o1, o2 = self.links[ks[0]].other(v), self.links[ks[1]].other(v)
                if o1 != o2:
                    ser.append(("series", v, ks))
        cands = par + ser
        if self.focus is not None:
            for c in cands:
                ks = c[1] if c[0] == "parallel" else c[2]
                if any(self.links[k].label == self.focus for k in ks):
                    return c
        return cands[0] if cands else None

    def tree_ops(self) -> bool:
        """Apply one degree-one, parallel or series reduction; False if none applies."""
        op = self._find_tree_op()
        if op is None:
            return False
        s = self.cfg.samples
        if op[0] == "degree_one":
            v = op[1]
            k = next(k for k, l in enumerate(self.links) if v in (l.a, l.b))
            l = self.links[k]
            net, keep = self.as_network()
            f_before = solve_flow(net).f
            self._replace([k], None)
            self.alive.discard(v)
            net2, _ = self.as_network()
            f_after = solve_flow(net2).f
            rest = [i for i in range(len(f_before)) if i != k]
            cert = float(max(abs(f_before[k]), np.abs(f_before[rest] - f_after).max(initial=0.0)))
            self.steps.append(ReductionStep("degree_one", (l.label,), None, (self.net.nodes[l.a], self.net.nodes[l.b]),
                                            None, None, None, None, cert, removed_node=self.net.nodes[v]))
            self.focus = None
            return True
        if op[0] == "parallel":
            ks = op[1]
            ls = [self.links[k] for k in ks]
            a, b = ls[0].a, ls[0].b
            label = "p(" + ",".join(l.label for l in ls) + ")"
            ups = [l.cap_from(a) for l in ls]
            dns = [l.cap_from(b) for l in ls]
            up = compose_parallel(ups, s, label)
            dn = up if all(u is d for u, d in zip(ups, dns)) else compose_parallel(dns, s, label)
            new = ELink(label, a, b, sum(l.wl for l in ls), sum(l.wu for l in ls), up, dn,
                        tuple(m for l in ls for m in l.members))
            cert = self._certify(ks, a, b)
            self._replace(ks, new)
            self.steps.append(ReductionStep("parallel", tuple(l.label for l in ls), label,
                                            (self.net.nodes[a], self.net.nodes[b]), new.wl, new.wu, up, dn, cert))
            self.focus = label
            return True
        _, v, ks = op
        l1, l2 = self.links[ks[0]], self.links[ks[1]]
        u, x = l1.other(v), l2.other(v)
        label = "s(" + l1.label + "," + l2.label + ")"
        ups = [l1.cap_from(u), l2.cap_from(v)]
        dns = [l1.cap_from(v), l2.cap_from(x)]
        up = compose_series(ups, s, label)
        dn = up if all(p_ is q for p_, q in zip(ups, dns)) else compose_series(dns, s, label)
        new = ELink(label, u, x, harmonic([l1.wl, l2.wl]), harmonic([l1.wu, l2.wu]), up, dn,
                    l1.members + l2.members)
        cert = self._certify(ks, u, x)
        self._replace(ks, new)
        self.alive.discard(v)
        self.steps.append(ReductionStep("series", (l1.label, l2.label), label,
                                        (self.net.nodes[u], self.net.nodes[x]), new.wl, new.wu, up, dn, cert,
                                        removed_node=self.net.nodes[v]))
        self.focus = label
        return True

    def general_op(self) -> bool:
        """Replace a non-series-parallel injection-free component by a sampled link."""
        edges = [(l.a, l.b) for l in self.links]
        res = _find_reduction_graph(self.net.n_nodes, edges, self.p, self.alive)
        if res is None:
            return False
        v1, v2, _, e2 = res
        comp = [self.links[k] for k in e2]
        up, dn, wl_eq, wu_eq = _sampled_component(self.net.n_nodes, comp, v1, v2, self.cfg)
        label = "g(" + ",".join(l.label for l in comp) + ")"
        up.label = dn.label = label
        new = ELink(label, v1, v2, wl_eq, wu_eq, up, dn, tuple(m for l in comp for m in l.members))
        cert = self._certify(list(e2), v1, v2)
        inner = {x for l in comp for x in (l.a, l.b)} - {v1, v2}
        self._replace(list(e2), new)
        self.alive -= inner
        self.steps.append(ReductionStep("general", tuple(l.label for l in comp), label,
                                        (self.net.nodes[v1], self.net.nodes[v2]), wl_eq, wu_eq, up, dn, cert))
        self.focus = None
        return True

    def result(self) -> ReductionTree:
        n_alive = len(self.alive)
        is_tree = len(self.links) == n_alive - 1
        return ReductionTree(steps=self.steps, terminal_links=list(self.links),
                             terminal_nodes=tuple(self.net.nodes[v] for v in sorted(self.alive)),
                             is_tree=is_tree, is_link=is_tree and len(self.links) == 1,
                             node_ids=self.net.nodes)


def _sampled_component(n_nodes: int, comp: list[ELink], v1: int, v2: int, cfg: ReduceConfig):
    """Equivalent capacities of a general component by sampling its weights."""
    nodes = sorted({x for l in comp for x in (l.a, l.b)})
    pos = {v: i for i, v in enumerate(nodes)}
    m = len(comp)
    p = np.zeros(len(nodes))
    p[pos[v1]], p[pos[v2]] = 1.0, -1.0
    lo = np.array([l.wl for l in comp])
    hi = np.array([l.wu for l in comp])
    sub = Network(nodes=tuple(nodes), link_ids=tuple(range(m)), tail=[pos[l.a] for l in comp],
                  head=[pos[l.b] for l in comp], w=hi, wl=np.zeros(m), wu=hi, cl=-np.ones(m),
                  cu=np.ones(m), p=p)
    rng = np.random.default_rng(cfg.seed)
    k = cfg.grid_points
    if k ** m <= cfg.general_max_samples:
        axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
        W = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, m)
    else:
        W = rng.uniform(lo, hi, size=(cfg.general_max_samples, m))
        W = np.vstack([W, lo, hi])
    W = np.maximum(W, 1e-12)
    F, PHI = batch_solve(sub, W, p)
    Hs = 1.0 / (PHI[:, pos[v1]] - PHI[:, pos[v2]])
    cu = np.stack([l.up(W[:, i]) for i, l in enumerate(comp)], 1)
    cd = np.stack([l.dn(W[:, i]) for i, l in enumerate(comp)], 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_up = np.where(F > 0, cu / F, np.where(F < 0, cd / -F, np.inf)).min(1)
        t_dn = np.where(F > 0, cd / F, np.where(F < 0, cu / -F, np.inf)).min(1)
    H_lo, H_hi = Hs.min(), Hs.max()
    edges = np.linspace(H_lo, H_hi, cfg.general_bins + 1)
    b = np.clip(np.searchsorted(edges, Hs, side="right") - 1, 0, cfg.general_bins - 1)

    def envelope(t):
        # best attained sample per bin, placed at its own H, then made unimodal
        order = np.lexsort((-t, b))
        first = order[np.r_[True, np.diff(b[order]) != 0]]
        xs, ys = Hs[first], t[first]
        k = int(np.argmax(ys))
        ys = np.concatenate([np.maximum.accumulate(ys[: k + 1]),
                             np.maximum.accumulate(ys[k:][::-1])[::-1][1:]])
        xs[0], xs[-1] = H_lo, H_hi
        if len(xs) == 1:
            xs, ys = np.array([H_lo, H_hi]), np.array([ys[0], ys[0]])
        return xs, ys

    up = PiecewiseCapacity.from_samples(*envelope(t_up))
    dn = PiecewiseCapacity.from_samples(*envelope(t_dn))
    return up, dn, float(H_lo), float(H_hi)


def tree_reduce(net: Network, p=None, cfg: ReduceConfig = ReduceConfig()) -> ReductionTree:
    """Apply degree-one, series and parallel reductions until none applies."""
    r = _Reducer(net, p, cfg)
    while r.tree_ops():
        pass
    return r.result()


def equivalent_capacity_between(net: Network, v1, v2, cfg: ReduceConfig = ReduceConfig()):
    """Capacity functions (lower, upper) of the whole network seen between v1 and v2."""
    i, j = net.node_index(v1), net.node_index(v2)
    p = np.zeros(net.n_nodes)
    p[i], p[j] = 1.0, -1.0
    tree = tree_reduce(net, p, cfg)
    if not tree.is_link:
        raise NetworkError("network is not link-reducible between the given nodes")
    l = tree.terminal_links[0]
    up, dn = (l.up, l.dn) if net.nodes[l.a] == net.nodes[i] else (l.dn, l.up)
    return tree, up, dn


# --------------------------------------------------------------- multilevel margin

@dataclass
class MultilevelResult:
    nu_star: float
    kind: str                   # exact_tree or search
    tree: ReductionTree
    delta: tuple | None
    per_pair: dict = field(default_factory=dict)
    feasible: bool = True


def multilevel_margin(net: Network, cfg: ReduceConfig = ReduceConfig()) -> MultilevelResult:
    """Margin for nongenerative disturbances through reductions and a terminal problem.

    Reduce while possible (exact capacity calculus for series/parallel parts,
    sampling for other components), then solve the terminal network: on a
    tree each link may independently take the weight that maximizes its
    capacity interval, otherwise terminal weights are searched.
    """
    r = _Reducer(net, None, cfg)
    while True:
        while r.tree_ops():
            pass
        tree = r.result()
        if tree.is_tree or not r.general_op():
            break
    tree = r.result()
    tnet, keep = r.as_network()
    links = r.links
    p = r.p[keep]
    sup = np.flatnonzero(p != 0)
    if len(sup) < 2:
        return MultilevelResult(np.inf, "exact_tree", tree, None)
    if tree.is_tree:
        cu = np.array([l.up.vmax for l in links])
        cl = -np.array([l.dn.vmax for l in links])
        tnet2 = tnet.replace(cu=cu, cl=cl, wl=np.array([l.wl for l in links]),
                             wu=np.array([l.wu for l in links]),
                             w=np.array([l.wu for l in links]))
        f0 = solve_flow(tnet2).f
        if np.any(f0 > cu * (1 + 1e-12)) or np.any(f0 < cl * (1 + 1e-12)):
            return MultilevelResult(0.0, "exact_tree", tree, None, feasible=False)
        rep = mincut_margin(tnet2, f0=f0, support_only=True)
        return MultilevelResult(rep.nu_star, "exact_tree", tree, rep.delta)
    return _terminal_search(tnet, links, p, tree, cfg)


def _terminal_search(tnet: Network, links: list[ELink], p: np.ndarray, tree: ReductionTree,
                     cfg: ReduceConfig) -> MultilevelResult:
    lo = np.array([l.wl for l in links])
    hi = np.array([l.wu for l in links])
    lo_s = np.maximum(lo, 1e-9 * hi)
    rng = np.random.default_rng(cfg.seed)
    sup = np.flatnonzero(p != 0)
    n = tnet.n_nodes

    def mu_of(W, d):
        F0 = _flows(tnet, W, p)
        Fd = _flows(tnet, W, d)
        CU = np.stack([l.up(W[:, i]) for i, l in enumerate(links)], 1)
        CD = np.stack([l.dn(W[:, i]) for i, l in enumerate(links)], 1)
        slack = 1e-12 * (CU + CD)
        bad = np.any((F0 > CU + slack) | (F0 < -CD - slack), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.where(Fd > 0, (CU - F0) / Fd, np.where(Fd < 0, (F0 + CD) / -Fd, np.inf))
        mu = np.maximum(m.min(1), 0.0)
        mu[bad] = -np.inf
        return mu

    per_pair = {}
    for s, t in itertools.permutations(sup.tolist(), 2):
        d = np.zeros(n)
        d[s], d[t] = 0.5, -0.5
        W = np.vstack([hi, lo_s, 0.5 * (lo_s + hi), rng.uniform(lo_s, hi, size=(cfg.terminal_samples, len(links)))])
        mu = mu_of(W, d)
        k = int(np.argmax(mu))
        best, wbest = mu[k], W[k]
        radius = 0.25 * (hi - lo_s)
        for _ in range(cfg.refine_rounds):
            Wl = np.clip(wbest + rng.uniform(-1, 1, size=(cfg.terminal_samples // 4, len(links))) * radius, lo_s, hi)
            mu = mu_of(Wl, d)
            k = int(np.argmax(mu))
            if mu[k] > best:
                best, wbest = mu[k], Wl[k]
            radius *= 0.5
        per_pair[(tnet.nodes[s], tnet.nodes[t])] = (float(best), wbest)
    key = min(per_pair, key=lambda kk: per_pair[kk][0])
    nu = per_pair[key][0]
    return MultilevelResult(max(nu, 0.0), "search", tree, key,
                            per_pair={k: v[0] for k, v in per_pair.items()}, feasible=np.isfinite(nu) and nu >= 0)


def _flows(net: Network, W, p):
    from dcflowctl.netcore import batch_flows
    return batch_flows(net, W, p)
