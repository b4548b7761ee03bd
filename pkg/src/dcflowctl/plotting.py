"""Optional PNG rendering for CLI reports (needs matplotlib)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("--plot needs matplotlib (pip install artifact[plot])") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, out_dir, name: str) -> str:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    fig.savefig(path, dpi=110, bbox_inches="tight")
    return str(path)


def flows(out_dir, link_ids, f, cl, cu) -> str:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(max(4, 0.3 * len(f)), 3))
    x = np.arange(len(f))
    ax.bar(x, f, color="tab:blue", label="flow")
    ax.scatter(x, cu, marker="_", color="tab:red", s=120, label="cu / cl")
    ax.scatter(x, cl, marker="_", color="tab:red", s=120)
    ax.set_xticks(x, [str(l) for l in link_ids], rotation=90, fontsize=7)
    ax.set_ylabel("flow")
    ax.legend(fontsize=7)
    path = _save(fig, out_dir, "flow.png")
    plt.close(fig)
    return path


def objective_trace(out_dir, traces: dict) -> str:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3))
    for name, tr in traces.items():
        ax.plot(np.arange(len(tr)), tr, label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("best alpha")
    ax.legend(fontsize=7)
    path = _save(fig, out_dir, "subgrad_trace.png")
    plt.close(fig)
    return path


def capacity_curves(out_dir, x, lower, upper, name="eqcap.png") -> str:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(x, upper, label="C upper")
    ax.plot(x, lower, label="C lower")
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("equivalent weight")
    ax.set_ylabel("capacity")
    ax.legend(fontsize=7)
    path = _save(fig, out_dir, name)
    plt.close(fig)
    return path


def reduction_steps(out_dir, steps) -> list[str]:
    plt = _plt()
    caps = [s for s in steps if s.upper is not None]
    if not caps:
        return []
    fig, axes = plt.subplots(1, len(caps), figsize=(3 * len(caps), 2.6), squeeze=False)
    for ax, s in zip(axes[0], caps):
        x = np.linspace(s.upper.lo, s.upper.hi, 300)
        ax.plot(x, s.upper(x))
        ax.set_title(s.produced, fontsize=7)
        ax.set_xlabel("weq", fontsize=7)
    path = _save(fig, out_dir, "reduction_steps.png")
    plt.close(fig)
    return [path]


def simulation(out_dir, times, W, F, cl, cu) -> str:
    plt = _plt()
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(5, 4.5), sharex=True)
    a1.plot(times, W)
    a1.set_ylabel("weight")
    a2.plot(times, np.abs(F) / np.where(F >= 0, cu, -cl))
    a2.axhline(1.0, color="tab:red", lw=0.8)
    a2.set_ylabel("flow / capacity")
    a2.set_xlabel("time")
    path = _save(fig, out_dir, "simulation.png")
    plt.close(fig)
    return path
