"""PNG figures for run records and chain-class covers (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_record(record, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rs = sorted(record.results, key=lambda r: r.k)
    if not rs:
        return []
    k = np.array([r.k for r in rs], dtype=float)
    paths = []

    fig, ax = plt.subplots(figsize=(5, 4))
    tau = np.array([abs(r.tau_k) for r in rs])
    ax.loglog(k, np.where(tau > 0, tau, np.nan), "o-", label=r"$|\tau_k|$")
    ax.loglog(k, 1.0 / k, "--", color="gray", label="1/k")
    ax.set_xlabel("k")
    ax.set_ylabel("perturbation size")
    ax.legend()
    ax.set_title(record.scenario_id)
    p = out / f"{record.scenario_id}_tau.png"
    fig.tight_layout()
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(k, [r.d_x for r in rs], "o-", label=r"$d(x, p_k)$")
    ax.loglog(k, [r.d_y for r in rs], "s-", label=r"$d(y, f^{n}_{\tau}(p_k))$")
    ax.loglog(k, [r.bound for r in rs], "--", color="gray", label="(L+1)/k")
    ax.set_xlabel("k")
    ax.legend()
    ax.set_title(record.scenario_id)
    p = out / f"{record.scenario_id}_dist.png"
    fig.tight_layout()
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths


def plot_classes(graph, classes, path, max_points: int = 200_000, seed: int = 0) -> Path:
    """Box centres of each class projected to the (x, theta) plane."""
    rng = np.random.default_rng(seed)
    fig, ax = plt.subplots(figsize=(5, 5))
    for cid, c in enumerate(classes):
        boxes = c.boxes
        if len(boxes) > max_points:
            boxes = rng.choice(boxes, max_points, replace=False)
        ctr = graph.grid.center(boxes)
        ax.scatter(ctr[:, 0], ctr[:, 2], s=2, alpha=0.3, label=f"class {cid} ({len(c)} boxes)")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("x")
    ax.set_ylabel(r"$\theta$")
    ax.legend(loc="upper right", markerscale=4)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_shadow_table(table, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    sup = table.sup_by_eps()
    eps = sorted(sup)
    ax.semilogx(eps, [sup[e] for e in eps], "o-", label="sup d(x_i, w_i)/eps")
    ax.set_xlabel("eps")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
