"""Figure rendering for the command-line reports.

Every figure is rendered headlessly to a PNG and accompanied by a small
CSV of (x, y, series) triples holding exactly the plotted points, so the
numbers behind any figure can be regenerated or re-plotted without
matplotlib.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

__all__ = [
    "write_plot_data",
    "render_run_curves",
    "render_sweep_tradeoff",
    "render_bound_margins",
]


def write_plot_data(path: Path, triples) -> None:
    """Write (x, y, series) rows; x and y formatted with 17 significant digits."""
    lines = ["x,y,series"]
    for x, y, series in triples:
        lines.append(f"{float(x):.17g},{float(y):.17g},{series}")
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def _finish(fig, png_path: Path) -> None:
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def render_run_curves(out_dir: Path, stem: str, curves: dict) -> list[Path]:
    """Objective and squared gradient norm against the step index.

    curves maps a series label (one per seed) to a list of metric records.
    """
    out_dir = Path(out_dir)
    png = out_dir / f"{stem}_curves.png"
    data = out_dir / f"{stem}_curves.csv"
    fig, (ax_obj, ax_grad) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    triples = []
    for label, records in sorted(curves.items()):
        ks = [r.k for r in records]
        objs = [r.objective for r in records]
        gns = [r.grad_norm_sq for r in records]
        ax_obj.plot(ks, objs, label=label, lw=1.0)
        ax_grad.plot(ks, gns, label=label, lw=1.0)
        triples.extend((k, o, f"objective/{label}") for k, o in zip(ks, objs))
        triples.extend((k, g, f"grad_norm_sq/{label}") for k, g in zip(ks, gns))
    for ax, name in ((ax_obj, "objective"), (ax_grad, "squared gradient norm")):
        ax.set_xlabel("step")
        ax.set_ylabel(name)
        if min((t[1] for t in triples), default=1.0) > 0.0:
            ax.set_yscale("log")
    ax_obj.legend(fontsize=7)
    _finish(fig, png)
    write_plot_data(data, triples)
    return [png, data]


def render_sweep_tradeoff(out_dir: Path, stem: str, rows: list[dict]) -> list[Path]:
    """Scatter final objective against simulated wall-clock per sweep point."""
    out_dir = Path(out_dir)
    png = out_dir / f"{stem}_tradeoff.png"
    data = out_dir / f"{stem}_tradeoff.csv"
    fig, ax = plt.subplots(figsize=(5.4, 4.0))
    triples = []
    by_alg: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        wall = row.get("wall_clock_s")
        obj = row.get("final_objective")
        if wall is None or obj is None:
            continue
        by_alg.setdefault(row["algorithm"], []).append((float(wall), float(obj)))
    for alg_name in sorted(by_alg):
        pts = by_alg[alg_name]
        ax.scatter([p[0] for p in pts], [p[1] for p in pts], s=18, label=alg_name)
        triples.extend((w, o, alg_name) for w, o in pts)
    ax.set_xlabel("simulated wall-clock (s)")
    ax.set_ylabel("final objective")
    if triples and min(t[1] for t in triples) > 0.0:
        ax.set_yscale("log")
    if by_alg:
        ax.legend(fontsize=7)
    else:
        # nothing to scatter without a timing model; say so instead of
        # shipping a silently blank figure
        ax.text(0.5, 0.5, "no timed runs", ha="center", va="center",
                transform=ax.transAxes, fontsize=9, color="0.4")
    _finish(fig, png)
    write_plot_data(data, triples)
    return [png, data]


def render_bound_margins(out_dir: Path, stem: str, report: dict) -> list[Path]:
    """Per-seed averaged gradient norms next to the certified ceiling."""
    out_dir = Path(out_dir)
    png = out_dir / f"{stem}_margin.png"
    data = out_dir / f"{stem}_margin.csv"
    seeds = [entry["seed"] for entry in report["per_seed"]]
    lhs = [entry["lhs"] for entry in report["per_seed"]]
    rhs = report["rhs"]
    mean_lhs = report["mean_lhs"]
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    ax.bar(range(len(seeds)), lhs, color="#4878a8", label="per-seed average")
    ax.axhline(mean_lhs, color="#33a02c", lw=1.4, label="mean over seeds")
    ax.axhline(rhs, color="#d62728", lw=1.4, label="ceiling")
    ax.set_xticks(range(len(seeds)))
    ax.set_xticklabels([str(s) for s in seeds], fontsize=6)
    ax.set_xlabel("seed")
    ax.set_ylabel("averaged squared gradient norm")
    ax.legend(fontsize=7)
    triples = [(float(s), float(v), "per_seed") for s, v in zip(seeds, lhs)]
    triples.append((0.0, float(mean_lhs), "mean_lhs"))
    triples.append((0.0, float(rhs), "rhs"))
    _finish(fig, png)
    write_plot_data(data, triples)
    return [png, data]
