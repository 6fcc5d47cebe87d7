"""Static figures rendered from a run report (Agg backend, PNG files)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .wire import decode_float  # noqa: E402


def _active_cost_figure(report: dict[str, Any], path: Path) -> None:
    ticks = [t for t in report["ticks"] if t["mean_active_cost"] is not None]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(
        [t["t_ms"] for t in ticks],
        [decode_float(t["mean_active_cost"]) for t in ticks],
        marker="o",
        markersize=3,
        label="mean rank-1 cost",
    )
    for ev in report["convergence"]:
        ax.axvline(ev["event_ms"], color="tab:red", linestyle="--", linewidth=1)
        ax.annotate(
            f"{ev['event']} (+{ev['latency_ms']} ms)",
            (ev["event_ms"], ax.get_ylim()[1]),
            rotation=90,
            fontsize=7,
            va="top",
            ha="right",
        )
    ax.set_xlabel("logical time (ms)")
    ax.set_ylabel("cost")
    ax.set_title(f"Active routes, {report['intent_id']}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _reliability_figure(report: dict[str, Any], path: Path) -> None:
    rows = []
    for src in report["telemetry"]["sources"].values():
        for lid, stats in src["links"].items():
            if stats["reliability"] is None or stats["cost_mean"] is None:
                continue
            rows.append((lid, stats["cost_mean"], decode_float(stats["reliability"])))
    rows.sort()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    finite = [r for r in rows if math.isfinite(r[2])]
    cap = max((r[2] for r in finite), default=1.0) * 1.1
    xs = range(len(rows))
    heights = [r[2] if math.isfinite(r[2]) else cap for r in rows]
    colors = ["tab:blue" if math.isfinite(r[2]) else "tab:green" for r in rows]
    ax.bar(xs, heights, color=colors)
    ax.set_xticks(list(xs))
    ax.set_xticklabels([r[0] for r in rows], rotation=90, fontsize=6)
    ax.set_ylabel("reliability (Sharpe)")
    ax.set_title("Link reliability over the run (green: zero variance)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(report: dict[str, Any], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "active_cost.png", out / "link_reliability.png"]
    _active_cost_figure(report, paths[0])
    _reliability_figure(report, paths[1])
    return paths
