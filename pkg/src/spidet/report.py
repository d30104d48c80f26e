"""Benchmark report emission: delimited tables, stats JSON, and figures.

A report directory holds metrics.csv (mean metric per dataset/gamma/kind),
ranks.csv (per-row method ranks by mean average precision), stats.json
(Friedman statistic, p-value, Nemenyi critical difference, average ranks,
and the full run configuration), and two PNG figures: a critical-difference
diagram and average-rank bars per metric. Everything written here is
byte-deterministic for a fixed report.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import METRIC_NAMES, EvalReport
from .evaluation import rank_rows


def _fmt(v: float) -> str:
    return repr(float(v))


def write_metrics_csv(report: EvalReport, path: Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "gamma", "kind", *METRIC_NAMES])
        for r, (name, gamma) in enumerate(report.row_keys):
            for c, kind in enumerate(report.kinds):
                w.writerow(
                    [name, _fmt(gamma), kind]
                    + [_fmt(report.means[m][r, c]) for m in METRIC_NAMES]
                )


def write_ranks_csv(report: EvalReport, path: Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "gamma", *report.kinds])
        for r, (name, gamma) in enumerate(report.row_keys):
            w.writerow([name, _fmt(gamma)] + [_fmt(v) for v in report.rank_table.ranks[r]])


def write_stats_json(report: EvalReport, path: Path):
    doc = {
        "friedman_chi2": report.chi2,
        "p_value": report.p_value,
        "nemenyi_cd": report.cd,
        "average_ranks": {k: float(v) for k, v in zip(report.kinds, report.rank_table.average)},
        "datasets": len(report.row_keys),
        "config": report.config,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cd_groups(order: np.ndarray, avg: np.ndarray, cd: float) -> list[tuple[int, int]]:
    """Maximal index spans (into the sorted order) whose rank gap is within cd."""
    spans = []
    k = len(order)
    for a in range(k):
        b = a
        while b + 1 < k and avg[order[b + 1]] - avg[order[a]] <= cd:
            b += 1
        if b > a:
            spans.append((a, b))
    return [s for s in spans if not any(o[0] <= s[0] and s[1] <= o[1] and o != s for o in spans)]


def render_cd_diagram(report: EvalReport, path: Path):
    """Critical-difference diagram: methods on a rank axis, equivalent groups joined."""
    avg = report.rank_table.average
    kinds = report.kinds
    k = len(kinds)
    order = np.argsort(avg, kind="stable")
    lo, hi = 1.0, float(k)

    fig, ax = plt.subplots(figsize=(7.0, 2.2 + 0.35 * k), dpi=100)
    ax.set_xlim(lo - 0.3, hi + 0.3)
    ax.set_ylim(-0.8 - 0.55 * ((k + 1) // 2), 1.6)
    ax.axis("off")
    ax.plot([lo, hi], [0, 0], color="black", lw=1.2)
    for tick in range(1, k + 1):
        ax.plot([tick, tick], [0, 0.12], color="black", lw=1.0)
        ax.text(tick, 0.2, str(tick), ha="center", va="bottom", fontsize=9)

    # method stems alternate left/right for readability
    for pos, idx in enumerate(order):
        side = -1 if pos % 2 == 0 else 1
        level = -0.35 - 0.55 * (pos // 2)
        x = float(avg[idx])
        ax.plot([x, x], [0, level + 0.1], color="gray", lw=0.8)
        label_x = lo - 0.25 if side < 0 else hi + 0.25
        ha = "right" if side < 0 else "left"
        ax.plot([x, label_x], [level + 0.1, level + 0.1], color="gray", lw=0.8)
        ax.text(label_x, level + 0.1, f" {kinds[idx]} ({avg[idx]:.2f}) ", ha=ha, va="center", fontsize=9)

    if report.cd is not None:
        ax.plot([lo, lo + report.cd], [1.1, 1.1], color="black", lw=2.0)
        ax.plot([lo, lo], [1.02, 1.18], color="black", lw=1.0)
        ax.plot([lo + report.cd, lo + report.cd], [1.02, 1.18], color="black", lw=1.0)
        ax.text(lo + report.cd / 2, 1.25, f"CD = {report.cd:.2f}", ha="center", fontsize=9)
        for span_i, (a, b) in enumerate(_cd_groups(order, avg, report.cd)):
            y = -0.12 - 0.07 * span_i
            ax.plot([avg[order[a]] - 0.03, avg[order[b]] + 0.03], [y, y], color="black", lw=2.4)

    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def render_average_rank_bars(report: EvalReport, path: Path):
    """One bar panel per metric showing each method's average rank (lower = better)."""
    fig, axes = plt.subplots(1, len(METRIC_NAMES), figsize=(3.0 * len(METRIC_NAMES), 3.0), dpi=100)
    if len(METRIC_NAMES) == 1:
        axes = [axes]
    xs = np.arange(len(report.kinds))
    for ax, metric in zip(axes, METRIC_NAMES):
        avg = rank_rows(report.means[metric]).mean(axis=0)
        ax.bar(xs, avg, color="#4878a8")
        ax.set_xticks(xs)
        ax.set_xticklabels(report.kinds, rotation=45, ha="right", fontsize=8)
        ax.set_title(metric, fontsize=10)
        ax.set_ylim(0, len(report.kinds) + 0.5)
        ax.set_ylabel("average rank", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def write_report(report: EvalReport, outdir: str | Path, figures: bool = True) -> list[Path]:
    """Write the full report directory; returns the created file paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    created = []
    write_metrics_csv(report, outdir / "metrics.csv")
    created.append(outdir / "metrics.csv")
    write_ranks_csv(report, outdir / "ranks.csv")
    created.append(outdir / "ranks.csv")
    write_stats_json(report, outdir / "stats.json")
    created.append(outdir / "stats.json")
    if figures:
        render_cd_diagram(report, outdir / "cd_diagram.png")
        created.append(outdir / "cd_diagram.png")
        render_average_rank_bars(report, outdir / "average_ranks.png")
        created.append(outdir / "average_ranks.png")
    return created
