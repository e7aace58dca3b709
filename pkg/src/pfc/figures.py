"""Benchmark figures: bar charts of the headline metrics, written to files.

One figure per task, three panels: fraction solved (with SEM error bars when
a summary aggregates several runs), fraction of invalid actions, and average
plan length (grouped per optimality bucket for the graph tasks).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import MetricsSummary, _label_sort_key


def _bar_panel(ax, summaries, values, errors, title, ylim=None):
    labels = [s.label for s in summaries]
    positions = range(len(labels))
    ax.bar(positions, values, yerr=errors, capsize=3, color="#4878a8")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_title(title, fontsize=10)
    if ylim:
        ax.set_ylim(*ylim)


def render_task_figure(task: str, summaries: Sequence[MetricsSummary], path: Path) -> Path:
    summaries = sorted(summaries, key=lambda s: _label_sort_key(s.label))
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    _bar_panel(
        axes[0],
        summaries,
        [s.fraction_solved_strict for s in summaries],
        [s.fraction_solved_strict_sem or 0.0 for s in summaries],
        "Fraction solved",
        ylim=(0, 1.05),
    )
    _bar_panel(
        axes[1],
        summaries,
        [s.fraction_invalid_actions for s in summaries],
        [s.fraction_invalid_actions_sem or 0.0 for s in summaries],
        "Fraction invalid actions",
        ylim=(0, 1.05),
    )
    buckets = sorted({b for s in summaries for b, _ in s.plan_steps_by_bucket})
    ax = axes[2]
    if buckets:
        width = 0.8 / len(summaries)
        for i, s in enumerate(summaries):
            steps = dict(s.plan_steps_by_bucket)
            xs = [j + i * width for j in range(len(buckets))]
            ax.bar(xs, [steps.get(b, 0.0) for b in buckets], width=width, label=s.label)
        ax.set_xticks([j + 0.4 - width / 2 for j in range(len(buckets))])
        ax.set_xticklabels([f"{b}-step" for b in buckets], fontsize=8)
        ax.legend(fontsize=7)
    else:
        _bar_panel(
            ax,
            summaries,
            [s.avg_plan_steps or 0.0 for s in summaries],
            [0.0 for _ in summaries],
            "Avg plan steps",
        )
    ax.set_title("Plan length", fontsize=10)
    fig.suptitle(task)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_figures(summaries: Sequence[MetricsSummary], out_dir: Path | str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for task in sorted({s.task for s in summaries}):
        task_summaries = [s for s in summaries if s.task == task]
        written.append(render_task_figure(task, task_summaries, out_dir / f"{task}_metrics.png"))
    return written
