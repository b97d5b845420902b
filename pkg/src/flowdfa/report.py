"""Experiment report rendering.

Writes the flat results file, a human-readable mean-AUC table, per-cell
ROC point files, and two figures: overlaid ROC curves per condition and
a grouped mean-AUC bar chart. Everything lands under one directory so a
report is a self-contained artifact.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import ExperimentResult

_MODEL_COLORS = {
    "state_frequency": "#1f77b4",
    "markov": "#ff7f0e",
    "boxplot": "#2ca02c",
}


def write_results_csv(result: ExperimentResult, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "condition", "run", "auc"])
        for row in result.rows:
            writer.writerow([row["model"], row["condition"], row["run"], repr(row["auc"])])


def summary_table(result: ExperimentResult) -> str:
    """Mean AUC per model and condition as a fixed-width text table."""
    cells = result.cells()
    models = sorted({m for m, _ in cells})
    conditions = []
    for _, c in cells:
        if c not in conditions:
            conditions.append(c)
    width = max(12, max(len(c) for c in conditions) + 2)
    name_width = max(len(m) for m in models) + 2
    lines = ["mean AUC over runs", ""]
    header = " " * name_width + "".join(c.rjust(width) for c in conditions)
    lines.append(header)
    for model in models:
        row = model.ljust(name_width)
        for condition in conditions:
            if (model, condition) in cells:
                row += f"{result.mean_auc(model, condition):.4f}".rjust(width)
            else:
                row += "-".rjust(width)
        lines.append(row)
    return "\n".join(lines) + "\n"


def write_roc_points(result: ExperimentResult, out_dir: Path) -> list[Path]:
    """One two-column (fpr, tpr) text file per model and condition."""
    paths = []
    for (model, condition), curve in result.curves.items():
        path = out_dir / f"roc_{model}_{condition}.tsv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("fpr\ttpr\n")
            for x, y in curve.points:
                fh.write(f"{x!r}\t{y!r}\n")
        paths.append(path)
    return paths


def render_roc_figure(result: ExperimentResult, path: Path) -> None:
    conditions = []
    for _, c in result.cells():
        if c not in conditions:
            conditions.append(c)
    n = len(conditions)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 4.2), squeeze=False)
    for ax, condition in zip(axes[0], conditions):
        for (model, cond), curve in result.curves.items():
            if cond != condition:
                continue
            xs = [p[0] for p in curve.points]
            ys = [p[1] for p in curve.points]
            ax.plot(xs, ys, label=f"{model} ({curve.auc:.3f})",
                    color=_MODEL_COLORS.get(model))
        ax.plot([0, 1], [0, 1], linestyle=":", color="gray", linewidth=1)
        ax.set_title(condition)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_auc_bars(result: ExperimentResult, path: Path) -> None:
    cells = result.cells()
    models = sorted({m for m, _ in cells})
    conditions = []
    for _, c in cells:
        if c not in conditions:
            conditions.append(c)
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(conditions), 4.0))
    bar_width = 0.8 / max(1, len(models))
    for i, model in enumerate(models):
        xs = [j + i * bar_width for j in range(len(conditions))]
        ys = [result.mean_auc(model, c) if (model, c) in cells else 0.0 for c in conditions]
        ax.bar(xs, ys, bar_width, label=model, color=_MODEL_COLORS.get(model))
    ax.set_xticks([j + bar_width * (len(models) - 1) / 2 for j in range(len(conditions))])
    ax.set_xticklabels(conditions, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean AUC")
    ax.axhline(0.5, linestyle=":", color="gray", linewidth=1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(result: ExperimentResult, out_dir: str | Path) -> dict[str, Path]:
    """Render every artifact; returns the paths written, keyed by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}

    results_path = out / "results.csv"
    write_results_csv(result, results_path)
    artifacts["results"] = results_path

    summary_path = out / "summary.txt"
    summary_path.write_text(summary_table(result), encoding="utf-8")
    artifacts["summary"] = summary_path

    for path in write_roc_points(result, out):
        artifacts[path.stem] = path

    roc_fig = out / "roc_curves.png"
    render_roc_figure(result, roc_fig)
    artifacts["roc_figure"] = roc_fig

    bar_fig = out / "auc_bars.png"
    render_auc_bars(result, bar_fig)
    artifacts["auc_figure"] = bar_fig
    return artifacts
