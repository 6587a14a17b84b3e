"""Report writers: JSON and CSV alongside rendered matplotlib figures.

Every report path emits machine-readable output (JSON, CSV, markdown) and
a figure rendered to PNG next to it: loss curves for training runs, metric
summaries and difference-map montages for evaluation, grouped bars for
ablation tables.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .ablation import HEADLINE_METRICS, AblationReport
from .metrics import MetricReport, difference_map
from .train import StepLog, TrainResult, setup_to_dict
from .volume import Volume, save_volume

__all__ = [
    "sanitize",
    "write_json",
    "write_metric_report",
    "write_run_report",
    "write_ablation_report",
    "write_diff_maps",
]


def sanitize(obj):
    """Make a structure JSON-safe; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isfinite(f):
            return f
        return "inf" if f > 0 else ("-inf" if f < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(sanitize(doc), indent=2, sort_keys=True) + "\n", "utf-8")


def _csv_cell(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.6g}"
    return str(value)


def write_metric_report(report: MetricReport, out_dir: Path, name: str = "metrics") -> dict:
    """Write <name>.json, <name>.csv (samples + one summary row), <name>.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "headline": {
            "mae": report.mae,
            "psnr": report.psnr,
            "ms_ssim": report.ms_ssim,
            "fid": report.fid,
        },
        "summary": report.summary,
        "per_sample": report.per_sample,
        "config": report.config,
    }
    write_json(out_dir / f"{name}.json", doc)

    columns = ["sample_id", "mae", "psnr", "psnr_range", "ssim", "ms_ssim", "fid"]
    with open(out_dir / f"{name}.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in report.per_sample:
            writer.writerow([_csv_cell(row.get(c, "")) for c in columns])
        summary_row = ["mean"] + [
            _csv_cell(report.summary[c]["mean"]) for c in columns[1:]
        ]
        writer.writerow(summary_row)

    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, metric in zip(axes, ("mae", "psnr", "ms_ssim")):
        values = [row[metric] for row in report.per_sample if math.isfinite(row[metric])]
        ax.bar(range(len(values)), values, color="steelblue")
        ax.set_title(metric)
        ax.set_xlabel("sample")
    fig.suptitle(f"per-sample metrics (fid={report.fid:.3g})")
    fig.tight_layout()
    fig.savefig(out_dir / f"{name}.png", dpi=120)
    plt.close(fig)
    return doc


def write_run_report(result: TrainResult, out_dir: Path) -> None:
    """Training run report: JSON summary, CSV loss curves, curve figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    history = result.state.history
    val_history = result.state.val_history

    from .train import resolve_ablation

    _, weights, use_d = resolve_ablation(result.setup)
    active_terms = ["l1"] if weights.lambda1 > 0 else []
    if use_d:
        active_terms = ["adversarial"] + active_terms
    if weights.lambda2 > 0:
        active_terms.append("perceptual")
    if weights.kl_weight > 0:
        active_terms.append("kl")

    write_json(
        out_dir / "run_report.json",
        {
            "config": setup_to_dict(result.setup),
            "steps": result.state.step,
            "objective_terms": active_terms,
            "final_losses": dataclasses.asdict(history[-1]) if history else None,
            "validation": val_history,
        },
    )

    with open(out_dir / "loss_curves.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", *StepLog.FIELDS])
        for log in history:
            writer.writerow([log.step] + [_csv_cell(getattr(log, t)) for t in StepLog.FIELDS])

    if history:
        steps = [log.step for log in history]
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for term in ("d_loss", "g_adv", "l1", "perceptual", "kl_forward", "kl_backward"):
            ax.plot(steps, [getattr(log, term) for log in history], label=term, linewidth=1)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.set_yscale("symlog", linthresh=1e-3)
        ax.legend(fontsize=8, ncol=3)
        fig.tight_layout()
        fig.savefig(out_dir / "loss_curves.png", dpi=120)
        plt.close(fig)

    if val_history:
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
        steps = [v["step"] for v in val_history]
        for ax, metric in zip(axes, ("mae", "psnr", "ms_ssim")):
            ax.plot(steps, [v[metric] for v in val_history], marker="o", markersize=3)
            ax.set_title(f"validation {metric}")
            ax.set_xlabel("step")
        fig.tight_layout()
        fig.savefig(out_dir / "val_curves.png", dpi=120)
        plt.close(fig)


def _format_cell(cell: dict) -> str:
    return f"{cell['mean']:.4g} ± {cell['std']:.3g}"


def write_ablation_report(report: AblationReport, out_dir: Path) -> None:
    """Comparison table as markdown, CSV, JSON, and a grouped-bar figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    write_json(
        out_dir / "ablation.json",
        {
            "suite": report.suite,
            "seeds": report.seeds,
            "rows": [dataclasses.asdict(row) for row in report.rows],
        },
    )

    with open(out_dir / "ablation.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model"] + [m for metric in HEADLINE_METRICS for m in (f"{metric}_mean", f"{metric}_std")])
        for row in report.rows:
            cells = []
            for metric in HEADLINE_METRICS:
                cells += [_csv_cell(row.cells[metric]["mean"]), _csv_cell(row.cells[metric]["std"])]
            writer.writerow([row.label] + cells)

    lines = [
        "| Model | " + " | ".join(m.upper().replace("_", "-") for m in HEADLINE_METRICS) + " |",
        "|" + "---|" * (len(HEADLINE_METRICS) + 1),
    ]
    for row in report.rows:
        lines.append(
            "| " + row.label + " | " + " | ".join(_format_cell(row.cells[m]) for m in HEADLINE_METRICS) + " |"
        )
    (out_dir / "ablation.md").write_text("\n".join(lines) + "\n", "utf-8")

    fig, axes = plt.subplots(1, len(HEADLINE_METRICS), figsize=(3.2 * len(HEADLINE_METRICS), 3.4))
    labels = [row.label for row in report.rows]
    for ax, metric in zip(axes, HEADLINE_METRICS):
        means = [row.cells[metric]["mean"] for row in report.rows]
        stds = [row.cells[metric]["std"] for row in report.rows]
        ax.bar(range(len(labels)), means, yerr=stds, capsize=3, color="slategray")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
        ax.set_title(metric)
    fig.suptitle(f"ablation suite: {report.suite}")
    fig.tight_layout()
    fig.savefig(out_dir / "ablation.png", dpi=120)
    plt.close(fig)


def write_diff_maps(
    reals: list[Volume], fakes: list[Volume], sample_ids: list[str], out_dir: Path
) -> list[Path]:
    """Absolute-difference volumes as .vol files plus a mid-slice montage."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    diffs = []
    for real, fake, sid in zip(reals, fakes, sample_ids):
        diff = difference_map(real, fake)
        path = out_dir / f"diff_{sid}.vol"
        save_volume(diff, path)
        paths.append(path)
        diffs.append(diff)

    n = min(len(diffs), 8)
    fig, axes = plt.subplots(1, n, figsize=(2.2 * n, 2.6))
    if n == 1:
        axes = [axes]
    for ax, diff, sid in zip(axes, diffs[:n], sample_ids[:n]):
        mid = diff.data[diff.shape[0] // 2]
        im = ax.imshow(mid, cmap="inferno", vmin=0.0)
        ax.set_title(sid, fontsize=7)
        ax.axis("off")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.suptitle("absolute difference, mid-axial slice", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_dir / "diff_maps.png", dpi=120)
    plt.close(fig)
    return paths
