"""Evaluation artifacts: per-sample CSV, report JSON, and rendered figures.

matplotlib is imported lazily with the Agg backend so headless runs work and
commands that skip figures never pay for the import.
"""

from __future__ import annotations

import csv
import json
import os

from .pipeline import EpochStats, SampleResult


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def write_report_json(path: str, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_per_sample_csv(path: str, rows: list[SampleResult]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "node_count", "z", "bleu4", "rouge_l", "meteor",
                         "prediction", "reference"])
        for r in rows:
            writer.writerow([r.id, r.node_count, f"{r.z:.6f}", f"{r.bleu:.6f}",
                             f"{r.rouge:.6f}", f"{r.meteor:.6f}",
                             " ".join(r.prediction), " ".join(r.reference)])


def render_eval_figures(rows: list[SampleResult], out_dir: str) -> list[str]:
    """Score histograms and a length comparison; returns the paths written."""
    plt = _plt()
    paths = []

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, (label, values) in zip(axes, [
        ("BLEU-4", [r.bleu for r in rows]),
        ("ROUGE-L", [r.rouge for r in rows]),
        ("METEOR", [r.meteor for r in rows]),
    ]):
        ax.hist(values, bins=20, range=(0.0, 1.0), color="#4878cf", edgecolor="white")
        ax.set_title(label)
        ax.set_xlabel("score")
        ax.set_ylabel("samples")
    fig.tight_layout()
    path = os.path.join(out_dir, "score_histograms.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(5, 5))
    ref_lens = [len(r.reference) for r in rows]
    pred_lens = [len(r.prediction) for r in rows]
    ax.scatter(ref_lens, pred_lens, s=18, alpha=0.6, color="#d65f5f")
    top = max(ref_lens + pred_lens + [1])
    ax.plot([0, top], [0, top], linestyle="--", linewidth=1, color="gray")
    ax.set_xlabel("reference length (words)")
    ax.set_ylabel("prediction length (words)")
    ax.set_title("Summary lengths")
    fig.tight_layout()
    path = os.path.join(out_dir, "summary_lengths.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    return paths


def render_loss_curve(stats: list[EpochStats], path: str) -> str:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [s.epoch for s in stats]
    ax.plot(epochs, [s.loss for s in stats], marker="o", markersize=3,
            color="#4878cf", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    bleus = [(s.epoch, s.val_bleu) for s in stats if s.val_bleu is not None]
    if bleus:
        twin = ax.twinx()
        twin.plot([b[0] for b in bleus], [b[1] for b in bleus], marker="s",
                  markersize=3, color="#d65f5f", label="val BLEU-4")
        twin.set_ylabel("validation BLEU-4")
        lines = ax.get_lines() + twin.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="best")
    else:
        ax.legend(loc="best")
    ax.set_title("Training")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
