"""Delimited reports and the matplotlib figures rendered next to them.

Every writer is deterministic: CSV floats use repr-stable formatting and
PNGs are saved without timestamp/software metadata so identical inputs
produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport

_PNG_META = {"Software": None}


def _save_png(fig, path: Path) -> None:
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def write_config_echo(path: str | Path, config: dict) -> None:
    """Reproducibility record written next to every artifact."""
    Path(path).write_text(
        json.dumps(config, sort_keys=True, indent=2, default=str) + "\n",
        encoding="utf-8")


def save_eval_report(report: EvalReport, out_dir: str | Path,
                     stem: str = "eval_report") -> tuple[Path, Path, Path]:
    """CSV + JSONL + figure for an evaluation run; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = report.sorted_rows()

    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "frames", "l2p_m", "l2q", "foot_slide_mps"])
        for r in rows:
            w.writerow([r.method, r.frames, f"{r.l2p:.6f}", f"{r.l2q:.6f}",
                        f"{r.foot_slide:.6f}"])

    jsonl_path = out_dir / f"{stem}.jsonl"
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(
                {"method": r.method, "frames": r.frames,
                 "l2p_m": round(r.l2p, 6), "l2q": round(r.l2q, 6),
                 "foot_slide_mps": round(r.foot_slide, 6)},
                sort_keys=True) + "\n")

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    metric_names = [("l2p", "L2P (m)"), ("l2q", "L2Q"),
                    ("foot_slide", "foot slide (m/s)")]
    for ax, (attr, label) in zip(axes, metric_names):
        for method in report.methods():
            pts = [(r.frames, getattr(r, attr)) for r in rows if r.method == method]
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    marker="o", label=method)
        ax.set_xlabel("transition frames")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    png_path = out_dir / f"{stem}.png"
    _save_png(fig, png_path)
    return csv_path, jsonl_path, png_path


def save_loss_curve(curve: list[float], out_dir: str | Path,
                    stem: str = "loss_curve") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for i, v in enumerate(curve):
            w.writerow([i, f"{v:.8f}"])

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(curve, lw=0.6, alpha=0.5, label="per step")
    if len(curve) >= 200:
        k = 100
        smooth = np.convolve(curve, np.ones(k) / k, mode="valid")
        ax.plot(np.arange(len(smooth)) + k - 1, smooth, lw=1.5,
                label=f"{k}-step mean")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    png_path = out_dir / f"{stem}.png"
    _save_png(fig, png_path)
    return csv_path, png_path


def save_query_figure(candidates: list[dict], out_dir: str | Path,
                      stem: str = "candidates") -> tuple[Path, Path]:
    """Candidate polylines (query frame) + one JSONL record per candidate.

    Each candidate dict needs: polyline (N, 2 list), label, duration,
    error, ids.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jsonl_path = out_dir / f"{stem}.jsonl"
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(json.dumps(c, sort_keys=True) + "\n")

    fig, ax = plt.subplots(figsize=(6, 6))
    colors = {"fast": "tab:red", "medium": "tab:orange", "slow": "tab:blue"}
    for c in candidates:
        line = np.asarray(c["polyline"])
        ax.plot(line[:, 0], line[:, 1], color=colors.get(c["label"], "gray"),
                alpha=0.8, lw=1.4,
                label=f"{c['label']} ({c['duration']}f)")
    if candidates:
        line = np.asarray(candidates[0]["polyline"])
        ax.plot(*line[0], marker="o", color="black")
        ax.plot(*line[-1], marker="*", color="black", markersize=12)
    ax.set_aspect("equal")
    ax.grid(True, alpha=0.3)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("z (m)")
    handles, labels = ax.get_legend_handles_labels()
    seen: dict[str, object] = {}
    for h, lab in zip(handles, labels):
        seen.setdefault(lab, h)
    ax.legend(seen.values(), seen.keys(), fontsize=8)
    fig.tight_layout()
    png_path = out_dir / f"{stem}.png"
    _save_png(fig, png_path)
    return jsonl_path, png_path
