"""Evaluation tables, CSV serialization, and rendered figures.

Every delimited file the harness writes can be read back by the matching
reader here. Figures are rendered with matplotlib (Agg backend) next to the
CSV they visualize; the prediction overlay chart is written as SVG.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ShapeError
from .motion import MotionSequence

_FLOAT_FMT = "%.17g"

EVAL_COLUMNS = ("action", "horizon_ms", "model_err", "baseline_err")
SMOOTHNESS_COLUMNS = ("action", "ground_truth", "generated")


@dataclass
class EvalRow:
    action: str
    horizon_ms: float
    model_err: float
    baseline_err: float


@dataclass
class SmoothnessRow:
    action: str
    ground_truth: float
    generated: float


def write_eval_csv(path, rows: list[EvalRow]) -> None:
    lines = [",".join(EVAL_COLUMNS)]
    for r in rows:
        lines.append(
            f"{r.action},{_FLOAT_FMT % r.horizon_ms},{_FLOAT_FMT % r.model_err},{_FLOAT_FMT % r.baseline_err}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_eval_csv(path) -> list[EvalRow]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != ",".join(EVAL_COLUMNS):
        raise ShapeError(f"{path}: unexpected evaluation CSV header")
    out = []
    for line in lines[1:]:
        action, ms, model, baseline = line.split(",")
        out.append(EvalRow(action, float(ms), float(model), float(baseline)))
    return out


def write_smoothness_csv(path, rows: list[SmoothnessRow]) -> None:
    lines = [",".join(SMOOTHNESS_COLUMNS)]
    for r in rows:
        lines.append(f"{r.action},{_FLOAT_FMT % r.ground_truth},{_FLOAT_FMT % r.generated}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_smoothness_csv(path) -> list[SmoothnessRow]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != ",".join(SMOOTHNESS_COLUMNS):
        raise ShapeError(f"{path}: unexpected smoothness CSV header")
    out = []
    for line in lines[1:]:
        action, gt, gen = line.split(",")
        out.append(SmoothnessRow(action, float(gt), float(gen)))
    return out


def render_eval_table(rows: list[EvalRow]) -> str:
    """Fixed-width text table: one block per action, methods as rows, horizons
    as columns, plus an across-action average block."""
    by_action: dict[str, list[EvalRow]] = {}
    for r in rows:
        by_action.setdefault(r.action, []).append(r)
    horizons = sorted({r.horizon_ms for r in rows})

    def fmt_ms(ms: float) -> str:
        return f"{ms:g}"

    header = ["millisecond (ms)"] + [fmt_ms(ms) for ms in horizons]
    col = max(10, max(len(h) for h in header) + 2)
    lines: list[str] = []

    def block(title: str, model_vals: dict[float, float], base_vals: dict[float, float]) -> None:
        lines.append(title)
        lines.append("".join(f"{h:>{col}}" for h in header))
        for name, vals in (("zero-velocity", base_vals), ("model", model_vals)):
            cells = [f"{name:>{col}}"]
            for ms in horizons:
                cells.append(f"{vals.get(ms, float('nan')):>{col}.2f}")
            lines.append("".join(cells))
        lines.append("")

    for action in sorted(by_action):
        model_vals = {r.horizon_ms: r.model_err for r in by_action[action]}
        base_vals = {r.horizon_ms: r.baseline_err for r in by_action[action]}
        block(action, model_vals, base_vals)

    if len(by_action) > 1:
        avg_model = {
            ms: float(np.mean([r.model_err for r in rows if r.horizon_ms == ms])) for ms in horizons
        }
        avg_base = {
            ms: float(np.mean([r.baseline_err for r in rows if r.horizon_ms == ms])) for ms in horizons
        }
        block("average", avg_model, avg_base)
    return "\n".join(lines).rstrip() + "\n"


def plot_eval_curves(rows: list[EvalRow], out_dir) -> list[Path]:
    """One error-versus-horizon figure per action, plus an overall average."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_action: dict[str, list[EvalRow]] = {}
    for r in rows:
        by_action.setdefault(r.action, []).append(r)
    written = []

    groups: list[tuple[str, list[EvalRow]]] = sorted(by_action.items())
    if len(by_action) > 1:
        horizons = sorted({r.horizon_ms for r in rows})
        avg = [
            EvalRow(
                "average",
                ms,
                float(np.mean([r.model_err for r in rows if r.horizon_ms == ms])),
                float(np.mean([r.baseline_err for r in rows if r.horizon_ms == ms])),
            )
            for ms in horizons
        ]
        groups.append(("average", avg))

    for action, entries in groups:
        entries = sorted(entries, key=lambda r: r.horizon_ms)
        ms = [r.horizon_ms for r in entries]
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        ax.plot(ms, [r.baseline_err for r in entries], "o--", color="gray", label="zero-velocity")
        ax.plot(ms, [r.model_err for r in entries], "o-", color="tab:red", label="model")
        ax.set_xlabel("horizon (ms)")
        ax.set_ylabel("position error")
        ax.set_title(action)
        ax.legend()
        ax.grid(True, alpha=0.3)
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in action)
        path = out_dir / f"mpjpe_{safe}.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def plot_prediction_overlay(
    prior: MotionSequence,
    prediction: MotionSequence,
    out_path,
    joint: int = 0,
    axis: int = 1,
    ground_truth: MotionSequence | None = None,
) -> Path:
    """Line chart of one joint coordinate over time: history, prediction, and
    (when available) the true future, overlaid."""
    out_path = Path(out_path)
    t0 = prior.frame_count
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.plot(range(t0), prior.coords[:, joint, axis], color="tab:blue", label="history")
    if ground_truth is not None:
        ax.plot(
            range(t0, t0 + ground_truth.frame_count),
            ground_truth.coords[:, joint, axis],
            color="tab:blue",
            linestyle="--",
            label="ground truth",
        )
    ax.plot(
        range(t0, t0 + prediction.frame_count),
        prediction.coords[:, joint, axis],
        color="tab:red",
        label="prediction",
    )
    ax.axvline(t0 - 0.5, color="black", linewidth=0.8, alpha=0.5)
    ax.set_xlabel("frame")
    ax.set_ylabel(f"joint {joint} {'xyz'[axis]}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.savefig(out_path, bbox_inches="tight")
    plt.close(fig)
    return out_path
