"""Command-line harness: synthesize/ingest data, train, predict, evaluate, report.

Configuration comes from an optional JSON file plus flag overrides (flags
win); the effective configuration is echoed into each command's output
directory. Outputs are pure functions of (config, dataset files, seed): no
timestamps, fixed float formatting.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/training
failure. Set MOTIONSPHERE_VERBOSE=1 for debug logging on stderr.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import gan, metrics, report
from .errors import AlignmentError, CapabilityError, DataError, NumericError, StateError
from .motion import (
    MotionSequence,
    SyntheticSpec,
    chain_topology,
    load_sequences,
    load_topology,
    make_split,
    normalize,
    downsample as downsample_seq,
    save_sequences,
    save_topology,
    split_prior_future,
    synthesize_dataset,
    window as window_seq,
)

log = logging.getLogger("motionsphere")

DEFAULT_HORIZONS = (80.0, 160.0, 320.0, 400.0, 1000.0)


def horizon_to_frames(ms: float, fps: float) -> int:
    """Convert a horizon in milliseconds to a whole frame count.

    Rounds to the nearest frame; a horizon landing exactly between frames (or
    before the first one) is rejected with the valid options listed.
    """
    if ms <= 0 or fps <= 0:
        raise AlignmentError(f"horizon and fps must be positive, got {ms} ms at {fps} fps")
    frames = ms * fps / 1000.0
    nearest = round(frames)
    if nearest < 1 or abs(frames - nearest) >= 0.5 - 1e-9:
        valid = ", ".join(f"{j * 1000.0 / fps:g}" for j in range(1, 11))
        raise AlignmentError(
            f"{ms} ms is not frame-aligned at {fps} fps; nearest valid horizons: {valid}, ..."
        )
    return int(nearest)


def _parse_range(text: str, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise click.UsageError(f"--{name} expects 'lo,hi', got {text!r}") from None
    return lo, hi


def _parse_widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise click.UsageError(f"expected comma-separated integers, got {text!r}") from None


def _parse_horizons(text: str) -> tuple[float, ...]:
    try:
        out = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise click.UsageError(f"expected comma-separated milliseconds, got {text!r}") from None
    if not out or any(b <= a for a, b in zip(out, out[1:])):
        raise click.UsageError("horizons must be ascending and nonempty")
    return out


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise click.UsageError(f"config {path} must hold a JSON object")
    return data


def _merged_train_config(config_path: str | None, **overrides) -> gan.TrainConfig:
    base = gan.TrainConfig().to_dict()
    file_cfg = _load_config_file(config_path)
    unknown = set(file_cfg) - set(base)
    if unknown:
        raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    base.update(file_cfg)
    for key, val in overrides.items():
        if val is not None:
            base[key] = val
    try:
        return gan.TrainConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"bad configuration: {exc}") from None


def _echo_config(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_dataset(dataset: str, topology_path: str | None):
    topology = load_topology(topology_path) if topology_path else None
    seqs = load_sequences(dataset, topology)
    if not seqs:
        raise DataError(f"no sequences found in {dataset}")
    return seqs, topology


def _pairs_for_eval(seqs: list[MotionSequence], cfg: gan.TrainConfig):
    """Split full-length sequences into (prior, future) pairs; priors pass through."""
    pairs = []
    for i, s in enumerate(seqs):
        if s.frame_count == cfg.total_len:
            pairs.append(split_prior_future(s, cfg.tau))
        elif s.frame_count == cfg.tau:
            pairs.append((s, None))
        else:
            raise DataError(
                f"sequence {i} has {s.frame_count} frames; expected tau={cfg.tau} "
                f"or total_len={cfg.total_len}"
            )
    return pairs


# ---------------------------------------------------------------------------
# Command group
# ---------------------------------------------------------------------------


@click.group()
def cli():
    """Spherical-trajectory motion prediction toolkit."""


@cli.command("synth")
@click.option("--out", required=True, type=click.Path(), help="Output dataset directory.")
@click.option("--count", default=100, show_default=True, type=int)
@click.option("--joints", default=4, show_default=True, type=int)
@click.option("--frames", default=50, show_default=True, type=int)
@click.option("--fps", default=25.0, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--label", default="synthetic", show_default=True)
@click.option("--amplitude", default="0.5,1.0", show_default=True, help="Range lo,hi.")
@click.option("--frequency", default="0.25,0.5", show_default=True, help="Range lo,hi (Hz).")
@click.option("--phase", default="0.0,6.283185307179586", show_default=True, help="Range lo,hi (rad).")
@click.option("--drift", default="0.05,0.15", show_default=True, help="Range lo,hi (units/s).")
def cmd_synth(out, count, joints, frames, fps, seed, label, amplitude, frequency, phase, drift):
    """Generate a deterministic sinusoidal dataset plus a chain topology file."""
    spec = SyntheticSpec(
        joint_count=joints,
        frame_count=frames,
        fps=fps,
        count=count,
        amplitude=_parse_range(amplitude, "amplitude"),
        frequency=_parse_range(frequency, "frequency"),
        phase=_parse_range(phase, "phase"),
        drift=_parse_range(drift, "drift"),
        label=label,
    )
    seqs = synthesize_dataset(spec, seed=seed)
    out = Path(out)
    save_sequences(seqs, out)
    save_topology(chain_topology(joints), out / "topology.json")
    _echo_config(
        out,
        {
            "command": "synth",
            "seed": seed,
            "count": count,
            "joints": joints,
            "frames": frames,
            "fps": fps,
            "label": label,
            "amplitude": list(spec.amplitude),
            "frequency": list(spec.frequency),
            "phase": list(spec.phase),
            "drift": list(spec.drift),
        },
    )
    click.echo(f"wrote {len(seqs)} sequences to {out}")


@cli.command("preprocess")
@click.option("--dataset", "dataset", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--topology", "topology_path", required=True, type=click.Path(exists=True))
@click.option("--downsample", "factor", default=1, show_default=True, type=int)
@click.option("--normalize/--no-normalize", "do_normalize", default=True, show_default=True)
@click.option("--window-length", default=0, show_default=True, type=int, help="0 disables windowing.")
@click.option("--window-stride", default=0, show_default=True, type=int, help="Defaults to window length.")
def cmd_preprocess(dataset, out, topology_path, factor, do_normalize, window_length, window_stride):
    """Downsample, normalize, and window raw sequences into a new dataset."""
    seqs, topology = _load_dataset(dataset, topology_path)
    processed: list[MotionSequence] = []
    for seq in seqs:
        if factor > 1:
            seq = downsample_seq(seq, factor)
        if do_normalize:
            seq = normalize(seq, topology)
        if window_length > 0:
            stride = window_stride if window_stride > 0 else window_length
            processed.extend(window_seq(seq, window_length, stride))
        else:
            processed.append(seq)
    if not processed:
        raise DataError("preprocessing produced no sequences (windows longer than inputs?)")
    out = Path(out)
    save_sequences(processed, out)
    save_topology(topology, out / "topology.json")
    _echo_config(
        out,
        {
            "command": "preprocess",
            "dataset": str(dataset),
            "downsample": factor,
            "normalize": do_normalize,
            "window_length": window_length,
            "window_stride": window_stride,
        },
    )
    click.echo(f"wrote {len(processed)} sequences to {out}")


_train_options = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None),
    click.option("--lr", type=float, default=None),
    click.option("--batch-size", "batch_size", type=int, default=None),
    click.option("--epochs", type=int, default=None),
    click.option("--lambda-gp", "lambda_gp", type=float, default=None),
    click.option("--beta-adv", "beta_adv", type=float, default=None),
    click.option("--beta-rec", "beta_rec", type=float, default=None),
    click.option("--beta-skel", "beta_skel", type=float, default=None),
    click.option("--beta-bone", "beta_bone", type=float, default=None),
    click.option("--seed", type=int, default=None),
    click.option("--tau", type=int, default=None),
    click.option("--total-len", "total_len", type=int, default=None),
    click.option("--scale-source", "scale_source", type=click.Choice(gan.SCALE_SOURCES), default=None),
    click.option("--predictor-hidden", "predictor_hidden", type=str, default=None),
    click.option("--critic-hidden", "critic_hidden", type=str, default=None),
    click.option("--n-critic", "n_critic", type=int, default=None),
]


def _with_train_options(fn):
    for opt in reversed(_train_options):
        fn = opt(fn)
    return fn


def _config_from_params(config_path, params) -> gan.TrainConfig:
    overrides = dict(params)
    if overrides.get("predictor_hidden") is not None:
        overrides["predictor_hidden"] = _parse_widths(overrides["predictor_hidden"])
    if overrides.get("critic_hidden") is not None:
        overrides["critic_hidden"] = _parse_widths(overrides["critic_hidden"])
    return _merged_train_config(config_path, **overrides)


@cli.command("train")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--topology", "topology_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--resume", "resume_path", type=click.Path(exists=True), default=None)
@_with_train_options
def cmd_train(dataset, topology_path, out, resume_path, config_path, **params):
    """Train the predictor/critic pair and write checkpoint plus loss log."""
    cfg = _config_from_params(config_path, params)
    seqs, topology = _load_dataset(dataset, topology_path)
    split = make_split(seqs, cfg.tau)
    resume = None
    if resume_path is not None:
        resume, resume_cfg = gan.load_checkpoint(resume_path)
        if resume_cfg.to_dict() != cfg.to_dict():
            log.warning("resume checkpoint was trained with a different configuration")
    state, records = gan.train(split, topology, cfg, resume=resume)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    gan.save_checkpoint(out / "checkpoint.bin", state, cfg)
    gan.write_loss_log(out / "training_log.csv", records)
    _echo_config(out, {"command": "train", "dataset": str(dataset), **cfg.to_dict()})
    click.echo(f"trained to epoch {state.epoch}; checkpoint at {out / 'checkpoint.bin'}")


@cli.command("predict")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--chart-joint", default=0, show_default=True, type=int)
@click.option("--chart-axis", default=1, show_default=True, type=int)
@click.option("--chart/--no-chart", "do_chart", default=True, show_default=True)
def cmd_predict(checkpoint, dataset, out, chart_joint, chart_axis, do_chart):
    """Predict futures for every input sequence; write them plus an overlay chart.

    Inputs may be prior-only (tau frames) or full sequences (total_len frames,
    split internally so the chart can overlay the ground truth).
    """
    state, cfg = gan.load_checkpoint(checkpoint)
    seqs, _ = _load_dataset(dataset, None)
    pairs = _pairs_for_eval(seqs, cfg)
    preds = [gan.predict(prior, state, cfg) for prior, _ in pairs]
    out = Path(out)
    save_sequences(preds, out, prefix="pred")
    if do_chart:
        prior0, gt0 = pairs[0]
        if not 0 <= chart_joint < prior0.joint_count or not 0 <= chart_axis < 3:
            raise click.UsageError("chart joint/axis out of range")
        report.plot_prediction_overlay(
            prior0, preds[0], out / "prediction_chart.svg",
            joint=chart_joint, axis=chart_axis, ground_truth=gt0,
        )
    _echo_config(out, {"command": "predict", "checkpoint": str(checkpoint), "dataset": str(dataset), **cfg.to_dict()})
    click.echo(f"wrote {len(preds)} predictions to {out}")


def _evaluate_rows(
    pairs, state, cfg, horizons, unit_scale, subsample, repeats, seed
) -> list[report.EvalRow]:
    fps = pairs[0][0].fps
    frames = [horizon_to_frames(ms, fps) for ms in horizons]
    max_h = cfg.total_len - cfg.tau
    for ms, h in zip(horizons, frames):
        if h > max_h:
            raise AlignmentError(f"horizon {ms} ms needs {h} frames but only {max_h} are predicted")

    by_action: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
    for prior, future in pairs:
        if future is None:
            raise DataError("evaluation needs full-length sequences (ground-truth futures)")
        pred = gan.predict(prior, state, cfg)
        baseline = metrics.zero_velocity_baseline(prior, max_h)
        model_err = np.array([metrics.mpjpe(future, pred, h) for h in frames]) * unit_scale
        base_err = np.array([metrics.mpjpe(future, baseline, h) for h in frames]) * unit_scale
        by_action.setdefault(prior.label or "all", []).append((model_err, base_err))

    rows: list[report.EvalRow] = []
    rng = np.random.default_rng(seed)
    for action in sorted(by_action):
        model = np.stack([m for m, _ in by_action[action]])
        base = np.stack([b for _, b in by_action[action]])
        n = model.shape[0]
        if subsample and subsample < n:
            model_means, base_means = [], []
            for _ in range(max(1, repeats)):
                idx = rng.choice(n, size=subsample, replace=False)
                model_means.append(model[idx].mean(axis=0))
                base_means.append(base[idx].mean(axis=0))
            model_avg = np.mean(model_means, axis=0)
            base_avg = np.mean(base_means, axis=0)
        else:
            model_avg = model.mean(axis=0)
            base_avg = base.mean(axis=0)
        for i, ms in enumerate(horizons):
            rows.append(report.EvalRow(action, ms, float(model_avg[i]), float(base_avg[i])))
    return rows


@cli.command("evaluate")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--horizons", default=None, help="Comma-separated milliseconds.")
@click.option("--unit-scale", default=1.0, show_default=True, type=float, help="e.g. 1000 for millimeters.")
@click.option("--subsample", default=0, show_default=True, type=int, help="Sequences per run (0 = all).")
@click.option("--repeats", default=1, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--gram-matrix/--no-gram-matrix", default=False, show_default=True,
              help="Also write the pairwise Gram-distance matrix of predicted futures.")
def cmd_evaluate(checkpoint, dataset, out, horizons, unit_scale, subsample, repeats, seed, gram_matrix):
    """Per-action, per-horizon model versus zero-velocity errors, as CSV."""
    state, cfg = gan.load_checkpoint(checkpoint)
    seqs, _ = _load_dataset(dataset, None)
    pairs = _pairs_for_eval(seqs, cfg)
    hz = _parse_horizons(horizons) if horizons else DEFAULT_HORIZONS
    rows = _evaluate_rows(pairs, state, cfg, hz, unit_scale, subsample, repeats, seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_eval_csv(out / "eval.csv", rows)
    if gram_matrix:
        preds = [gan.predict(prior, state, cfg) for prior, _ in pairs]
        matrix = metrics.pairwise_gram_matrix(preds)
        np.savetxt(out / "gram_matrix.csv", matrix, delimiter=",", fmt="%.17g")
    _echo_config(
        out,
        {
            "command": "evaluate",
            "checkpoint": str(checkpoint),
            "dataset": str(dataset),
            "horizons": list(hz),
            "unit_scale": unit_scale,
            "subsample": subsample,
            "repeats": repeats,
            "seed": seed,
            **cfg.to_dict(),
        },
    )
    click.echo(f"wrote {out / 'eval.csv'}")


@cli.command("baseline")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--tau", required=True, type=int)
@click.option("--horizons", default=None, help="Comma-separated milliseconds.")
@click.option("--unit-scale", default=1.0, show_default=True, type=float)
def cmd_baseline(dataset, out, tau, horizons, unit_scale):
    """Zero-velocity errors alone, for datasets without a trained model."""
    seqs, _ = _load_dataset(dataset, None)
    hz = _parse_horizons(horizons) if horizons else DEFAULT_HORIZONS
    fps = seqs[0].fps
    frames = [horizon_to_frames(ms, fps) for ms in hz]
    by_action: dict[str, list[np.ndarray]] = {}
    for i, seq in enumerate(seqs):
        if seq.frame_count <= tau:
            raise DataError(f"sequence {i} has {seq.frame_count} frames, need more than tau={tau}")
        prior, future = split_prior_future(seq, tau)
        if max(frames) > future.frame_count:
            raise AlignmentError(
                f"horizon needs {max(frames)} frames but futures have {future.frame_count}"
            )
        baseline = metrics.zero_velocity_baseline(prior, future.frame_count)
        errs = np.array([metrics.mpjpe(future, baseline, h) for h in frames]) * unit_scale
        by_action.setdefault(seq.label or "all", []).append(errs)
    rows = []
    for action in sorted(by_action):
        avg = np.mean(np.stack(by_action[action]), axis=0)
        for i, ms in enumerate(hz):
            rows.append(report.EvalRow(action, ms, float(avg[i]), float(avg[i])))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_eval_csv(out / "baseline.csv", rows)
    _echo_config(
        out,
        {"command": "baseline", "dataset": str(dataset), "tau": tau,
         "horizons": list(hz), "unit_scale": unit_scale},
    )
    click.echo(f"wrote {out / 'baseline.csv'}")


@cli.command("smoothness")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--unit-scale", default=1.0, show_default=True, type=float)
def cmd_smoothness(checkpoint, dataset, out, unit_scale):
    """Mean consecutive-frame distance: ground-truth futures versus predictions."""
    state, cfg = gan.load_checkpoint(checkpoint)
    seqs, _ = _load_dataset(dataset, None)
    pairs = _pairs_for_eval(seqs, cfg)
    by_action: dict[str, list[tuple[float, float]]] = {}
    for prior, future in pairs:
        if future is None:
            raise DataError("smoothness needs full-length sequences (ground-truth futures)")
        pred = gan.predict(prior, state, cfg)
        by_action.setdefault(prior.label or "all", []).append(
            (metrics.smoothness(future) * unit_scale, metrics.smoothness(pred) * unit_scale)
        )
    rows = [
        report.SmoothnessRow(
            action,
            float(np.mean([g for g, _ in vals])),
            float(np.mean([p for _, p in vals])),
        )
        for action, vals in sorted(by_action.items())
    ]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_smoothness_csv(out / "smoothness.csv", rows)
    _echo_config(
        out,
        {"command": "smoothness", "checkpoint": str(checkpoint), "dataset": str(dataset),
         "unit_scale": unit_scale, **cfg.to_dict()},
    )
    click.echo(f"wrote {out / 'smoothness.csv'}")


@cli.command("report")
@click.option("--eval-csv", "eval_csv", required=True, type=click.Path(exists=True))
@click.option("--smoothness-csv", "smoothness_csv", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
def cmd_report(eval_csv, smoothness_csv, out):
    """Render the text table and error-versus-horizon figures for an evaluation."""
    rows = report.read_eval_csv(eval_csv)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table = report.render_eval_table(rows)
    if smoothness_csv:
        srows = report.read_smoothness_csv(smoothness_csv)
        width = max(len(r.action) for r in srows) + 2
        table += "\nsmoothness (mean consecutive-frame distance)\n"
        table += f"{'action':<{width}}{'ground truth':>14}{'generated':>14}\n"
        for r in srows:
            table += f"{r.action:<{width}}{r.ground_truth:>14.3f}{r.generated:>14.3f}\n"
    (out / "report.txt").write_text(table, encoding="utf-8")
    figures = report.plot_eval_curves(rows, out)
    click.echo(f"wrote {out / 'report.txt'} and {len(figures)} figures")


def main(argv=None):
    if os.environ.get("MOTIONSPHERE_VERBOSE"):
        logging.basicConfig(level=logging.DEBUG, stream=sys.stderr)
    else:
        logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (AlignmentError, CapabilityError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except (DataError, StateError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except (NumericError, ArithmeticError) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
