"""Pose-space losses and evaluation metrics.

All reductions over batches/frames use plain sequential numpy sums, so results
are deterministic. Errors are reported in the dataset's own length unit; the
CLI applies a presentation-layer scale factor for millimeter output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .motion import MotionSequence, SkeletonTopology


@dataclass
class GramDistanceResult:
    """Rotation-invariant pose discrepancy plus the singular values behind it."""

    value: float
    singular_values: np.ndarray  # (3,), descending


@dataclass
class EvalReport:
    """Per-horizon model/baseline errors plus the smoothness comparison."""

    mpjpe_at: dict[int, float] = field(default_factory=dict)  # horizon ms -> error
    baseline_at: dict[int, float] = field(default_factory=dict)
    smoothness_gt: float = 0.0
    smoothness_pred: float = 0.0


def _check_pose_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ShapeError(f"pose must be (k, 3), got {a.shape}")
    if a.shape != b.shape:
        raise ShapeError(f"pose shapes differ: {a.shape} vs {b.shape}")
    return a, b


def gram_distance(pose_a: np.ndarray, pose_b: np.ndarray) -> GramDistanceResult:
    """Distance between the Gram matrices of two (k, 3) poses.

    Tr(A A^T) + Tr(B B^T) - 2 * sum of singular values of B^T A. Invariant to
    right-multiplying either pose by a rotation. Clamped at 0 to absorb float
    dust; the analytic value is nonnegative.
    """
    a, b = _check_pose_pair(pose_a, pose_b)
    m = b.T @ a
    sigma = np.linalg.svd(m, compute_uv=False)
    value = float(np.sum(a * a) + np.sum(b * b) - 2.0 * np.sum(sigma))
    return GramDistanceResult(value=max(value, 0.0), singular_values=sigma)


def _check_matched(gt: list[MotionSequence], pred: list[MotionSequence]) -> None:
    if len(gt) != len(pred):
        raise ShapeError(f"{len(gt)} ground-truth vs {len(pred)} predicted sequences")
    if not gt:
        raise ShapeError("empty sequence lists")
    for i, (g, p) in enumerate(zip(gt, pred)):
        if g.coords.shape != p.coords.shape:
            raise ShapeError(f"sample {i}: shapes {g.coords.shape} vs {p.coords.shape}")


def skeleton_integrity_loss(gt: list[MotionSequence], pred: list[MotionSequence]) -> float:
    """Mean Gram distance over all samples and predicted frames."""
    _check_matched(gt, pred)
    total = 0.0
    count = 0
    for g, p in zip(gt, pred):
        for t in range(g.frame_count):
            total += gram_distance(g.coords[t], p.coords[t]).value
            count += 1
    return total / count


def bone_length_loss(
    gt: list[MotionSequence], pred: list[MotionSequence], topology: SkeletonTopology
) -> float:
    """Mean absolute difference of scalar bone lengths over samples, frames, bones."""
    _check_matched(gt, pred)
    parents = np.array([b[0] for b in topology.bones])
    children = np.array([b[1] for b in topology.bones])
    total = 0.0
    count = 0
    for g, p in zip(gt, pred):
        if g.joint_count != topology.joint_count:
            raise ShapeError(f"sequence has {g.joint_count} joints, topology expects {topology.joint_count}")
        lg = np.linalg.norm(g.coords[:, children] - g.coords[:, parents], axis=2)
        lp = np.linalg.norm(p.coords[:, children] - p.coords[:, parents], axis=2)
        total += float(np.sum(np.abs(lg - lp)))
        count += lg.size
    return total / count


def mpjpe(gt: MotionSequence, pred: MotionSequence, horizon_frames: int) -> float:
    """Root of the mean squared per-joint position error over the first horizon frames."""
    if horizon_frames < 1:
        raise ValueError(f"horizon_frames must be positive, got {horizon_frames}")
    if horizon_frames > gt.frame_count or horizon_frames > pred.frame_count:
        raise ValueError(
            f"horizon {horizon_frames} exceeds sequence lengths {gt.frame_count}/{pred.frame_count}"
        )
    if gt.coords.shape[1:] != pred.coords.shape[1:]:
        raise ShapeError(f"joint shapes differ: {gt.coords.shape} vs {pred.coords.shape}")
    diff = gt.coords[:horizon_frames] - pred.coords[:horizon_frames]
    sq = np.sum(diff * diff, axis=2)  # (h, k) squared joint errors
    return float(np.sqrt(np.mean(sq)))


def zero_velocity_baseline(prior: MotionSequence, horizon_frames: int) -> MotionSequence:
    """Predict the last observed pose at every future frame."""
    if horizon_frames < 1:
        raise ValueError(f"horizon_frames must be positive, got {horizon_frames}")
    last = prior.coords[-1]
    coords = np.repeat(last[None, :, :], horizon_frames, axis=0)
    return MotionSequence(coords, fps=prior.fps, label=prior.label)


def smoothness(seq: MotionSequence) -> float:
    """Mean Euclidean distance between consecutive frames over all joints."""
    if seq.frame_count < 2:
        raise ValueError(f"smoothness needs at least 2 frames, got {seq.frame_count}")
    steps = np.linalg.norm(np.diff(seq.coords, axis=0), axis=2)
    return float(np.mean(steps))


def pairwise_gram_matrix(seqs: list[MotionSequence]) -> np.ndarray:
    """Symmetric matrix of mean per-frame Gram distances between sequences.

    This is the raw input an external 2D embedding (e.g. t-SNE) would consume.
    """
    if not seqs:
        raise ShapeError("empty sequence list")
    t = seqs[0].frame_count
    for i, s in enumerate(seqs):
        if s.coords.shape != seqs[0].coords.shape:
            raise ShapeError(f"sequence {i} shape {s.coords.shape} != {seqs[0].coords.shape}")
    n = len(seqs)
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = 0.0
            for f in range(t):
                d += gram_distance(seqs[i].coords[f], seqs[j].coords[f]).value
            out[i, j] = out[j, i] = d / t
    return out
