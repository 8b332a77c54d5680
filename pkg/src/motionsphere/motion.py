"""3D skeleton motion sequences: types, on-disk formats, preprocessing, synthesis.

A sequence file is plain UTF-8 text, LF line endings:

    #motionsphere-seq v1
    k=<joints> fps=<float> T=<frames> [label=<rest of line>]
    <3k floats per line, one frame per line>

Floats are written with %.17g so that a save/load round trip is bit-exact.
A dataset is a directory of sequence files plus an ``index.txt`` manifest
with one ``<filename>\\t<label>`` line per sequence.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateMotionError, ParseError, ShapeError

_MAGIC = "#motionsphere-seq v1"
_FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class SkeletonTopology:
    """Fixed skeleton wiring: joint count, bone index pairs, hip joint index."""

    joint_count: int
    bones: tuple[tuple[int, int], ...]
    hip_index: int

    def __post_init__(self):
        if self.joint_count < 1:
            raise ValueError(f"joint_count must be positive, got {self.joint_count}")
        if len(self.bones) < 1:
            raise ValueError("topology needs at least one bone")
        if not 0 <= self.hip_index < self.joint_count:
            raise ValueError(f"hip_index {self.hip_index} out of range [0, {self.joint_count})")
        for parent, child in self.bones:
            if parent == child:
                raise ValueError(f"bone ({parent}, {child}) connects a joint to itself")
            if not (0 <= parent < self.joint_count and 0 <= child < self.joint_count):
                raise ValueError(f"bone ({parent}, {child}) references a joint >= {self.joint_count}")
        object.__setattr__(self, "bones", tuple((int(p), int(c)) for p, c in self.bones))


def chain_topology(joint_count: int) -> SkeletonTopology:
    """Simple chain skeleton 0-1-2-...; hip at joint 0. Used by the synthesizer."""
    bones = tuple((i, i + 1) for i in range(joint_count - 1))
    return SkeletonTopology(joint_count=joint_count, bones=bones, hip_index=0)


@dataclass
class MotionSequence:
    """T poses of k joints in 3D plus frame rate.

    coords: (T, k, 3) float array, meters. label: optional action name.
    """

    coords: np.ndarray
    fps: float
    label: str | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 3 or self.coords.shape[2] != 3:
            raise ShapeError(f"coords must be (T, k, 3), got {self.coords.shape}")
        if self.coords.shape[0] < 1:
            raise ShapeError("sequence needs at least one frame")
        if not np.all(np.isfinite(self.coords)):
            raise ShapeError("coords contain non-finite values")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    @property
    def frame_count(self) -> int:
        return self.coords.shape[0]

    @property
    def joint_count(self) -> int:
        return self.coords.shape[1]

    def as_curve(self) -> np.ndarray:
        """Flatten to a (T, 3k) trajectory for the geometry layer."""
        t = self.coords.shape[0]
        return self.coords.reshape(t, -1)


def sequence_from_curve(curve: np.ndarray, fps: float, label: str | None = None) -> MotionSequence:
    """Inverse of MotionSequence.as_curve for 3k-dimensional trajectories."""
    curve = np.asarray(curve, dtype=np.float64)
    if curve.ndim != 2 or curve.shape[1] % 3 != 0:
        raise ShapeError(f"curve must be (T, 3k), got {curve.shape}")
    return MotionSequence(curve.reshape(curve.shape[0], -1, 3), fps=fps, label=label)


@dataclass
class DatasetSplit:
    """Paired (prior, future) sequences with fixed lengths across samples."""

    prior_len: int
    total_len: int
    samples: list[tuple[MotionSequence, MotionSequence]]

    def __post_init__(self):
        if not 0 < self.prior_len < self.total_len:
            raise ValueError(f"need 0 < prior_len < total_len, got {self.prior_len}, {self.total_len}")
        future_len = self.total_len - self.prior_len
        for i, (prior, future) in enumerate(self.samples):
            if prior.frame_count != self.prior_len:
                raise ShapeError(f"sample {i}: prior has {prior.frame_count} frames, expected {self.prior_len}")
            if future.frame_count != future_len:
                raise ShapeError(f"sample {i}: future has {future.frame_count} frames, expected {future_len}")


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


def save_sequence(seq: MotionSequence, path: str | os.PathLike) -> None:
    t, k, _ = seq.coords.shape
    lines = [_MAGIC]
    header = f"k={k} fps={_FLOAT_FMT % seq.fps} T={t}"
    if seq.label is not None:
        header += f" label={seq.label}"
    lines.append(header)
    flat = seq.coords.reshape(t, 3 * k)
    for row in flat:
        lines.append(" ".join(_FLOAT_FMT % x for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_sequence(path: str | os.PathLike, topology: SkeletonTopology | None = None) -> MotionSequence:
    """Read one sequence file; validates against topology joint count when given."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != _MAGIC:
        raise ParseError(f"missing magic header {_MAGIC!r}", path=path, line=1)
    if len(lines) < 2:
        raise ParseError("missing k/fps/T header", path=path, line=2)

    header = lines[1]
    fields: dict[str, str] = {}
    rest = header
    # label= swallows the rest of the line so labels may contain spaces
    if " label=" in rest:
        rest, label_part = rest.split(" label=", 1)
        fields["label"] = label_part
    elif rest.startswith("label="):
        raise ParseError("label must come after k/fps/T", path=path, line=2)
    for tok in rest.split():
        if "=" not in tok:
            raise ParseError(f"bad header token {tok!r}", path=path, line=2)
        key, val = tok.split("=", 1)
        fields[key] = val
    try:
        k = int(fields["k"])
        fps = float(fields["fps"])
        t = int(fields["T"])
    except KeyError as exc:
        raise ParseError(f"header missing field {exc.args[0]!r}", path=path, line=2) from None
    except ValueError as exc:
        raise ParseError(f"bad header value: {exc}", path=path, line=2) from None

    if topology is not None and k != topology.joint_count:
        raise ShapeError(f"{path}: file has k={k} joints, topology expects {topology.joint_count}")

    data_lines = lines[2:]
    if len(data_lines) < t:
        raise ParseError(f"expected {t} frame lines, found {len(data_lines)}", path=path, line=len(lines))
    coords = np.empty((t, 3 * k), dtype=np.float64)
    for i in range(t):
        tokens = data_lines[i].split()
        if len(tokens) != 3 * k:
            raise ParseError(
                f"frame has {len(tokens)} values, expected {3 * k}", path=path, line=3 + i
            )
        for j, tok in enumerate(tokens):
            try:
                coords[i, j] = float(tok)
            except ValueError:
                raise ParseError(f"non-numeric token {tok!r} in field {j + 1}", path=path, line=3 + i) from None
    if not np.all(np.isfinite(coords)):
        raise ParseError("non-finite value in sequence", path=path)
    return MotionSequence(coords.reshape(t, k, 3), fps=fps, label=fields.get("label"))


def save_sequences(seqs: list[MotionSequence], directory: str | os.PathLike, prefix: str = "seq") -> list[str]:
    """Write sequences plus an index.txt manifest; returns the filenames."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    index_lines = []
    for i, seq in enumerate(seqs):
        name = f"{prefix}{i:05d}.txt"
        save_sequence(seq, directory / name)
        names.append(name)
        index_lines.append(f"{name}\t{seq.label if seq.label is not None else ''}")
    (directory / "index.txt").write_text("\n".join(index_lines) + "\n", encoding="utf-8", newline="\n")
    return names


def load_sequences(path: str | os.PathLike, topology: SkeletonTopology | None = None) -> list[MotionSequence]:
    """Load a dataset directory (via index.txt) or a single sequence file."""
    path = Path(path)
    if path.is_file():
        return [load_sequence(path, topology)]
    index = path / "index.txt"
    if not index.is_file():
        raise ParseError("dataset directory has no index.txt", path=path)
    seqs = []
    for lineno, line in enumerate(index.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (1, 2):
            raise ParseError(f"bad manifest line {line!r}", path=index, line=lineno)
        name = parts[0]
        seq = load_sequence(path / name, topology)
        if len(parts) == 2 and parts[1]:
            seq.label = parts[1]
        seqs.append(seq)
    return seqs


# ---------------------------------------------------------------------------
# Topology file (small JSON sidecar used by the CLI)
# ---------------------------------------------------------------------------


def save_topology(topology: SkeletonTopology, path: str | os.PathLike) -> None:
    import json

    payload = {
        "joint_count": topology.joint_count,
        "bones": [list(b) for b in topology.bones],
        "hip_index": topology.hip_index,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_topology(path: str | os.PathLike) -> SkeletonTopology:
    import json

    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return SkeletonTopology(
            joint_count=int(payload["joint_count"]),
            bones=tuple(tuple(b) for b in payload["bones"]),
            hip_index=int(payload["hip_index"]),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad topology file: {exc}", path=path) from None


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def normalize(seq: MotionSequence, topology: SkeletonTopology) -> MotionSequence:
    """Center, scale to unit Frobenius norm, then pin the hip to the origin.

    Steps, in order: subtract the per-sequence centroid (mean over all frames
    and joints, per axis); divide by the Frobenius norm of the centered
    sequence; subtract the hip joint's coordinates from every joint per frame.
    """
    if seq.joint_count != topology.joint_count:
        raise ShapeError(f"sequence has {seq.joint_count} joints, topology expects {topology.joint_count}")
    centered = seq.coords - seq.coords.mean(axis=(0, 1), keepdims=True)
    norm = float(np.linalg.norm(centered))
    if norm <= 0.0:
        raise DegenerateMotionError("sequence has zero norm after mean subtraction")
    scaled = centered / norm
    hip = scaled[:, topology.hip_index : topology.hip_index + 1, :]
    return MotionSequence(scaled - hip, fps=seq.fps, label=seq.label)


def downsample(seq: MotionSequence, factor: int) -> MotionSequence:
    """Keep frames 0, factor, 2*factor, ...; fps is divided by factor."""
    if factor < 1:
        raise ValueError(f"downsample factor must be >= 1, got {factor}")
    if seq.frame_count < factor + 1:
        raise ValueError(f"need at least factor+1={factor + 1} frames, got {seq.frame_count}")
    return MotionSequence(seq.coords[::factor], fps=seq.fps / factor, label=seq.label)


def window(seq: MotionSequence, length: int, stride: int) -> list[MotionSequence]:
    """Cut into windows of `length` frames starting at 0, stride, 2*stride, ...

    Returns an empty list when the sequence is shorter than one window.
    """
    if length < 1 or stride < 1:
        raise ValueError(f"length and stride must be positive, got {length}, {stride}")
    out = []
    start = 0
    while start + length <= seq.frame_count:
        out.append(MotionSequence(seq.coords[start : start + length].copy(), fps=seq.fps, label=seq.label))
        start += stride
    return out


def split_prior_future(seq: MotionSequence, prior_len: int) -> tuple[MotionSequence, MotionSequence]:
    """Split into the first prior_len frames and the remaining future frames."""
    if not 1 <= prior_len < seq.frame_count:
        raise ValueError(f"prior_len must be in [1, {seq.frame_count}), got {prior_len}")
    prior = MotionSequence(seq.coords[:prior_len].copy(), fps=seq.fps, label=seq.label)
    future = MotionSequence(seq.coords[prior_len:].copy(), fps=seq.fps, label=seq.label)
    return prior, future


def make_split(seqs: list[MotionSequence], prior_len: int) -> DatasetSplit:
    """Split every sequence at prior_len; all inputs must share one length."""
    if not seqs:
        raise ValueError("empty sequence list")
    total = seqs[0].frame_count
    for i, s in enumerate(seqs):
        if s.frame_count != total:
            raise ShapeError(f"sequence {i} has {s.frame_count} frames, expected {total}")
    samples = [split_prior_future(s, prior_len) for s in seqs]
    return DatasetSplit(prior_len=prior_len, total_len=total, samples=samples)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Sinusoid-plus-drift generator settings.

    Each joint coordinate follows amplitude*sin(2*pi*frequency*t + phase) with
    an additive linear drift, parameters drawn per (joint, axis) from the
    closed ranges below. Time t is in seconds (frame / fps).
    """

    joint_count: int = 4
    frame_count: int = 50
    fps: float = 25.0
    count: int = 100
    amplitude: tuple[float, float] = (0.5, 1.0)
    frequency: tuple[float, float] = (0.25, 0.5)
    phase: tuple[float, float] = (0.0, 2.0 * math.pi)
    drift: tuple[float, float] = (0.05, 0.15)
    label: str = "synthetic"
    # static per-joint offsets keep bones from collapsing onto each other
    joint_spacing: float = 1.0

    def __post_init__(self):
        if self.joint_count < 1 or self.frame_count < 2 or self.count < 1 or self.fps <= 0:
            raise ValueError("joint_count>=1, frame_count>=2, count>=1, fps>0 required")
        for name in ("amplitude", "frequency", "phase", "drift"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name} range is reversed: ({lo}, {hi})")


def synthesize_dataset(spec: SyntheticSpec, seed: int) -> list[MotionSequence]:
    """Deterministic sinusoidal motion sequences; same seed gives identical data."""
    rng = np.random.default_rng(seed)
    t = np.arange(spec.frame_count, dtype=np.float64) / spec.fps
    base = np.arange(spec.joint_count, dtype=np.float64) * spec.joint_spacing
    out = []
    for _ in range(spec.count):
        shape = (spec.joint_count, 3)
        amp = rng.uniform(*spec.amplitude, size=shape)
        freq = rng.uniform(*spec.frequency, size=shape)
        phase = rng.uniform(*spec.phase, size=shape)
        drift = rng.uniform(*spec.drift, size=shape) * rng.choice([-1.0, 1.0], size=shape)
        # (T, k, 3) = sinusoid + drift + static joint offset along x
        coords = amp[None] * np.sin(2.0 * math.pi * freq[None] * t[:, None, None] + phase[None])
        coords = coords + drift[None] * t[:, None, None]
        coords[:, :, 0] += base[None, :]
        out.append(MotionSequence(coords, fps=spec.fps, label=spec.label))
    return out
