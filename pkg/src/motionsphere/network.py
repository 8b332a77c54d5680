"""Dense networks over the autodiff tape, Adam, and parameter checkpoints.

Networks are affine stacks with one hidden activation (leaky-relu or tanh)
and an identity final layer. `input_gradient` builds the gradient of a scalar
critic with respect to its input as an explicit tape expression (products of
transposed layer weights and activation-derivative masks), so taking tape
gradients of its norm yields the second-order path a gradient penalty needs.

Checkpoints store named tensors as raw little-endian float64 after a JSON
header line; round trips are bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import CapabilityError, ShapeError

_ACTIVATIONS = ("leaky_relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths plus the hidden activation; the final layer is linear."""

    widths: tuple[int, ...]
    hidden_activation: str = "leaky_relu"
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ValueError(f"need at least input and output widths, got {self.widths}")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be >= 1, got {self.widths}")
        if self.hidden_activation not in _ACTIVATIONS:
            raise CapabilityError(f"unsupported activation {self.hidden_activation!r}; use one of {_ACTIVATIONS}")

    @property
    def layer_count(self) -> int:
        return len(self.widths) - 1

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "hidden_activation": self.hidden_activation,
            "leaky_slope": self.leaky_slope,
        }

    @staticmethod
    def from_dict(d: dict) -> "MlpSpec":
        return MlpSpec(
            widths=tuple(d["widths"]),
            hidden_activation=d["hidden_activation"],
            leaky_slope=float(d["leaky_slope"]),
        )


class ParamSet:
    """Ordered named tensors; values may be updated in place, shapes are fixed."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self._tensors = {name: np.asarray(v, dtype=np.float64) for name, v in tensors.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    @property
    def total_count(self) -> int:
        return sum(v.size for v in self._tensors.values())

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self._tensors.items()})

    def assign(self, other: "ParamSet") -> None:
        for name, v in self._tensors.items():
            v[...] = other[name]


def init_params(spec: MlpSpec, seed: int) -> ParamSet:
    """Fan-in-scaled uniform weights in +-sqrt(6/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for i in range(spec.layer_count):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        lim = math.sqrt(6.0 / fan_in)
        tensors[f"layer{i}.weight"] = rng.uniform(-lim, lim, size=(fan_in, fan_out))
        tensors[f"layer{i}.bias"] = np.zeros(fan_out)
    return ParamSet(tensors)


def bind(tape: ad.Tape, params: ParamSet) -> dict[str, ad.Node]:
    """Put every parameter on the tape so gradients can be taken against it."""
    return {name: tape.leaf(value) for name, value in params.items()}


def _check_input(spec: MlpSpec, x: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[1] != spec.widths[0]:
        raise ShapeError(f"input must be (batch, {spec.widths[0]}), got {x.shape}")


def forward(spec: MlpSpec, bound: dict[str, ad.Node], x, tape: ad.Tape) -> ad.Node:
    """Tape forward pass over a (batch, in) input node or array."""
    out, _, _ = forward_with_preacts(spec, bound, x, tape)
    return out


def forward_with_preacts(
    spec: MlpSpec, bound: dict[str, ad.Node], x, tape: ad.Tape
) -> tuple[ad.Node, list[ad.Node], list[ad.Node]]:
    """Forward pass that also returns per-layer pre-activations and hidden outputs."""
    h = x if isinstance(x, ad.Node) else tape.constant(x)
    _check_input(spec, h.value)
    preacts: list[ad.Node] = []
    hiddens: list[ad.Node] = []
    for i in range(spec.layer_count):
        z = ad.matmul(h, bound[f"layer{i}.weight"]) + bound[f"layer{i}.bias"]
        preacts.append(z)
        if i < spec.layer_count - 1:
            if spec.hidden_activation == "leaky_relu":
                h = ad.leaky_relu(z, spec.leaky_slope)
            else:
                h = ad.tanh(z)
            hiddens.append(h)
        else:
            h = z
    return h, preacts, hiddens


def evaluate(spec: MlpSpec, params: ParamSet, x: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass (no tape); used at prediction time."""
    x = np.asarray(x, dtype=np.float64)
    _check_input(spec, x)
    h = x
    for i in range(spec.layer_count):
        z = h @ params[f"layer{i}.weight"] + params[f"layer{i}.bias"]
        if i < spec.layer_count - 1:
            if spec.hidden_activation == "leaky_relu":
                h = np.where(z > 0.0, z, spec.leaky_slope * z)
            else:
                h = np.tanh(z)
        else:
            h = z
    return h


def input_gradient(spec: MlpSpec, bound: dict[str, ad.Node], x, tape: ad.Tape) -> ad.Node:
    """Gradient of a scalar-output network with respect to its input, on the tape.

    Built as the explicit chain of transposed weights and activation-derivative
    masks, so the result is itself differentiable with respect to the weights.
    Requires output width 1.
    """
    if spec.widths[-1] != 1:
        raise CapabilityError(f"input_gradient needs a scalar critic, output width is {spec.widths[-1]}")
    _, preacts, hiddens = forward_with_preacts(spec, bound, x, tape)
    batch = preacts[0].value.shape[0]
    g = tape.constant(np.ones((batch, 1)))
    for i in range(spec.layer_count - 1, -1, -1):
        g = ad.matmul(g, ad.transpose_last2(bound[f"layer{i}.weight"]))
        if i > 0:
            if spec.hidden_activation == "leaky_relu":
                g = g * ad.leaky_relu_slope(preacts[i - 1], spec.leaky_slope)
            else:
                h = hiddens[i - 1]
                g = g * (1.0 - h * h)
    return g


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam(params: ParamSet) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(v) for name, v in params.items()},
        v={name: np.zeros_like(v) for name, v in params.items()},
    )


def adam_step(
    params: ParamSet,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place; requires exclusive access."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter is {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Tensor archive / checkpoints
# ---------------------------------------------------------------------------

_ARCHIVE_FORMAT = "motionsphere-tensors-v1"


def write_archive(path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    """JSON header line + concatenated raw little-endian float64 buffers."""
    header = {
        "format": _ARCHIVE_FORMAT,
        "meta": meta,
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_archive(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        if header.get("format") != _ARCHIVE_FORMAT:
            raise ShapeError(f"{path}: not a {_ARCHIVE_FORMAT} file")
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ShapeError(f"{path}: truncated tensor {entry['name']!r}")
            tensors[entry["name"]] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
    return header["meta"], tensors


def save_params(path, spec: MlpSpec, params: ParamSet, seed: int) -> None:
    write_archive(path, {"kind": "mlp-params", "seed": seed, "spec": spec.to_dict()}, dict(params.items()))


def load_params(path) -> tuple[MlpSpec, ParamSet, int]:
    meta, tensors = read_archive(path)
    if meta.get("kind") != "mlp-params":
        raise ShapeError(f"{path}: not a parameter checkpoint")
    return MlpSpec.from_dict(meta["spec"]), ParamSet(tensors), int(meta["seed"])


def flatten_grads(bound: dict[str, ad.Node], tape: ad.Tape, loss: ad.Node) -> dict[str, np.ndarray]:
    """Tape gradients of a scalar loss for every bound parameter, by name."""
    names = list(bound)
    grads = tape.gradients(loss, [bound[n] for n in names])
    return dict(zip(names, grads))
