"""Reverse-mode differentiation over a recorded operation tape.

Values are float64 numpy arrays. Every primitive appends one node to the
owning tape; `Tape.gradients` runs a single reverse sweep in reverse creation
order (which is a reverse topological order, since inputs always precede their
consumers). Gradients can be read off for any recorded node, not only leaves.

The op set is deliberately small: dense affine stacks, the activations the
networks use, and the handful of array ops the sphere/pose loss paths need
(cumulative sum, clamped arccos, batched 3x3 nuclear norm, gathers).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

ACOS_CLAMP = 1.0 - 1e-7  # bound on |u| inside differentiable arccos paths


class Node:
    """One recorded value. vjp maps the output adjoint to parent adjoints."""

    __slots__ = ("tape", "value", "parents", "vjp")

    def __init__(self, tape: "Tape", value, parents: tuple = (), vjp: Callable | None = None):
        self.tape = tape
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(self.tape, other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(self.tape, other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Owns the node list for one forward evaluation."""

    def __init__(self):
        self.nodes: list[Node] = []

    def constant(self, value) -> Node:
        """A node with no gradient flow into it (but adjoints still accumulate)."""
        return Node(self, value)

    # an input we intend to differentiate with respect to is structurally
    # identical to a constant; the alias keeps call sites readable
    leaf = constant

    def gradients(self, output: Node, wrt: Sequence[Node]) -> list[np.ndarray]:
        """Adjoints of a scalar output with respect to the given nodes."""
        if output.tape is not self:
            raise ValueError("output node belongs to a different tape")
        if output.value.size != 1:
            raise ValueError(f"gradient target must be scalar, got shape {output.value.shape}")
        adjoint: dict[int, np.ndarray] = {id(output): np.ones_like(output.value)}
        for node in reversed(self.nodes):
            g = adjoint.get(id(node))
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                acc = adjoint.get(id(parent))
                adjoint[id(parent)] = pg if acc is None else acc + pg
        return [adjoint.get(id(w), np.zeros_like(w.value)) for w in wrt]


def _lift(tape: Tape, x) -> Node:
    return x if isinstance(x, Node) else tape.constant(x)


def _tape_of(*args) -> Tape:
    tape = None
    for a in args:
        if isinstance(a, Node):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands live on different tapes")
    if tape is None:
        raise ValueError("at least one operand must be a Node")
    return tape


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted adjoint back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    return Node(
        tape,
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
    )


def sub(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    return Node(
        tape,
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)),
    )


def mul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    return Node(
        tape,
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    return Node(
        tape,
        a.value / b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.value.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        ),
    )


def neg(a: Node) -> Node:
    return Node(a.tape, -a.value, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# Structural ops
# ---------------------------------------------------------------------------


def matmul(a, b) -> Node:
    """Matrix product; 2D or stacked with identical leading dimensions."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2")
    if a.value.ndim != b.value.ndim or a.value.shape[:-2] != b.value.shape[:-2]:
        raise ValueError(f"matmul batch dims must match: {a.value.shape} @ {b.value.shape}")

    def vjp(g):
        return (
            np.matmul(g, np.swapaxes(b.value, -1, -2)),
            np.matmul(np.swapaxes(a.value, -1, -2), g),
        )

    return Node(tape, np.matmul(a.value, b.value), (a, b), vjp)


def transpose_last2(a: Node) -> Node:
    return Node(
        a.tape,
        np.swapaxes(a.value, -1, -2),
        (a,),
        lambda g: (np.swapaxes(g, -1, -2),),
    )


def reshape(a: Node, shape: tuple) -> Node:
    old = a.value.shape
    return Node(a.tape, a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def take(a: Node, indices, axis: int) -> Node:
    """Gather along an axis; repeated indices accumulate in the backward pass."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("take expects a 1-D index array")
    axis = axis % a.value.ndim

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, (slice(None),) * axis + (idx,), g)
        return (out,)

    return Node(a.tape, np.take(a.value, idx, axis=axis), (a,), vjp)


def reduce_sum(a: Node, axis=None, keepdims: bool = False) -> Node:
    val = np.sum(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.value.shape).copy(),)

    return Node(a.tape, val, (a,), vjp)


def reduce_mean(a: Node, axis=None, keepdims: bool = False) -> Node:
    count = a.value.size if axis is None else a.value.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def cumsum(a: Node, axis: int) -> Node:
    def vjp(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return Node(a.tape, np.cumsum(a.value, axis=axis), (a,), vjp)


# ---------------------------------------------------------------------------
# Nonlinearities and norms
# ---------------------------------------------------------------------------


def sqrt(a: Node) -> Node:
    val = np.sqrt(a.value)
    return Node(a.tape, val, (a,), lambda g: (g * 0.5 / val,))


def absolute(a: Node) -> Node:
    return Node(a.tape, np.abs(a.value), (a,), lambda g: (g * np.sign(a.value),))


def tanh(a: Node) -> Node:
    val = np.tanh(a.value)
    return Node(a.tape, val, (a,), lambda g: (g * (1.0 - val * val),))


def leaky_relu(a: Node, slope: float) -> Node:
    mask = np.where(a.value > 0.0, 1.0, slope)
    return Node(a.tape, a.value * mask, (a,), lambda g: (g * mask,))


def leaky_relu_slope(a: Node, slope: float) -> Node:
    """The activation's derivative mask; piecewise constant, so zero gradient."""
    return Node(a.tape, np.where(a.value > 0.0, 1.0, slope), (a,), lambda g: (None,))


def sin(a: Node) -> Node:
    return Node(a.tape, np.sin(a.value), (a,), lambda g: (g * np.cos(a.value),))


def cos(a: Node) -> Node:
    return Node(a.tape, np.cos(a.value), (a,), lambda g: (-g * np.sin(a.value),))


def sin_over_x(a: Node) -> Node:
    """sin(x)/x extended smoothly through 0 (value 1, derivative 0).

    A short series takes over below 1e-4 where the direct quotient loses
    precision; the crossover error is far below double rounding.
    """
    x = a.value
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)  # dummy denominator where the series is used
    val = np.where(small, 1.0 - x * x / 6.0 + x**4 / 120.0, np.sin(xs) / xs)
    deriv = np.where(small, -x / 3.0 + x**3 / 30.0, (xs * np.cos(xs) - np.sin(xs)) / (xs * xs))
    return Node(a.tape, val, (a,), lambda g: (g * deriv,))


def acos_clamped(a: Node) -> Node:
    """arccos with |u| clamped to ACOS_CLAMP so the derivative stays bounded."""
    clipped = np.clip(a.value, -ACOS_CLAMP, ACOS_CLAMP)
    inside = np.abs(a.value) <= ACOS_CLAMP

    def vjp(g):
        return (np.where(inside, -g / np.sqrt(1.0 - clipped * clipped), 0.0),)

    return Node(a.tape, np.arccos(clipped), (a,), vjp)


def l2norm(a: Node, axis=None, keepdims: bool = False) -> Node:
    """Euclidean norm; subgradient 0 where the norm vanishes."""
    val = np.sqrt(np.sum(a.value * a.value, axis=axis, keepdims=keepdims))

    def vjp(g):
        gg, nn = g, val
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
            nn = np.expand_dims(val, axis)
        safe = np.where(nn > 0.0, nn, 1.0)
        return (np.where(nn > 0.0, gg * a.value / safe, 0.0),)

    return Node(a.tape, val, (a,), vjp)


def nuclear_norm_3x3(a: Node) -> Node:
    """Sum of singular values of stacked (..., 3, 3) matrices.

    The gradient is U V^T from the computed decomposition, which is the
    subgradient choice at (near-)repeated or zero singular values.
    """
    if a.value.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) input, got {a.value.shape}")
    u, s, vh = np.linalg.svd(a.value)
    val = np.sum(s, axis=-1)
    direction = np.matmul(u, vh)
    return Node(a.tape, val, (a,), lambda g: (g[..., None, None] * direction,))
