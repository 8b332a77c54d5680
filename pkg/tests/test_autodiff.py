import numpy as np
import pytest

import motionsphere.autodiff as ad


def central_diff(f, x0: np.ndarray, i: int, step: float = 1e-5) -> float:
    plus = x0.copy().ravel()
    minus = x0.copy().ravel()
    plus[i] += step
    minus[i] -= step
    return (f(plus.reshape(x0.shape)) - f(minus.reshape(x0.shape))) / (2.0 * step)


def check_gradient(build, x0: np.ndarray, rel_tol: float = 1e-4, probes=None, rng=None):
    """Compare the tape gradient of build(tape, leaf) against central differences."""
    tape = ad.Tape()
    leaf = tape.leaf(x0)
    out = build(tape, leaf)
    (grad,) = tape.gradients(out, [leaf])

    def f(x):
        t2 = ad.Tape()
        return float(build(t2, t2.leaf(x)).value)

    idxs = range(x0.size) if probes is None else probes
    for i in idxs:
        fd = central_diff(f, x0, i)
        g = grad.ravel()[i]
        scale = max(abs(fd), abs(g))
        if scale < 1e-10:
            continue
        assert abs(g - fd) / scale <= rel_tol, f"index {i}: tape {g} vs fd {fd}"


class TestPrimitiveGradients:
    """Every primitive's reverse rule against central finite differences."""

    def test_add_broadcast(self, rng):
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=(3,))
        check_gradient(lambda t, x: ad.reduce_sum((x + t.constant(b)) * t.constant(w)), rng.normal(size=(4, 3)))
        check_gradient(lambda t, x: ad.reduce_sum((t.constant(w) + x) * t.constant(w)), rng.normal(size=(3,)))

    def test_sub(self, rng):
        w = rng.normal(size=(5,))
        check_gradient(lambda t, x: ad.reduce_sum((x - t.constant(w)) * t.constant(w)), rng.normal(size=(5,)))
        check_gradient(lambda t, x: ad.reduce_sum((t.constant(w) - x) * t.constant(w)), rng.normal(size=(5,)))

    def test_mul_broadcast(self, rng):
        w = rng.normal(size=(4, 3))
        check_gradient(lambda t, x: ad.reduce_sum(x * t.constant(w)), rng.normal(size=(4, 1)))

    def test_div(self, rng):
        num = rng.normal(size=(6,))
        den = rng.uniform(0.5, 2.0, size=(6,))
        check_gradient(lambda t, x: ad.reduce_sum(x / t.constant(den)), num)
        check_gradient(lambda t, x: ad.reduce_sum(t.constant(num) / x), den)

    def test_neg(self, rng):
        w = rng.normal(size=(5,))
        check_gradient(lambda t, x: ad.reduce_sum(-x * t.constant(w)), rng.normal(size=(5,)))

    def test_matmul_2d(self, rng):
        b = rng.normal(size=(3, 2))
        w = rng.normal(size=(4, 2))
        check_gradient(lambda t, x: ad.reduce_sum(ad.matmul(x, t.constant(b)) * t.constant(w)), rng.normal(size=(4, 3)))
        a = rng.normal(size=(4, 3))
        check_gradient(lambda t, x: ad.reduce_sum(ad.matmul(t.constant(a), x) * t.constant(w)), rng.normal(size=(3, 2)))

    def test_matmul_batched(self, rng):
        a = rng.normal(size=(2, 5, 4, 3))
        w = rng.normal(size=(2, 5, 3, 3))
        check_gradient(
            lambda t, x: ad.reduce_sum(ad.matmul(ad.transpose_last2(x), t.constant(a)) * t.constant(w)),
            rng.normal(size=(2, 5, 4, 3)),
            probes=range(0, 120, 7),
        )

    def test_reshape(self, rng):
        w = rng.normal(size=(12,))
        check_gradient(lambda t, x: ad.reduce_sum(ad.reshape(x, (12,)) * t.constant(w)), rng.normal(size=(3, 4)))

    def test_take_with_repeats(self, rng):
        w = rng.normal(size=(2, 4, 3))
        idx = [0, 2, 2, 1]
        check_gradient(
            lambda t, x: ad.reduce_sum(ad.take(x, idx, axis=1) * t.constant(w)),
            rng.normal(size=(2, 3, 3)),
        )

    def test_reduce_sum_axes(self, rng):
        w = rng.normal(size=(4,))
        check_gradient(lambda t, x: ad.reduce_sum(ad.reduce_sum(x, axis=(1, 2)) * t.constant(w)), rng.normal(size=(4, 2, 3)))
        w2 = rng.normal(size=(4, 1, 1))
        check_gradient(
            lambda t, x: ad.reduce_sum(ad.reduce_sum(x, axis=(1, 2), keepdims=True) * t.constant(w2)),
            rng.normal(size=(4, 2, 3)),
        )

    def test_cumsum(self, rng):
        w = rng.normal(size=(3, 5))
        check_gradient(lambda t, x: ad.reduce_sum(ad.cumsum(x, axis=1) * t.constant(w)), rng.normal(size=(3, 5)))

    def test_sqrt(self, rng):
        w = rng.normal(size=(5,))
        check_gradient(lambda t, x: ad.reduce_sum(ad.sqrt(x) * t.constant(w)), rng.uniform(0.5, 3.0, size=(5,)))

    def test_absolute(self, rng):
        w = rng.normal(size=(6,))
        x0 = rng.normal(size=(6,))
        x0[np.abs(x0) < 0.01] = 0.5  # keep probes away from the kink
        check_gradient(lambda t, x: ad.reduce_sum(ad.absolute(x) * t.constant(w)), x0)

    def test_tanh(self, rng):
        w = rng.normal(size=(5,))
        check_gradient(lambda t, x: ad.reduce_sum(ad.tanh(x) * t.constant(w)), rng.normal(size=(5,)))

    def test_leaky_relu(self, rng):
        w = rng.normal(size=(8,))
        x0 = rng.normal(size=(8,))
        x0[np.abs(x0) < 0.01] = 0.5
        check_gradient(lambda t, x: ad.reduce_sum(ad.leaky_relu(x, 0.2) * t.constant(w)), x0)

    def test_leaky_relu_slope_is_constant(self, rng):
        tape = ad.Tape()
        leaf = tape.leaf(rng.normal(size=(5,)))
        out = ad.reduce_sum(ad.leaky_relu_slope(leaf, 0.2))
        (g,) = tape.gradients(out, [leaf])
        np.testing.assert_array_equal(g, 0.0)

    def test_sin_cos(self, rng):
        w = rng.normal(size=(5,))
        check_gradient(lambda t, x: ad.reduce_sum(ad.sin(x) * t.constant(w)), rng.normal(size=(5,)))
        check_gradient(lambda t, x: ad.reduce_sum(ad.cos(x) * t.constant(w)), rng.normal(size=(5,)))

    def test_sin_over_x(self, rng):
        w = rng.normal(size=(6,))
        x0 = np.array([-2.0, -0.3, 1e-3, 2e-5, 0.7, 2.5])
        check_gradient(lambda t, x: ad.reduce_sum(ad.sin_over_x(x) * t.constant(w)), x0)

    def test_sin_over_x_at_zero(self):
        tape = ad.Tape()
        leaf = tape.leaf(np.array([0.0]))
        out = ad.reduce_sum(ad.sin_over_x(leaf))
        assert out.value == 1.0
        (g,) = tape.gradients(out, [leaf])
        assert g[0] == 0.0

    def test_acos_clamped(self, rng):
        w = rng.normal(size=(5,))
        x0 = rng.uniform(-0.95, 0.95, size=(5,))
        check_gradient(lambda t, x: ad.reduce_sum(ad.acos_clamped(x) * t.constant(w)), x0)

    def test_acos_clamped_outside(self):
        tape = ad.Tape()
        leaf = tape.leaf(np.array([1.5, -1.5]))
        out = ad.reduce_sum(ad.acos_clamped(leaf))
        assert np.all(np.isfinite(out.value))
        (g,) = tape.gradients(out, [leaf])
        np.testing.assert_array_equal(g, 0.0)

    def test_l2norm(self, rng):
        w = rng.normal(size=(4,))
        check_gradient(lambda t, x: ad.reduce_sum(ad.l2norm(x, axis=1) * t.constant(w)), rng.normal(size=(4, 3)) + 0.5)
        check_gradient(lambda t, x: ad.l2norm(x), rng.normal(size=(7,)))

    def test_l2norm_zero_subgradient(self):
        tape = ad.Tape()
        leaf = tape.leaf(np.zeros((2, 3)))
        out = ad.reduce_sum(ad.l2norm(leaf, axis=1))
        (g,) = tape.gradients(out, [leaf])
        np.testing.assert_array_equal(g, 0.0)

    def test_nuclear_norm_3x3(self, rng):
        w = rng.normal(size=(4,))
        x0 = rng.normal(size=(4, 3, 3)) + np.eye(3) * 0.5  # keep singular values apart
        check_gradient(
            lambda t, x: ad.reduce_sum(ad.nuclear_norm_3x3(x) * t.constant(w)),
            x0,
            rel_tol=1e-4,
        )

    def test_nuclear_norm_gradient_is_uvt(self, rng):
        m = rng.normal(size=(3, 3))
        tape = ad.Tape()
        leaf = tape.leaf(m[None])
        out = ad.reduce_sum(ad.nuclear_norm_3x3(leaf))
        (g,) = tape.gradients(out, [leaf])
        u, _, vh = np.linalg.svd(m)
        np.testing.assert_allclose(g[0], u @ vh, atol=1e-12)


class TestTapeMechanics:
    def test_square_at_three(self):
        tape = ad.Tape()
        w = tape.leaf(np.array(3.0))
        (g,) = tape.gradients(w * w, [w])
        assert g == pytest.approx(6.0)

    def test_gradient_of_constant_is_zero(self, rng):
        tape = ad.Tape()
        w = tape.leaf(rng.normal(size=(3,)))
        out = ad.reduce_sum(tape.constant(np.ones(3)))
        (g,) = tape.gradients(out, [w])
        np.testing.assert_array_equal(g, 0.0)

    def test_fanout_accumulates(self):
        tape = ad.Tape()
        x = tape.leaf(np.array(2.0))
        y = x + x
        (g,) = tape.gradients(y, [x])
        assert g == pytest.approx(2.0)

    def test_non_scalar_target_rejected(self, rng):
        tape = ad.Tape()
        x = tape.leaf(rng.normal(size=(3,)))
        with pytest.raises(ValueError, match="scalar"):
            tape.gradients(x * 2.0, [x])

    def test_mixed_tapes_rejected(self, rng):
        t1, t2 = ad.Tape(), ad.Tape()
        a = t1.leaf(np.ones(3))
        b = t2.leaf(np.ones(3))
        with pytest.raises(ValueError, match="tape"):
            a + b

    def test_forward_reproducible(self, rng):
        x = rng.normal(size=(4, 3))
        outs = []
        for _ in range(2):
            tape = ad.Tape()
            leaf = tape.leaf(x)
            out = ad.reduce_sum(ad.tanh(ad.matmul(leaf, tape.constant(x.T))))
            outs.append(out.value.tobytes())
        assert outs[0] == outs[1]

    def test_sweep_is_single_pass(self, rng):
        # interior nodes get their full adjoint even with heavy fan-out
        tape = ad.Tape()
        x = tape.leaf(np.array(1.5))
        h = x * 2.0
        out = h * h + h + h * 3.0
        (g,) = tape.gradients(out, [x])
        # d/dx (4x^2 + 2x + 6x) = 8x + 8 at x=1.5 -> 20
        assert g == pytest.approx(20.0)
