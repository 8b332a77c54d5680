import numpy as np
import pytest

from motionsphere.errors import DegenerateMotionError, ShapeError, SingularityError
from motionsphere.sphere import (
    Srvf,
    TangentVector,
    curve_to_srvf,
    exp_map,
    geodesic_distance,
    inner,
    karcher_mean,
    log_map,
    srvf_to_curve,
    to_unit,
)


def unit_form(rng, rows=6, dims=9) -> Srvf:
    q, _ = to_unit(Srvf(rng.normal(size=(rows, dims)), dt=1.0 / rows))
    return q


def tangent_at(rng, mu: Srvf, norm: float) -> TangentVector:
    w = rng.normal(size=mu.samples.shape)
    w -= inner(Srvf(w, dt=mu.dt), mu) * mu.samples
    w *= norm / np.sqrt(np.sum(w * w) * mu.dt)
    return TangentVector(w, base=mu)


class TestCurveToSrvf:
    def test_constant_curve_zero(self):
        q = curve_to_srvf(np.ones((5, 3)))
        assert np.all(q.samples == 0.0)

    def test_forced_arithmetic_1d(self):
        q = curve_to_srvf(np.array([[0.0], [0.5], [1.0]]))
        np.testing.assert_allclose(q.samples, [[1.0], [1.0]])
        assert abs(q.norm() - 1.0) < 1e-15

    def test_quadratic_vs_difference_oracle(self):
        # oracle: numerically differentiate, then apply the square-root-velocity
        # formula to those derivatives independently
        t = np.linspace(0.0, 1.0, 5)
        curve = (t**2)[:, None]
        q = curve_to_srvf(curve)
        dt = 1.0 / 4
        vel = (curve[1:] - curve[:-1]) / dt
        expected = np.zeros_like(vel)
        for i, v in enumerate(vel):
            speed = np.linalg.norm(v)
            if speed > 0:
                expected[i] = v / np.sqrt(speed)
        np.testing.assert_allclose(q.samples, expected, rtol=1e-15)
        # and the analytic form sqrt(2t) at interval midpoint-ish accuracy
        midpoints = (t[:-1] + t[1:]) / 2
        np.testing.assert_allclose(q.samples[:, 0], np.sqrt(2 * midpoints), atol=0.1)

    def test_rejects_nonfinite(self):
        with pytest.raises(ShapeError):
            curve_to_srvf(np.array([[0.0], [np.nan]]))


class TestSrvfToCurve:
    def test_zero_form_constant_curve(self):
        q = Srvf(np.zeros((4, 3)), dt=0.25)
        start = np.array([1.0, 2.0, 3.0])
        curve = srvf_to_curve(q, start)
        np.testing.assert_array_equal(curve, np.tile(start, (5, 1)))

    def test_hand_integration(self):
        q = Srvf(np.array([[1.0], [1.0]]), dt=0.5)
        curve = srvf_to_curve(q, np.array([0.0]))
        np.testing.assert_allclose(curve, [[0.0], [0.5], [1.0]], atol=1e-15)

    def test_round_trip_exact(self, rng):
        for _ in range(50):
            t = int(rng.integers(2, 40))
            n = int(rng.integers(1, 12))
            curve = rng.normal(size=(t, n)) * 10.0 ** rng.integers(-3, 4)
            back = srvf_to_curve(curve_to_srvf(curve), curve[0])
            scale = max(1.0, np.max(np.abs(curve)))
            assert np.max(np.abs(back - curve)) <= 1e-12 * scale


class TestToUnit:
    def test_already_unit(self, rng):
        q = unit_form(rng)
        u, s = to_unit(q)
        assert abs(s - 1.0) < 1e-12
        np.testing.assert_allclose(u.samples, q.samples, atol=1e-15)

    def test_homogeneity(self, rng):
        q = Srvf(rng.normal(size=(5, 6)), dt=0.2)
        u1, s1 = to_unit(q)
        u3, s3 = to_unit(Srvf(q.samples * 3.0, dt=0.2))
        np.testing.assert_allclose(u3.samples, u1.samples, atol=1e-14)
        assert abs(s3 - 3.0 * s1) < 1e-12 * s1

    def test_unit_norm(self, rng):
        for _ in range(20):
            q = Srvf(rng.normal(size=(7, 4)), dt=1.0 / 7)
            u, _ = to_unit(q)
            assert abs(u.norm() - 1.0) < 1e-12

    def test_zero_rejected(self):
        with pytest.raises(DegenerateMotionError):
            to_unit(Srvf(np.zeros((3, 3)), dt=1.0 / 3))


class TestGeodesicDistance:
    def test_self_distance_zero(self, rng):
        q = unit_form(rng)
        assert geodesic_distance(q, q) == 0.0

    def test_orthogonal_pair(self):
        a = np.zeros((2, 2))
        a[0, 0] = np.sqrt(2.0)  # norm: (2 * 0.5)^(1/2) = 1 with dt = 0.5
        b = np.zeros((2, 2))
        b[1, 1] = np.sqrt(2.0)
        qa = Srvf(a, dt=0.5, unit=True)
        qb = Srvf(b, dt=0.5, unit=True)
        assert abs(geodesic_distance(qa, qb) - np.pi / 2) < 1e-15

    def test_half_inner_product(self, rng):
        # construct a pair with inner product exactly 0.5
        mu = unit_form(rng)
        v = tangent_at(rng, mu, np.arccos(0.5))
        q = exp_map(mu, v)
        d = geodesic_distance(mu, q)
        assert abs(d - 1.0471975512) < 1e-9

    def test_requires_unit(self, rng):
        q = unit_form(rng)
        bad = Srvf(q.samples * 2.0, dt=q.dt, unit=True)
        with pytest.raises(ShapeError):
            geodesic_distance(q, bad)
        with pytest.raises(ShapeError):
            geodesic_distance(q, Srvf(q.samples, dt=q.dt, unit=False))

    def test_symmetry_and_triangle(self, rng):
        for _ in range(200):
            a, b, c = (unit_form(rng, rows=4, dims=5) for _ in range(3))
            dab = geodesic_distance(a, b)
            assert abs(dab - geodesic_distance(b, a)) < 1e-12
            assert dab <= geodesic_distance(a, c) + geodesic_distance(c, b) + 1e-9


class TestLogExp:
    def test_log_at_base_zero(self, rng):
        mu = unit_form(rng)
        assert np.all(log_map(mu, mu).samples == 0.0)

    def test_log_norm_equals_distance(self, rng):
        for _ in range(100):
            mu, q = unit_form(rng), unit_form(rng)
            v = log_map(mu, q)
            assert abs(v.norm() - geodesic_distance(mu, q)) < 1e-10

    def test_log_is_tangent(self, rng):
        for _ in range(50):
            mu, q = unit_form(rng), unit_form(rng)
            v = log_map(mu, q)
            assert abs(inner(v, mu)) < 1e-8

    def test_exp_of_zero(self, rng):
        mu = unit_form(rng)
        out = exp_map(mu, TangentVector(np.zeros_like(mu.samples), base=mu))
        np.testing.assert_array_equal(out.samples, mu.samples)

    def test_exp_norm_one(self, rng):
        mu = unit_form(rng)
        for _ in range(50):
            s = tangent_at(rng, mu, float(rng.uniform(0.01, 3.0)))
            assert abs(exp_map(mu, s).norm() - 1.0) < 1e-10

    def test_exp_log_inverse_pairs(self, rng):
        for _ in range(1000):
            mu, q = unit_form(rng, rows=3, dims=4), unit_form(rng, rows=3, dims=4)
            if geodesic_distance(mu, q) > np.pi - 1e-3:
                continue
            back = exp_map(mu, log_map(mu, q))
            assert np.max(np.abs(back.samples - q.samples)) < 1e-10

    def test_log_exp_inverse_pairs(self, rng):
        mu = unit_form(rng)
        for _ in range(1000):
            s = tangent_at(rng, mu, float(rng.uniform(1e-3, np.pi - 1e-3)))
            back = log_map(mu, exp_map(mu, s))
            assert np.max(np.abs(back.samples - s.samples)) < 1e-9

    def test_antipodal_rejected(self, rng):
        mu = unit_form(rng)
        anti = Srvf(-mu.samples, dt=mu.dt, unit=True)
        with pytest.raises(SingularityError):
            log_map(mu, anti)


def sum_sq_distances(candidate: Srvf, points: list[Srvf]) -> float:
    return sum(geodesic_distance(candidate, q) ** 2 for q in points)


class TestKarcherMean:
    def test_single_point(self, rng):
        q = unit_form(rng)
        result = karcher_mean([q])
        assert result.iterations <= 1
        np.testing.assert_allclose(result.mu.samples, q.samples, atol=1e-12)

    def test_two_points_geodesic_midpoint(self, rng):
        q1, q2 = unit_form(rng), unit_form(rng)
        result = karcher_mean([q1, q2], tol=1e-12)
        d = geodesic_distance(q1, q2)
        assert abs(geodesic_distance(result.mu, q1) - d / 2) < 1e-8
        assert abs(geodesic_distance(result.mu, q2) - d / 2) < 1e-8
        # grid-search oracle: sweep the connecting geodesic at 10^4 points
        ts = np.linspace(0.0, 1.0, 10_000)
        objective = sum_sq_distances(result.mu, [q1, q2])
        sin_d = np.sin(d)
        best = np.inf
        for t in ts:
            cand = (np.sin((1 - t) * d) * q1.samples + np.sin(t * d) * q2.samples) / sin_d
            cand_form = Srvf(cand, dt=q1.dt, unit=True)
            best = min(best, sum_sq_distances(cand_form, [q1, q2]))
        assert objective <= best + 1e-10

    def test_five_points_local_minimality(self, rng):
        points = [unit_form(rng) for _ in range(5)]
        result = karcher_mean(points, tol=1e-12)
        base = sum_sq_distances(result.mu, points)
        for _ in range(200):
            step = tangent_at(rng, result.mu, float(rng.uniform(1e-3, 0.3)))
            probe = exp_map(result.mu, step)
            assert base <= sum_sq_distances(probe, points) + 1e-12

    def test_symmetric_configuration_recovers_center(self, rng):
        p = unit_form(rng)
        points = []
        for _ in range(4):
            v = tangent_at(rng, p, float(rng.uniform(0.1, 1.0)))
            points.append(exp_map(p, v))
            points.append(exp_map(p, TangentVector(-v.samples, base=p)))
        result = karcher_mean(points, tol=1e-12)
        assert geodesic_distance(result.mu, p) < 1e-8

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            karcher_mean([])
