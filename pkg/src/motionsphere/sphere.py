"""Square-root velocity representation of discrete curves and unit-sphere geometry.

A curve is a (T, n) array sampled on a uniform grid over [0, 1]. Its discrete
square-root velocity form has one (n,)-row per grid interval; forward
differences are paired with a left-Riemann cumulative sum so the round trip
curve -> srvf -> curve is exact, not just consistent. Unit-norm forms live on
the sphere { q : ||q||_L2 = 1 } under the dt-weighted inner product
<a, b> = sum_i <a_i, b_i> * dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateMotionError, ShapeError, SingularityError

# Documented constants; the sphere has singularities at antipodes and the
# log/exp formulas degenerate at zero distance.
ANTIPODAL_EPS = 1e-6
ZERO_EPS = 1e-12
UNIT_ATOL = 1e-6


@dataclass
class Srvf:
    """Discrete square-root velocity samples: (R, n) rows, dt = 1/R.

    `unit` marks forms scaled onto the sphere; their dt-weighted L2 norm is 1.
    """

    samples: np.ndarray
    dt: float
    unit: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ShapeError(f"srvf samples must be (R, n) with R >= 1, got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ShapeError("srvf samples contain non-finite values")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def interval_count(self) -> int:
        return self.samples.shape[0]

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.samples * self.samples) * self.dt))


@dataclass
class TangentVector:
    """Element of the tangent space at a reference unit form."""

    samples: np.ndarray
    base: Srvf

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.shape != self.base.samples.shape:
            raise ShapeError(
                f"tangent shape {self.samples.shape} != base shape {self.base.samples.shape}"
            )

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.samples * self.samples) * self.base.dt))


@dataclass
class FrechetMean:
    """Karcher mean result: the mean form, final gradient norm, iterations used."""

    mu: Srvf
    residual: float
    iterations: int


def inner(a: Srvf | TangentVector, b: Srvf | TangentVector) -> float:
    """dt-weighted L2 inner product of two same-grid forms."""
    sa = a.samples if isinstance(a, Srvf) else a.samples
    sb = b.samples if isinstance(b, Srvf) else b.samples
    if sa.shape != sb.shape:
        raise ShapeError(f"shape mismatch: {sa.shape} vs {sb.shape}")
    dt = a.dt if isinstance(a, Srvf) else a.base.dt
    return float(np.sum(sa * sb) * dt)


def _require_unit(q: Srvf, name: str) -> None:
    if not q.unit:
        raise ShapeError(f"{name} must be a unit form (call to_unit first)")
    n = q.norm()
    if abs(n - 1.0) > UNIT_ATOL:
        raise ShapeError(f"{name} flagged unit but has norm {n!r}")


def curve_to_srvf(curve: np.ndarray) -> Srvf:
    """Forward-difference square-root velocity transform of a (T, n) curve.

    Zero-velocity intervals map to zero rows (the analytic limit), so
    stationary mocap frames are representable.
    """
    curve = np.asarray(curve, dtype=np.float64)
    if curve.ndim != 2 or curve.shape[0] < 2:
        raise ShapeError(f"curve must be (T, n) with T >= 2, got {curve.shape}")
    if not np.all(np.isfinite(curve)):
        raise ShapeError("curve contains non-finite values")
    dt = 1.0 / (curve.shape[0] - 1)
    vel = np.diff(curve, axis=0) / dt
    speed = np.linalg.norm(vel, axis=1)
    scale = np.zeros_like(speed)
    nz = speed > 0.0
    scale[nz] = 1.0 / np.sqrt(speed[nz])
    return Srvf(vel * scale[:, None], dt=dt, unit=False)


def srvf_to_curve(q: Srvf, start: np.ndarray) -> np.ndarray:
    """Integrate the velocity encoded by q from `start`; exact inverse of curve_to_srvf."""
    start = np.asarray(start, dtype=np.float64)
    if start.shape != (q.samples.shape[1],):
        raise ShapeError(f"start must be ({q.samples.shape[1]},), got {start.shape}")
    speed = np.linalg.norm(q.samples, axis=1)
    steps = q.samples * (speed[:, None] * q.dt)
    curve = np.empty((q.interval_count + 1, q.samples.shape[1]), dtype=np.float64)
    curve[0] = start
    np.cumsum(steps, axis=0, out=curve[1:])
    curve[1:] += start
    return curve


def to_unit(q: Srvf) -> tuple[Srvf, float]:
    """Scale onto the sphere; returns the unit form and the original norm."""
    n = q.norm()
    if n <= 0.0:
        raise DegenerateMotionError("srvf has zero norm; motion is constant")
    return Srvf(q.samples / n, dt=q.dt, unit=True), n


def geodesic_distance(q1: Srvf, q2: Srvf) -> float:
    """Arc length acos<q1, q2> between two unit forms, in [0, pi]."""
    _require_unit(q1, "q1")
    _require_unit(q2, "q2")
    u = np.clip(inner(q1, q2), -1.0, 1.0)
    return float(np.arccos(u))


def log_map(mu: Srvf, q: Srvf) -> TangentVector:
    """Chart q into the tangent space at mu; ||log_mu(q)|| equals d(mu, q)."""
    _require_unit(mu, "mu")
    _require_unit(q, "q")
    d = geodesic_distance(mu, q)
    if d < ZERO_EPS:
        return TangentVector(np.zeros_like(mu.samples), base=mu)
    if d > np.pi - ANTIPODAL_EPS:
        raise SingularityError(f"points are antipodal (distance {d!r}); log map undefined")
    coeff = d / np.sin(d)
    return TangentVector(coeff * (q.samples - np.cos(d) * mu.samples), base=mu)


def exp_map(mu: Srvf, s: TangentVector) -> Srvf:
    """Map a tangent vector at mu back onto the sphere."""
    _require_unit(mu, "mu")
    if s.samples.shape != mu.samples.shape:
        raise ShapeError(f"tangent shape {s.samples.shape} != mu shape {mu.samples.shape}")
    n = float(np.sqrt(np.sum(s.samples * s.samples) * mu.dt))
    if n < ZERO_EPS:
        return Srvf(mu.samples.copy(), dt=mu.dt, unit=True)
    out = np.cos(n) * mu.samples + (np.sin(n) / n) * s.samples
    # renormalize to absorb float drift; ||out|| = 1 holds analytically
    out /= np.sqrt(np.sum(out * out) * mu.dt)
    return Srvf(out, dt=mu.dt, unit=True)


def karcher_mean(
    qs: list[Srvf],
    tol: float = 1e-8,
    max_iter: int = 100,
    step: float = 1.0,
) -> FrechetMean:
    """Iterative Frechet mean on the sphere.

    Starts from the renormalized Euclidean mean and repeats
    mu <- exp_mu(step * mean_i log_mu(q_i)) until the mean tangent norm
    drops to tol. Reductions run in fixed sequential order.
    """
    if not qs:
        raise ValueError("karcher_mean needs at least one point")
    for i, q in enumerate(qs):
        _require_unit(q, f"qs[{i}]")
        if q.samples.shape != qs[0].samples.shape:
            raise ShapeError(f"qs[{i}] shape {q.samples.shape} != {qs[0].samples.shape}")

    total = np.zeros_like(qs[0].samples)
    for q in qs:
        total += q.samples
    tn = float(np.sqrt(np.sum(total * total) * qs[0].dt))
    if tn <= 0.0:
        raise DegenerateMotionError("points cancel; Euclidean mean is zero, no initial estimate")
    mu = Srvf(total / tn, dt=qs[0].dt, unit=True)

    residual = np.inf
    for it in range(1, max_iter + 1):
        mean_tangent = np.zeros_like(mu.samples)
        for q in qs:
            mean_tangent += log_map(mu, q).samples
        mean_tangent /= len(qs)
        residual = float(np.sqrt(np.sum(mean_tangent * mean_tangent) * mu.dt))
        if residual <= tol:
            return FrechetMean(mu=mu, residual=residual, iterations=it)
        mu = exp_map(mu, TangentVector(step * mean_tangent, base=mu))
    raise ConvergenceError("karcher mean did not converge", residual=residual, iterations=max_iter)
