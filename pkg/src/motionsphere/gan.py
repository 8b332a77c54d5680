"""Adversarial prediction of future motion on the sphere's tangent spaces.

Training alternates one critic update and one predictor update per iteration.
The critic scores tangent vectors at the future-side reference mean and is
regularized by a gradient penalty along random interpolants between real and
predicted tangents. The predictor maps the prior motion's tangent coordinates
to a future tangent vector; its loss is a weighted sum of the adversarial
score, an L1 tangent reconstruction term, and two pose-space terms (Gram
discrepancy and bone-length drift) computed on curves reintegrated from the
predicted velocity forms.

Prior and future curves generally discretize to different tangent dimensions
((tau-1) versus (T-tau) grid intervals: the future curve is anchored at the
last observed pose so its reconstruction is exact), so the input and output
sides each carry their own reference mean.

Everything is deterministic given (seed, config, dataset): one RNG stream
drives batch sampling and penalty interpolants in a fixed order, and
reductions are sequential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import network as net
from .errors import (
    DegenerateMotionError,
    ShapeError,
    SingularityError,
    StateError,
    TrainingDivergedError,
)
from .motion import DatasetSplit, MotionSequence, SkeletonTopology, sequence_from_curve
from .sphere import (
    ANTIPODAL_EPS,
    ZERO_EPS,
    FrechetMean,
    Srvf,
    TangentVector,
    curve_to_srvf,
    exp_map,
    karcher_mean,
    log_map,
    srvf_to_curve,
    to_unit,
)

SCALE_SOURCES = ("mean-future-length", "prior-length")


@dataclass
class TrainConfig:
    """Training hyperparameters. Loss weights follow beta_adv..beta_bone order."""

    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 500
    lambda_gp: float = 10.0
    beta_adv: float = 1.0
    beta_rec: float = 1.0
    beta_skel: float = 10.0
    beta_bone: float = 10.0
    seed: int = 0
    tau: int = 10
    total_len: int = 20
    scale_source: str = "mean-future-length"
    predictor_hidden: tuple[int, ...] = (512, 256, 256)
    critic_hidden: tuple[int, ...] = (256, 64)
    leaky_slope: float = 0.2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    n_critic: int = 1
    karcher_tol: float = 1e-8
    karcher_max_iter: int = 100

    def __post_init__(self):
        self.predictor_hidden = tuple(int(w) for w in self.predictor_hidden)
        self.critic_hidden = tuple(int(w) for w in self.critic_hidden)
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("lr > 0, batch_size >= 1, epochs >= 0 required")
        if min(self.beta_adv, self.beta_rec, self.beta_skel, self.beta_bone) < 0 or self.lambda_gp < 0:
            raise ValueError("loss weights must be nonnegative")
        if not 2 <= self.tau < self.total_len:
            raise ValueError(f"need 2 <= tau < total_len, got tau={self.tau}, total_len={self.total_len}")
        if self.scale_source not in SCALE_SOURCES:
            raise ValueError(f"scale_source must be one of {SCALE_SOURCES}, got {self.scale_source!r}")
        if self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["predictor_hidden"] = list(self.predictor_hidden)
        d["critic_hidden"] = list(self.critic_hidden)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        d["predictor_hidden"] = tuple(d.get("predictor_hidden", (512, 256, 256)))
        d["critic_hidden"] = tuple(d.get("critic_hidden", (256, 64)))
        return TrainConfig(**d)


@dataclass
class LossBreakdown:
    """Component values of one loss evaluation; total recombines with the betas."""

    l_a: float
    l_r: float
    l_s: float
    l_b: float
    total: float
    wasserstein_estimate: float

    def is_finite(self) -> bool:
        return all(
            math.isfinite(v)
            for v in (self.l_a, self.l_r, self.l_s, self.l_b, self.total, self.wasserstein_estimate)
        )


@dataclass
class LossRecord:
    epoch: int
    iteration: int
    l_a: float
    l_r: float
    l_s: float
    l_b: float
    total: float
    wasserstein_estimate: float


@dataclass
class TrainState:
    """Everything needed to continue training or to predict."""

    predictor_spec: net.MlpSpec
    critic_spec: net.MlpSpec
    predictor: net.ParamSet
    critic: net.ParamSet
    adam_predictor: net.AdamState
    adam_critic: net.AdamState
    mu: Srvf
    mu_prior: Srvf
    future_scale: float
    topology: SkeletonTopology
    epoch: int = 0
    rng_state: dict | None = None


# ---------------------------------------------------------------------------
# Dataset preparation
# ---------------------------------------------------------------------------


@dataclass
class PreparedData:
    """Stacked per-sample arrays the training loop batches over."""

    prior_units: np.ndarray  # (m, tau-1, n)
    fut_units: np.ndarray  # (m, T-tau, n)
    fut_scales: np.ndarray  # (m,)
    last_poses: np.ndarray  # (m, n) final prior pose, flattened
    dt_prior: float
    dt_fut: float
    joint_count: int

    @property
    def count(self) -> int:
        return self.prior_units.shape[0]


def prepare_data(split: DatasetSplit, topology: SkeletonTopology) -> PreparedData:
    """SRVF-encode every (prior, future) pair onto their unit spheres.

    The future curve is prefixed with the last prior pose, so integrating its
    velocity form from that pose reproduces the future frames exactly.
    """
    k = topology.joint_count
    prior_units, fut_units, fut_scales, last_poses = [], [], [], []
    for i, (prior, future) in enumerate(split.samples):
        if prior.joint_count != k:
            raise ShapeError(f"sample {i}: {prior.joint_count} joints, topology expects {k}")
        prior_curve = prior.as_curve()
        anchored = np.concatenate([prior_curve[-1:], future.as_curve()], axis=0)
        try:
            up, _ = to_unit(curve_to_srvf(prior_curve))
            uf, sf = to_unit(curve_to_srvf(anchored))
        except DegenerateMotionError as exc:
            raise DegenerateMotionError(f"sample {i}: {exc}") from None
        prior_units.append(up.samples)
        fut_units.append(uf.samples)
        fut_scales.append(sf)
        last_poses.append(prior_curve[-1])
    return PreparedData(
        prior_units=np.stack(prior_units),
        fut_units=np.stack(fut_units),
        fut_scales=np.asarray(fut_scales),
        last_poses=np.stack(last_poses),
        dt_prior=1.0 / (split.prior_len - 1),
        dt_fut=1.0 / (split.total_len - split.prior_len),
        joint_count=k,
    )


def prepare_reference(
    futures: list[Srvf], tol: float = 1e-8, max_iter: int = 100
) -> tuple[FrechetMean, float]:
    """Karcher mean of the (normalized) forms plus the mean pre-normalization norm."""
    if not futures:
        raise ValueError("prepare_reference needs at least one form")
    units, norms = [], []
    for q in futures:
        if q.unit:
            units.append(q)
            norms.append(1.0)
        else:
            u, s = to_unit(q)
            units.append(u)
            norms.append(s)
    mean = karcher_mean(units, tol=tol, max_iter=max_iter)
    return mean, float(np.mean(norms))


# ---------------------------------------------------------------------------
# Batched sphere maps (plain numpy, mirrors sphere.py semantics)
# ---------------------------------------------------------------------------


def _batch_log(mu: np.ndarray, qs: np.ndarray, dt: float) -> np.ndarray:
    """log map of stacked unit forms (B, R, n) at a unit reference (R, n)."""
    u = np.clip(np.sum(qs * mu[None], axis=(1, 2)) * dt, -1.0, 1.0)
    d = np.arccos(u)
    bad = d > np.pi - ANTIPODAL_EPS
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise SingularityError(f"sample {idx} is antipodal to the reference (distance {d[idx]!r})")
    coeff = np.where(d < ZERO_EPS, 0.0, d / np.where(d > 0.0, np.sin(d), 1.0))
    return coeff[:, None, None] * (qs - u[:, None, None] * mu[None])


def _batch_exp(mu: np.ndarray, vs: np.ndarray, dt: float) -> np.ndarray:
    """exp map of stacked tangents (B, R, n) at a unit reference (R, n)."""
    norms = np.sqrt(np.sum(vs * vs, axis=(1, 2)) * dt)
    small = norms < ZERO_EPS
    safe = np.where(small, 1.0, norms)
    out = np.cos(norms)[:, None, None] * mu[None] + (np.sin(norms) / safe)[:, None, None] * vs
    out[small] = mu[None]
    out_norms = np.sqrt(np.sum(out * out, axis=(1, 2)) * dt)
    return out / out_norms[:, None, None]


def _project_batch(mu: np.ndarray, vs: np.ndarray, dt: float) -> np.ndarray:
    """Project raw network outputs onto the tangent space at the reference.

    The closed-form exp map lands on the sphere only for tangent arguments, and
    the in-radius identity log(exp(v)) = v needs tangency too, so predictor
    outputs pass through here before any sphere map.
    """
    inner_mu = np.sum(vs * mu[None], axis=(1, 2), keepdims=True) * dt
    return vs - inner_mu * mu[None]


def _integrate_batch(qs: np.ndarray, starts: np.ndarray, dt: float) -> np.ndarray:
    """Velocity-form integration of (B, R, n) from (B, n); returns frames 1..R."""
    speed = np.linalg.norm(qs, axis=2, keepdims=True)
    return np.cumsum(qs * speed * dt, axis=1) + starts[:, None, :]


# ---------------------------------------------------------------------------
# Tape-side sphere maps (differentiable mirrors of the above)
# ---------------------------------------------------------------------------


def _tape_norm_dt(v: ad.Node, dt: float) -> ad.Node:
    """dt-weighted L2 norm per batch element, shape (B, 1, 1); subgradient 0 at 0."""
    b = v.value.shape[0]
    flat = ad.reshape(v, (b, -1))
    n = ad.l2norm(flat * math.sqrt(dt), axis=1, keepdims=True)
    return ad.reshape(n, (b, 1, 1))


def _tape_exp(mu: np.ndarray, v: ad.Node, dt: float, tape: ad.Tape) -> ad.Node:
    """Differentiable exp map; exact at v = 0 thanks to the smooth sin(x)/x."""
    nv = _tape_norm_dt(v, dt)
    mu_c = tape.constant(mu[None])
    return ad.cos(nv) * mu_c + ad.sin_over_x(nv) * v


def _tape_log(mu: np.ndarray, q: ad.Node, dt: float, tape: ad.Tape) -> ad.Node:
    """Differentiable log map; the arccos clamp keeps the pole derivative bounded."""
    mu_c = tape.constant(mu[None])
    u = ad.reduce_sum(q * mu_c, axis=(1, 2), keepdims=True) * dt
    d = ad.acos_clamped(u)
    coeff = d / ad.sin(d)
    return coeff * (q - ad.cos(d) * mu_c)


def _tape_project(mu: np.ndarray, v: ad.Node, dt: float, tape: ad.Tape) -> ad.Node:
    """Differentiable tangent-space projection at the reference."""
    mu_c = tape.constant(mu[None])
    inner_mu = ad.reduce_sum(v * mu_c, axis=(1, 2), keepdims=True) * dt
    return v - inner_mu * mu_c


def _tape_integrate(q: ad.Node, starts: np.ndarray, dt: float, tape: ad.Tape) -> ad.Node:
    speed = ad.l2norm(q, axis=2, keepdims=True)
    steps = q * speed * dt
    return ad.cumsum(steps, axis=1) + tape.constant(starts[:, None, :])


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def build_specs(cfg: TrainConfig, n: int) -> tuple[net.MlpSpec, net.MlpSpec]:
    """Predictor and critic layer specs for n = 3k coordinate dimensions."""
    in_dim = (cfg.tau - 1) * n
    out_dim = (cfg.total_len - cfg.tau) * n
    predictor = net.MlpSpec(
        widths=(in_dim, *cfg.predictor_hidden, out_dim), leaky_slope=cfg.leaky_slope
    )
    critic = net.MlpSpec(widths=(out_dim, *cfg.critic_hidden, 1), leaky_slope=cfg.leaky_slope)
    return predictor, critic


def _predictor_tangents(
    prior_units: np.ndarray, state: TrainState, dt_prior: float
) -> np.ndarray:
    """Flattened input-side tangent coordinates of a prior batch."""
    x = _batch_log(state.mu_prior.samples, prior_units, dt_prior)
    return x.reshape(x.shape[0], -1)


def critic_loss(
    prior_units: np.ndarray,
    fut_units: np.ndarray,
    state: TrainState,
    cfg: TrainConfig,
    dt_prior: float,
    dt_fut: float,
    gp_alpha: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Critic objective (separation of real and predicted tangents plus gradient
    penalty) and its parameter gradients.

    The predictor output is a constant here; only the critic is differentiated.
    Interpolation coefficients come from `gp_alpha` (one per sample in [0, 1])
    or are drawn from `rng`.
    """
    batch = prior_units.shape[0]
    if fut_units.shape[0] != batch:
        raise ShapeError(f"batch mismatch: {batch} priors vs {fut_units.shape[0]} futures")
    x_in = _predictor_tangents(prior_units, state, dt_prior)
    v = net.evaluate(state.predictor_spec, state.predictor, x_in)
    v_tan = _project_batch(state.mu.samples, v.reshape(fut_units.shape), dt_fut)
    fake_forms = _batch_exp(state.mu.samples, v_tan, dt_fut)
    t_fake = _batch_log(state.mu.samples, fake_forms, dt_fut).reshape(batch, -1)
    t_real = _batch_log(state.mu.samples, fut_units, dt_fut).reshape(batch, -1)

    if gp_alpha is None:
        if rng is None:
            raise ValueError("critic_loss needs gp_alpha or rng")
        gp_alpha = rng.uniform(0.0, 1.0, size=batch)
    gp_alpha = np.asarray(gp_alpha, dtype=np.float64).reshape(batch, 1)
    interp = (1.0 - gp_alpha) * t_real + gp_alpha * t_fake

    tape = ad.Tape()
    bound = net.bind(tape, state.critic)
    d_real = net.forward(state.critic_spec, bound, t_real, tape)
    d_fake = net.forward(state.critic_spec, bound, t_fake, tape)
    w_est = ad.reduce_mean(d_real) - ad.reduce_mean(d_fake)
    grad_interp = net.input_gradient(state.critic_spec, bound, interp, tape)
    grad_norm = ad.l2norm(grad_interp, axis=1)
    penalty = ad.reduce_mean((grad_norm - 1.0) * (grad_norm - 1.0))
    objective = -w_est + cfg.lambda_gp * penalty
    total = cfg.beta_adv * objective
    grads = net.flatten_grads(bound, tape, total)

    l_a = float(objective.value)
    breakdown = LossBreakdown(
        l_a=l_a,
        l_r=0.0,
        l_s=0.0,
        l_b=0.0,
        total=cfg.beta_adv * l_a,
        wasserstein_estimate=float(w_est.value),
    )
    return breakdown, grads


def predictor_loss(
    prior_units: np.ndarray,
    fut_units: np.ndarray,
    last_poses: np.ndarray,
    state: TrainState,
    cfg: TrainConfig,
    dt_prior: float,
    dt_fut: float,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Full weighted predictor loss and its parameter gradients.

    Gradients flow through the exp/log round trip, the velocity-form rescaling
    and reintegration, the 3x3 nuclear norm inside the Gram term, and the bone
    lengths. Target poses are reintegrated from the ground-truth unit forms
    with the shared future scale, so a perfect tangent prediction has exactly
    zero reconstruction, Gram, and bone losses.
    """
    batch, r, n = fut_units.shape
    k = n // 3
    x_in = _predictor_tangents(prior_units, state, dt_prior)
    t_real = _batch_log(state.mu.samples, fut_units, dt_fut)
    gt_frames = _integrate_batch(state.future_scale * fut_units, last_poses, dt_fut)
    gt_poses = gt_frames.reshape(batch, r, k, 3)

    tape = ad.Tape()
    bound = net.bind(tape, state.predictor)
    v_flat = net.forward(state.predictor_spec, bound, x_in, tape)
    v = _tape_project(state.mu.samples, ad.reshape(v_flat, (batch, r, n)), dt_fut, tape)
    fake_form = _tape_exp(state.mu.samples, v, dt_fut, tape)
    t_fake = _tape_log(state.mu.samples, fake_form, dt_fut, tape)

    # adversarial term: critic parameters are constants on this tape
    critic_const = {name: tape.constant(val) for name, val in state.critic.items()}
    d_fake = net.forward(state.critic_spec, critic_const, ad.reshape(t_fake, (batch, -1)), tape)
    l_a = -ad.reduce_mean(d_fake)

    # L1 tangent reconstruction, dt-weighted, mean over the batch
    l_r = ad.reduce_sum(ad.absolute(t_fake - tape.constant(t_real))) * (dt_fut / batch)

    # pose-space terms on the reintegrated prediction
    pred_frames = _tape_integrate(fake_form * state.future_scale, last_poses, dt_fut, tape)
    pred_poses = ad.reshape(pred_frames, (batch, r, k, 3))
    gt_const = tape.constant(gt_poses)
    cross = ad.matmul(ad.transpose_last2(pred_poses), gt_const)
    tr_pred = ad.reduce_sum(pred_poses * pred_poses, axis=(2, 3))
    tr_gt = np.sum(gt_poses * gt_poses, axis=(2, 3))
    gram = tr_pred + tape.constant(tr_gt) - 2.0 * ad.nuclear_norm_3x3(cross)
    l_s = ad.reduce_sum(gram) * (1.0 / (batch * r))

    parents = [b[0] for b in state.topology.bones]
    children = [b[1] for b in state.topology.bones]
    pred_bones = ad.l2norm(
        ad.take(pred_poses, children, axis=2) - ad.take(pred_poses, parents, axis=2), axis=3
    )
    gt_bones = np.linalg.norm(gt_poses[:, :, children] - gt_poses[:, :, parents], axis=3)
    l_b = ad.reduce_sum(ad.absolute(pred_bones - tape.constant(gt_bones))) * (
        1.0 / (batch * r * len(parents))
    )

    total = ((cfg.beta_adv * l_a + cfg.beta_rec * l_r) + cfg.beta_skel * l_s) + cfg.beta_bone * l_b
    grads = net.flatten_grads(bound, tape, total)

    d_real = net.evaluate(state.critic_spec, state.critic, t_real.reshape(batch, -1))
    breakdown = LossBreakdown(
        l_a=float(l_a.value),
        l_r=float(l_r.value),
        l_s=float(l_s.value),
        l_b=float(l_b.value),
        total=float(total.value),
        wasserstein_estimate=float(np.mean(d_real) + l_a.value),
    )
    return breakdown, grads


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def init_state(
    data: PreparedData, topology: SkeletonTopology, cfg: TrainConfig
) -> TrainState:
    """References, scales, parameters, and optimizer moments before epoch 1."""
    n = 3 * data.joint_count
    pred_spec, critic_spec = build_specs(cfg, n)
    fut_forms = [Srvf(s, dt=data.dt_fut, unit=True) for s in data.fut_units]
    prior_forms = [Srvf(s, dt=data.dt_prior, unit=True) for s in data.prior_units]
    mu_fut, _ = prepare_reference(fut_forms, tol=cfg.karcher_tol, max_iter=cfg.karcher_max_iter)
    mu_prior, _ = prepare_reference(prior_forms, tol=cfg.karcher_tol, max_iter=cfg.karcher_max_iter)
    predictor = net.init_params(pred_spec, seed=cfg.seed)
    critic = net.init_params(critic_spec, seed=cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed + 2)
    return TrainState(
        predictor_spec=pred_spec,
        critic_spec=critic_spec,
        predictor=predictor,
        critic=critic,
        adam_predictor=net.init_adam(predictor),
        adam_critic=net.init_adam(critic),
        mu=mu_fut.mu,
        mu_prior=mu_prior.mu,
        future_scale=float(np.mean(data.fut_scales)),
        topology=topology,
        epoch=0,
        rng_state=rng.bit_generator.state,
    )


def _check_round_trip(state: TrainState, v: np.ndarray, dt: float) -> None:
    """Sanity probe: log(exp(v)) must reproduce v inside the injectivity radius."""
    norm = float(np.sqrt(np.sum(v * v) * dt))
    if not 1e-2 < norm < np.pi - 1e-3:
        return
    form = _batch_exp(state.mu.samples, v[None], dt)
    back = _batch_log(state.mu.samples, form, dt)[0]
    err = float(np.max(np.abs(back - v)))
    if err > 1e-9 * max(1.0, norm):
        raise ArithmeticError(f"tangent round-trip drifted by {err!r}; geometry is inconsistent")


def train(
    split: DatasetSplit,
    topology: SkeletonTopology,
    cfg: TrainConfig,
    resume: TrainState | None = None,
) -> tuple[TrainState, list[LossRecord]]:
    """Run the alternating critic/predictor loop to cfg.epochs.

    Each epoch performs ceil(m / batch_size) iterations; every iteration draws
    fresh random minibatches (with replacement) for the critic step and again
    for the predictor step. Returns the final state plus one loss record per
    iteration (predictor breakdown, critic's transport estimate).
    """
    if split.prior_len != cfg.tau or split.total_len != cfg.total_len:
        raise ShapeError(
            f"dataset split ({split.prior_len}, {split.total_len}) does not match "
            f"config (tau={cfg.tau}, total_len={cfg.total_len})"
        )
    data = prepare_data(split, topology)
    state = resume if resume is not None else init_state(data, topology, cfg)
    rng = np.random.default_rng()
    rng.bit_generator.state = state.rng_state

    m = data.count
    iters_per_epoch = max(1, math.ceil(m / cfg.batch_size))
    records: list[LossRecord] = []

    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        for it in range(1, iters_per_epoch + 1):
            w_est = 0.0
            for _ in range(cfg.n_critic):
                idx = rng.integers(0, m, size=cfg.batch_size)
                c_breakdown, c_grads = critic_loss(
                    data.prior_units[idx],
                    data.fut_units[idx],
                    state,
                    cfg,
                    data.dt_prior,
                    data.dt_fut,
                    rng=rng,
                )
                if not c_breakdown.is_finite():
                    raise TrainingDivergedError("critic loss is not finite", epoch, it)
                net.adam_step(
                    state.critic, c_grads, state.adam_critic, cfg.lr,
                    cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
                )
                w_est = c_breakdown.wasserstein_estimate

            idx = rng.integers(0, m, size=cfg.batch_size)
            p_breakdown, p_grads = predictor_loss(
                data.prior_units[idx],
                data.fut_units[idx],
                data.last_poses[idx],
                state,
                cfg,
                data.dt_prior,
                data.dt_fut,
            )
            if not p_breakdown.is_finite():
                raise TrainingDivergedError("predictor loss is not finite", epoch, it)
            net.adam_step(
                state.predictor, p_grads, state.adam_predictor, cfg.lr,
                cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
            )

            if it == 1:
                x_probe = _predictor_tangents(data.prior_units[idx[:1]], state, data.dt_prior)
                v_probe = net.evaluate(state.predictor_spec, state.predictor, x_probe)
                v_tan = _project_batch(
                    state.mu.samples, v_probe.reshape((1,) + data.fut_units.shape[1:]), data.dt_fut
                )[0]
                _check_round_trip(state, v_tan, data.dt_fut)

            records.append(
                LossRecord(
                    epoch=epoch,
                    iteration=it,
                    l_a=p_breakdown.l_a,
                    l_r=p_breakdown.l_r,
                    l_s=p_breakdown.l_s,
                    l_b=p_breakdown.l_b,
                    total=p_breakdown.total,
                    wasserstein_estimate=w_est,
                )
            )
        state.epoch = epoch
        state.rng_state = rng.bit_generator.state
    state.rng_state = rng.bit_generator.state
    return state, records


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict(prior: MotionSequence, state: TrainState, cfg: TrainConfig) -> MotionSequence:
    """Future frames for one prior sequence.

    The predicted velocity form is rescaled (shared training scale, or the
    prior's own arc length when configured) and integrated from the last
    observed pose; the anchor pose itself is not part of the output, whose
    first frame sits one integration step after it.
    """
    if state.mu is None or state.mu_prior is None:
        raise StateError("state has no reference means; train or load a checkpoint first")
    if prior.frame_count != cfg.tau:
        raise ValueError(f"prior has {prior.frame_count} frames, config expects tau={cfg.tau}")
    if prior.joint_count != state.topology.joint_count:
        raise ShapeError(
            f"prior has {prior.joint_count} joints, topology expects {state.topology.joint_count}"
        )
    r = cfg.total_len - cfg.tau
    prior_curve = prior.as_curve()
    unit, prior_norm = to_unit(curve_to_srvf(prior_curve))
    x = log_map(state.mu_prior, unit).samples.reshape(1, -1)
    v = net.evaluate(state.predictor_spec, state.predictor, x)
    v_tan = _project_batch(state.mu.samples, v.reshape((1,) + state.mu.samples.shape), state.mu.dt)[0]
    tangent = TangentVector(v_tan, base=state.mu)
    form = exp_map(state.mu, tangent)
    if cfg.scale_source == "mean-future-length":
        scale = state.future_scale
    else:
        # prior's own arc length, corrected for the interval-count ratio
        scale = prior_norm * math.sqrt(r / (cfg.tau - 1))
    rescaled = Srvf(form.samples * scale, dt=form.dt, unit=False)
    curve = srvf_to_curve(rescaled, start=prior_curve[-1])
    return sequence_from_curve(curve[1:], fps=prior.fps, label=prior.label)


# ---------------------------------------------------------------------------
# Checkpoint and loss-log serialization
# ---------------------------------------------------------------------------

_FLOAT_FMT = "%.17g"
LOG_COLUMNS = ("epoch", "iter", "l_a", "l_r", "l_s", "l_b", "total", "wasserstein_estimate")


def save_checkpoint(path, state: TrainState, cfg: TrainConfig) -> None:
    tensors: dict[str, np.ndarray] = {}
    for prefix, params in (("predictor", state.predictor), ("critic", state.critic)):
        for name, val in params.items():
            tensors[f"{prefix}.{name}"] = val
    for prefix, adam in (("adam_p", state.adam_predictor), ("adam_c", state.adam_critic)):
        for name, val in adam.m.items():
            tensors[f"{prefix}.m.{name}"] = val
        for name, val in adam.v.items():
            tensors[f"{prefix}.v.{name}"] = val
    tensors["mu"] = state.mu.samples
    tensors["mu_prior"] = state.mu_prior.samples
    meta = {
        "kind": "train-state",
        "cfg": cfg.to_dict(),
        "epoch": state.epoch,
        "future_scale": state.future_scale,
        "mu_dt": state.mu.dt,
        "mu_prior_dt": state.mu_prior.dt,
        "adam_p_step": state.adam_predictor.step,
        "adam_c_step": state.adam_critic.step,
        "rng_state": state.rng_state,
        "predictor_spec": state.predictor_spec.to_dict(),
        "critic_spec": state.critic_spec.to_dict(),
        "topology": {
            "joint_count": state.topology.joint_count,
            "bones": [list(b) for b in state.topology.bones],
            "hip_index": state.topology.hip_index,
        },
    }
    net.write_archive(path, meta, tensors)


def load_checkpoint(path) -> tuple[TrainState, TrainConfig]:
    meta, tensors = net.read_archive(path)
    if meta.get("kind") != "train-state":
        raise ShapeError(f"{path}: not a training checkpoint")
    cfg = TrainConfig.from_dict(meta["cfg"])
    pred_spec = net.MlpSpec.from_dict(meta["predictor_spec"])
    critic_spec = net.MlpSpec.from_dict(meta["critic_spec"])

    def collect(prefix: str) -> dict[str, np.ndarray]:
        plen = len(prefix) + 1
        return {name[plen:]: val for name, val in tensors.items() if name.startswith(prefix + ".")}

    predictor = net.ParamSet(collect("predictor"))
    critic = net.ParamSet(collect("critic"))
    adam_p = net.AdamState(m=collect("adam_p.m"), v=collect("adam_p.v"), step=int(meta["adam_p_step"]))
    adam_c = net.AdamState(m=collect("adam_c.m"), v=collect("adam_c.v"), step=int(meta["adam_c_step"]))
    topo = meta["topology"]
    state = TrainState(
        predictor_spec=pred_spec,
        critic_spec=critic_spec,
        predictor=predictor,
        critic=critic,
        adam_predictor=adam_p,
        adam_critic=adam_c,
        mu=Srvf(tensors["mu"], dt=float(meta["mu_dt"]), unit=True),
        mu_prior=Srvf(tensors["mu_prior"], dt=float(meta["mu_prior_dt"]), unit=True),
        future_scale=float(meta["future_scale"]),
        topology=SkeletonTopology(
            joint_count=int(topo["joint_count"]),
            bones=tuple(tuple(b) for b in topo["bones"]),
            hip_index=int(topo["hip_index"]),
        ),
        epoch=int(meta["epoch"]),
        rng_state=meta["rng_state"],
    )
    return state, cfg


def write_loss_log(path, records: list[LossRecord]) -> None:
    lines = [",".join(LOG_COLUMNS)]
    for r in records:
        lines.append(
            ",".join(
                [str(r.epoch), str(r.iteration)]
                + [_FLOAT_FMT % v for v in (r.l_a, r.l_r, r.l_s, r.l_b, r.total, r.wasserstein_estimate)]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_loss_log(path) -> list[LossRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != ",".join(LOG_COLUMNS):
        raise ShapeError(f"{path}: unexpected loss-log header")
    out = []
    for line in lines[1:]:
        parts = line.split(",")
        out.append(
            LossRecord(
                epoch=int(parts[0]),
                iteration=int(parts[1]),
                l_a=float(parts[2]),
                l_r=float(parts[3]),
                l_s=float(parts[4]),
                l_b=float(parts[5]),
                total=float(parts[6]),
                wasserstein_estimate=float(parts[7]),
            )
        )
    return out
