"""Spherical trajectory representation and adversarial prediction of 3D skeleton motion."""

from .motion import (
    DatasetSplit,
    MotionSequence,
    SkeletonTopology,
    SyntheticSpec,
    chain_topology,
    downsample,
    load_sequence,
    load_sequences,
    make_split,
    normalize,
    save_sequence,
    save_sequences,
    split_prior_future,
    synthesize_dataset,
    window,
)
from .sphere import (
    FrechetMean,
    Srvf,
    TangentVector,
    curve_to_srvf,
    exp_map,
    geodesic_distance,
    karcher_mean,
    log_map,
    srvf_to_curve,
    to_unit,
)
from .metrics import (
    EvalReport,
    GramDistanceResult,
    bone_length_loss,
    gram_distance,
    mpjpe,
    pairwise_gram_matrix,
    skeleton_integrity_loss,
    smoothness,
    zero_velocity_baseline,
)
from .network import AdamState, MlpSpec, ParamSet, adam_step, init_adam, init_params
from .gan import (
    LossBreakdown,
    TrainConfig,
    TrainState,
    critic_loss,
    load_checkpoint,
    predict,
    predictor_loss,
    prepare_reference,
    save_checkpoint,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
