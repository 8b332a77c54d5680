import numpy as np
import pytest

from motionsphere.motion import MotionSequence, SkeletonTopology, chain_topology


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def topo4():
    return chain_topology(4)


@pytest.fixture
def topo17():
    # star-ish skeleton: chain spine plus limbs off joints 1 and 2
    bones = [(i, i + 1) for i in range(4)]
    bones += [(1, 5), (5, 6), (1, 7), (7, 8)]
    bones += [(2, 9), (9, 10), (2, 11), (11, 12)]
    bones += [(0, 13), (13, 14), (0, 15), (15, 16)]
    return SkeletonTopology(joint_count=17, bones=tuple(bones), hip_index=0)


def random_sequence(rng, frames=10, joints=4, fps=25.0, label=None) -> MotionSequence:
    return MotionSequence(rng.normal(size=(frames, joints, 3)), fps=fps, label=label)


@pytest.fixture
def make_sequence():
    return random_sequence
