"""Config validation, containers, and the non-throwing validators."""

import numpy as np
import pytest

from vgpo import (
    ConfigError,
    RolloutGroup,
    ShapingConfig,
    Trajectory,
    Violation,
    VisualContext,
    validate_context,
    validate_group,
    validate_trajectory,
)


def test_config_defaults():
    cfg = ShapingConfig()
    assert cfg.beta == 0.3
    assert cfg.gamma == 0.5
    assert cfg.kappa == 0.2
    assert cfg.schedule == "linear"
    assert cfg.power == 2
    assert cfg.span == "late"
    assert cfg.epsilon_smooth == 1e-8
    assert cfg.clip_low == 0.2
    assert cfg.clip_high == 0.28
    assert cfg.std_mode == "sample"
    assert cfg.enable_intra and cfg.enable_inter


@pytest.mark.parametrize(
    "kwargs",
    [
        {"beta": -1.0},
        {"gamma": -0.1},
        {"gamma": 1.5},
        {"kappa": 0.0},
        {"kappa": 1.1},
        {"schedule": "cosine"},
        {"power": 3},
        {"power": True},
        {"span": "middle"},
        {"epsilon_smooth": 0.0},
        {"clip_low": 1.0},
        {"clip_high": 0.0},
        {"std_mode": "robust"},
    ],
)
def test_config_rejects_out_of_range(kwargs):
    with pytest.raises(ConfigError):
        ShapingConfig(**kwargs)


def test_config_accepts_documented_edges():
    ShapingConfig(beta=0.0, gamma=0.0, kappa=1.0)
    ShapingConfig(gamma=1.0, schedule="exponential", power=1)
    ShapingConfig(schedule="exponential", power=2, span="full")


def test_violation_str():
    v = Violation("DimensionMismatch", "hidden_states", "expected width 4")
    assert str(v) == "DimensionMismatch at hidden_states: expected width 4"


def test_trajectory_arrays_are_read_only():
    traj = Trajectory(hidden_states=[[1.0, 2.0]], reward=1.0)
    with pytest.raises(ValueError):
        traj.hidden_states[0, 0] = 5.0


def test_context_from_prototype():
    ctx = VisualContext.from_prototype([1.0, 2.0])
    assert ctx.image_states is None
    assert ctx.hidden_dim() == 2


def test_context_from_image_states_pools_eagerly():
    ctx = VisualContext.from_image_states([[2.0, 0.0], [0.0, 4.0]], [0.75, 0.25])
    assert np.allclose(ctx.prototype, [1.5, 1.0], atol=1e-12)
    ctx = VisualContext.from_image_states([[2.0, 0.0], [0.0, 4.0]])
    assert np.allclose(ctx.prototype, [1.0, 2.0], atol=1e-15)
    assert ctx.hidden_dim() == 2


def test_validate_trajectory_violations():
    assert validate_trajectory(Trajectory([[1.0, 2.0]], 1.0), 2) is None
    v = validate_trajectory(Trajectory(np.zeros((2,)), 1.0), 2)
    assert v.code == "DimensionMismatch"
    v = validate_trajectory(Trajectory(np.zeros((0, 2)), 1.0), 2)
    assert v.code == "EmptyTrajectory"
    v = validate_trajectory(Trajectory(np.zeros((2, 3)), 1.0), 2)
    assert v.code == "DimensionMismatch"
    v = validate_trajectory(Trajectory(np.zeros((2, 2)), 1.0, logp_old=[0.1]), 2)
    assert v.code == "LengthMismatch" and v.field == "logp_old"
    v = validate_trajectory(
        Trajectory(np.zeros((2, 2)), 1.0, attn_split=np.zeros((2, 2))), 2
    )
    assert v.code == "LengthMismatch" and v.field == "attn_split"


def test_validate_context_violations():
    assert validate_context(VisualContext.from_prototype([1.0, 2.0])) is None
    v = validate_context(VisualContext())
    assert v.code == "MissingField"
    v = validate_context(VisualContext(image_states=np.zeros((0, 3))))
    assert v.code == "EmptyImageStates"
    v = validate_context(
        VisualContext(image_states=np.ones((2, 3)), pooling_weights=[0.4, 0.4])
    )
    assert v.code == "BadPoolingWeights"
    # stored prototype must match what pooling would produce
    v = validate_context(
        VisualContext(image_states=np.ones((2, 3)), prototype=np.zeros(3))
    )
    assert v.code == "PrototypeMismatch"
    assert (
        validate_context(
            VisualContext(image_states=np.ones((2, 3)), prototype=np.ones(3))
        )
        is None
    )


def test_validate_group_prefixes_trajectory_field():
    ctx = VisualContext.from_prototype([1.0, 0.0])
    good = Trajectory([[1.0, 2.0]], 1.0)
    bad = Trajectory([[1.0, 2.0, 3.0]], 0.0)
    assert validate_group(RolloutGroup("g", ctx, (good,))) is None
    v = validate_group(RolloutGroup("g", ctx, ()))
    assert v.code == "EmptyGroup"
    v = validate_group(RolloutGroup("g", ctx, (good, bad)))
    assert v.code == "DimensionMismatch"
    assert v.field.startswith("trajectories[1].")


def test_validation_is_repeatable_and_non_mutating():
    ctx = VisualContext.from_image_states(np.arange(6.0).reshape(2, 3))
    traj = Trajectory(np.ones((2, 3)), 1.0)
    group = RolloutGroup("g", ctx, (traj,))
    before = traj.hidden_states.copy()
    assert validate_group(group) is None
    assert validate_group(group) is None
    assert np.array_equal(traj.hidden_states, before)


def test_group_len_and_trajectory_len():
    ctx = VisualContext.from_prototype([1.0])
    group = RolloutGroup("g", ctx, (Trajectory([[1.0], [2.0]], 0.0),))
    assert len(group) == 1
    assert len(group.trajectories[0]) == 2
