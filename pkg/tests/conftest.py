"""Shared fuzzing helpers for the test suite."""

import numpy as np
import pytest

from vgpo import RolloutGroup, ShapingConfig, Trajectory, VisualContext


def make_group(
    rng,
    group_id="g",
    n_traj=None,
    dim=None,
    seq_range=(1, 12),
    store="states",
    binary_rewards=True,
    min_norm=None,
    with_logps=False,
    with_attn=False,
):
    """One random rollout group.

    store: "states" keeps raw image states (sometimes weighted pooling),
    "prototype" stores the pooled vector directly.
    min_norm: if set, every hidden/image row is rescaled to a norm drawn
    from [min_norm, min_norm + 3] so norms stay well away from zero.
    """
    d = dim if dim is not None else int(rng.integers(2, 9))
    g = n_traj if n_traj is not None else int(rng.integers(2, 7))

    def rows(n):
        out = rng.normal(size=(n, d)) * 1.5
        if min_norm is not None:
            norms = np.linalg.norm(out, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            scale = rng.uniform(min_norm, min_norm + 3.0, size=(n, 1))
            out = out / norms * scale
        return out

    n_img = int(rng.integers(1, 6))
    states = rows(n_img)
    weights = None
    if store == "prototype":
        context = VisualContext.from_prototype(states.mean(axis=0))
    else:
        if rng.random() < 0.4:
            weights = rng.dirichlet(np.ones(n_img))
        context = VisualContext.from_image_states(states, weights)

    trajectories = []
    for _ in range(g):
        t_len = int(rng.integers(seq_range[0], seq_range[1] + 1))
        if binary_rewards:
            reward = float(rng.integers(0, 2))
        else:
            reward = float(rng.uniform(-2.0, 2.0))
        kwargs = {}
        if with_logps:
            lp_old = rng.normal(scale=0.3, size=t_len)
            kwargs["logp_old"] = lp_old
            kwargs["logp_new"] = lp_old + rng.normal(scale=0.2, size=t_len)
        if with_attn:
            raw = rng.uniform(0.05, 1.0, size=(t_len, 3))
            kwargs["attn_split"] = raw / raw.sum(axis=1, keepdims=True)
        trajectories.append(Trajectory(hidden_states=rows(t_len), reward=reward, **kwargs))

    return RolloutGroup(group_id=group_id, context=context, trajectories=tuple(trajectories))


def make_constant_focus_group(rng, group_id="const", n_traj=None, dim=None, zero=False):
    """Group where every hidden row is the bit-identical vector, so the
    focus series is exactly constant across all trajectories."""
    d = dim if dim is not None else int(rng.integers(2, 9))
    g = n_traj if n_traj is not None else int(rng.integers(2, 7))
    v = np.zeros(d) if zero else rng.normal(size=d) * 2.0
    states = rng.normal(size=(int(rng.integers(1, 4)), d))
    context = VisualContext.from_image_states(states)
    trajectories = []
    for _ in range(g):
        t_len = int(rng.integers(1, 10))
        trajectories.append(
            Trajectory(
                hidden_states=np.tile(v, (t_len, 1)),
                reward=float(rng.integers(0, 2)),
            )
        )
    return RolloutGroup(group_id=group_id, context=context, trajectories=tuple(trajectories))


def to_plain(group):
    """RolloutGroup -> plain dict for the naive reference implementation."""
    ctx = group.context
    out = {"trajectories": []}
    if ctx.prototype is not None and ctx.image_states is None:
        out["prototype"] = [float(x) for x in ctx.prototype]
    else:
        out["prototype"] = None
        out["image_states"] = [[float(x) for x in row] for row in ctx.image_states]
        if ctx.pooling_weights is not None:
            out["pooling_weights"] = [float(x) for x in ctx.pooling_weights]
    for traj in group.trajectories:
        out["trajectories"].append(
            {
                "hidden": [[float(x) for x in row] for row in traj.hidden_states],
                "reward": float(traj.reward),
            }
        )
    return out


def cfg_to_dict(cfg):
    return {
        "beta": cfg.beta,
        "gamma": cfg.gamma,
        "kappa": cfg.kappa,
        "schedule": cfg.schedule,
        "power": cfg.power,
        "span": cfg.span,
        "eps": cfg.epsilon_smooth,
        "std_mode": cfg.std_mode,
        "enable_intra": cfg.enable_intra,
        "enable_inter": cfg.enable_inter,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
