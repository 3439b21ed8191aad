"""End-to-end shaping of one rollout group.

Composes focus scoring, late-position compensation, both re-weighting
factors and the group-relative baseline into the shaped per-token
advantages. This is the single entry point the command line, the training
loop and any array-level wrapper all go through, so their numbers can only
agree or disagree together.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .compensation import compensated_series
from .errors import InvalidInput
from .focus import focus_series, pool_prototype
from .grpo import group_advantages
from .model import RolloutGroup, ShapedAdvantages, ShapingConfig, validate_group
from .reweight import inter_factors, intra_factors, shape_advantages, trajectory_score


def resolve_prototype(group: RolloutGroup) -> np.ndarray:
    """The group's prototype, pooling it from raw states when not stored."""
    ctx = group.context
    if ctx.prototype is not None:
        return np.asarray(ctx.prototype, dtype=np.float64)
    return pool_prototype(ctx.image_states, ctx.pooling_weights)


def _constant_focus(rho_per_traj) -> bool:
    # bitwise equality on purpose: this detects the degenerate "no contrast
    # anywhere" case, not merely similar scores
    first = rho_per_traj[0][0]
    return all(bool(np.all(rho == first)) for rho in rho_per_traj)


def shape_group(
    group: RolloutGroup, cfg: Optional[ShapingConfig] = None
) -> ShapedAdvantages:
    """Shape one group's advantages.

    Args:
        group: validated rollout group (this function re-validates and raises
            InvalidInput on the first violation).
        cfg: shaping knobs; defaults apply when omitted.

    Returns:
        ShapedAdvantages holding every intermediate series plus the shaped
        per-token advantages.

    A group whose focus score is one and the same constant across all tokens
    of all trajectories carries no ranking information, so both factors are
    emitted as exact zeros there. Without that rule the tie-passing gates
    would compensate a flat series into a position ramp and manufacture
    shaping signal out of nothing.
    """
    cfg = cfg or ShapingConfig()
    bad = validate_group(group)
    if bad is not None:
        raise InvalidInput(bad)

    mu = resolve_prototype(group)
    eps = cfg.epsilon_smooth

    rho_per_traj = []
    gates_per_traj = []
    weights_per_traj = []
    for traj in group.trajectories:
        rho = focus_series(traj.hidden_states, mu, eps).rho
        comp = compensated_series(
            rho, cfg.beta, cfg.gamma, cfg.kappa, cfg.schedule, cfg.power, cfg.span
        )
        rho_per_traj.append(rho)
        gates_per_traj.append(comp.gate)
        weights_per_traj.append(comp.weight)

    scores = np.array([trajectory_score(w) for w in weights_per_traj])
    neutral = _constant_focus(rho_per_traj)

    if neutral or not cfg.enable_intra:
        psi_per_traj = [np.zeros_like(r) for r in rho_per_traj]
    else:
        psi_per_traj = [intra_factors(w, eps).psi for w in weights_per_traj]
    if neutral or not cfg.enable_inter:
        phi = np.zeros_like(scores)
    else:
        phi = inter_factors(scores, eps).phi

    rewards = [traj.reward for traj in group.trajectories]
    base_adv, degenerate = group_advantages(rewards, cfg.std_mode)
    shaped = shape_advantages(base_adv, psi_per_traj, phi)

    return ShapedAdvantages(
        rho=tuple(rho_per_traj),
        weight=tuple(weights_per_traj),
        gate=tuple(gates_per_traj),
        psi=tuple(psi_per_traj),
        traj_score=scores,
        phi=phi,
        base_adv=base_adv,
        shaped_adv=shaped,
        degenerate_group=degenerate,
    )
