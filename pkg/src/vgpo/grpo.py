"""Group-relative baseline and the clipped surrogate objective.

Advantages are rewards standardized within their group; no critic, no KL
term. The surrogate is the usual clipped importance-weighted objective with
asymmetric clip offsets (clip-higher), and the per-token gradient with
respect to the new log-probability is reported analytically: r * A on the
unclipped branch and exactly 0 wherever the clip constant is the active
branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidInput, Violation

AGG_MODES = ("trajectory-mean", "token-mean")


@dataclass(frozen=True)
class ClipConfig:
    """Clip offsets and the aggregation of per-token terms.

    trajectory-mean averages tokens within each trajectory first and then
    averages trajectories (every trajectory counts the same regardless of
    length); token-mean averages over all tokens pooled together.
    """

    clip_low: float = 0.2
    clip_high: float = 0.28
    loss_agg: str = "trajectory-mean"

    def __post_init__(self):
        if not self.clip_low < 1.0:
            raise ConfigError(f"clip_low must be < 1, got {self.clip_low}")
        if not self.clip_high > 0.0:
            raise ConfigError(f"clip_high must be > 0, got {self.clip_high}")
        if self.loss_agg not in AGG_MODES:
            raise ConfigError(
                f"loss_agg must be one of {AGG_MODES}, got {self.loss_agg!r}"
            )


@dataclass(frozen=True)
class SurrogateResult:
    """Objective value plus per-token analytic gradient and clip mask.

    clipped_mask marks the tokens that contribute no gradient: either the
    clip constant won the min, or the token's advantage is 0. The mask and
    the gradient are therefore consistent by construction, mask[t] == 1
    exactly where grad_logp[t] == 0.
    """

    objective: float
    grad_logp: tuple  # per trajectory, (T_i,)
    clipped_mask: tuple  # per trajectory, (T_i,) ints in {0, 1}


def group_advantages(rewards, std_mode: str = "sample"):
    """Standardize rewards within one group.

    Args:
        rewards: length G sequence of scalar rewards.
        std_mode: "sample" divides by the Bessel-corrected standard
            deviation, "population" by the biased one.

    Returns:
        (advantages, degenerate): advantages is a (G,) array; degenerate is
        True when every reward is identical (including G = 1), in which case
        the advantages are all exactly zero instead of a 0/0.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.shape[0] == 0:
        raise InvalidInput(
            Violation("EmptyGroup", "rewards", "need at least one reward")
        )
    if std_mode not in ("sample", "population"):
        raise ConfigError(f"std_mode must be sample or population, got {std_mode!r}")
    # exact equality, not a tolerance: rounding in the mean of equal values
    # must not manufacture O(1) advantages out of a zero-information group
    if r.shape[0] == 1 or bool(np.all(r == r[0])):
        return np.zeros_like(r), True
    ddof = 1 if std_mode == "sample" else 0
    std = float(r.std(ddof=ddof))
    if std == 0.0:
        # unequal rewards whose squared spread underflows to zero variance:
        # no usable contrast either, and anything but zeros would be inf
        return np.zeros_like(r), True
    return (r - r.mean()) / std, False


def importance_ratios(logp_new, logp_old) -> np.ndarray:
    """Per-token probability ratios exp(logp_new - logp_old)."""
    if logp_new is None or logp_old is None:
        raise InvalidInput(
            Violation(
                "MissingLogProbs",
                "logp_old" if logp_old is None else "logp_new",
                "ratios need both old and new per-token log-probabilities",
            )
        )
    new = np.asarray(logp_new, dtype=np.float64)
    old = np.asarray(logp_old, dtype=np.float64)
    if new.shape != old.shape or new.ndim != 1:
        raise InvalidInput(
            Violation(
                "LengthMismatch",
                "logp_new",
                f"shapes {new.shape} and {old.shape} do not align",
            )
        )
    return np.exp(new - old)


def clipped_surrogate(
    ratios: Sequence[np.ndarray],
    advantages: Sequence[np.ndarray],
    cfg: Optional[ClipConfig] = None,
) -> SurrogateResult:
    """Clipped surrogate over one group of trajectories.

    Args:
        ratios: per-trajectory arrays of importance ratios.
        advantages: per-trajectory arrays of per-token advantages (a constant
            group advantage is passed pre-broadcast).
        cfg: clip offsets and aggregation mode.

    Returns:
        SurrogateResult whose grad_logp entries are the exact derivatives of
        the aggregated objective with respect to each token's logp_new
        (aggregation weights included).
    """
    cfg = cfg or ClipConfig()
    if len(ratios) != len(advantages) or len(ratios) == 0:
        raise InvalidInput(
            Violation(
                "LengthMismatch",
                "ratios",
                f"got {len(ratios)} ratio series for {len(advantages)} "
                "advantage series",
            )
        )
    n_traj = len(ratios)
    total_tokens = sum(np.asarray(r).shape[0] for r in ratios)
    lo = 1.0 - cfg.clip_low
    hi = 1.0 + cfg.clip_high

    objective = 0.0
    grads = []
    masks = []
    for r_seq, a_seq in zip(ratios, advantages):
        r = np.asarray(r_seq, dtype=np.float64)
        a = np.asarray(a_seq, dtype=np.float64)
        if r.shape != a.shape or r.ndim != 1 or r.shape[0] == 0:
            raise InvalidInput(
                Violation(
                    "LengthMismatch",
                    "advantages",
                    f"ratio shape {r.shape} vs advantage shape {a.shape}",
                )
            )
        unclipped = r * a
        clipped = np.clip(r, lo, hi) * a
        term = np.minimum(unclipped, clipped)
        if cfg.loss_agg == "trajectory-mean":
            weight = 1.0 / (n_traj * r.shape[0])
        else:
            weight = 1.0 / total_tokens
        objective += weight * float(term.sum())
        # ties go to the unclipped branch, matching minimum() picking its
        # first argument; the gradient there is r * a, not 0
        grad_core = np.where(clipped < unclipped, 0.0, unclipped)
        grads.append(weight * grad_core)
        masks.append((grad_core == 0.0).astype(np.int64))
    return SurrogateResult(
        objective=objective, grad_logp=tuple(grads), clipped_mask=tuple(masks)
    )
