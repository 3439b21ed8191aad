"""Core data model: rollout groups, shaping configuration, shaped outputs.

All containers are frozen dataclasses holding read-only float64 numpy arrays.
Hidden states are unitless activations; rewards and log-probabilities are
plain 64-bit reals. Token positions are 1-based everywhere in this package:
the first generated token is t = 1 and the last is t = T.

Validation is total and non-throwing: `validate_trajectory` / `validate_group`
return the first `Violation` found, or None when the record passes. They never
mutate their inputs, so validating twice is the same as validating once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, Violation

# Smoothing floor used by cosine denominators and min-max normalizers.
EPS_SMOOTH = 1e-8

SCHEDULES = ("linear", "exponential", "step")
SPANS = ("late", "full")
STD_MODES = ("sample", "population")

# Tolerance for "these weights sum to one" style checks on ingested data.
_SUM_TOL = 1e-9


def _frozen_array(x, dtype=np.float64) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ShapingConfig:
    """Knobs for the focus -> compensation -> re-weighting pipeline.

    beta scales the late-position compensation bonus, gamma locates the tail
    window (tokens with t > (1 - gamma) * T), and kappa picks the top
    kappa-fraction of tail focus scores that open the gate. `span="full"`
    widens the gate window to the whole sequence, which exists for ablations.
    `power` only matters for the exponential schedule.

    clip_low / clip_high are the asymmetric ratio clip offsets used by the
    training loop (clip-higher style, so the defaults differ). std_mode picks
    the reward-standardization denominator. The intra / inter toggles turn
    either re-weighting factor into an exact no-op.
    """

    beta: float = 0.3
    gamma: float = 0.5
    kappa: float = 0.2
    schedule: str = "linear"
    power: int = 2
    span: str = "late"
    epsilon_smooth: float = EPS_SMOOTH
    clip_low: float = 0.2
    clip_high: float = 0.28
    std_mode: str = "sample"
    enable_intra: bool = True
    enable_inter: bool = True

    def __post_init__(self):
        if not self.beta >= 0.0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 < self.kappa <= 1.0:
            raise ConfigError(f"kappa must be in (0, 1], got {self.kappa}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(
                f"schedule must be one of {SCHEDULES}, got {self.schedule!r}"
            )
        if self.power not in (1, 2) or isinstance(self.power, bool):
            raise ConfigError(f"power must be 1 or 2, got {self.power!r}")
        if self.span not in SPANS:
            raise ConfigError(f"span must be one of {SPANS}, got {self.span!r}")
        if not self.epsilon_smooth > 0.0:
            raise ConfigError(
                f"epsilon_smooth must be > 0, got {self.epsilon_smooth}"
            )
        if not self.clip_low < 1.0:
            raise ConfigError(f"clip_low must be < 1, got {self.clip_low}")
        if not self.clip_high > 0.0:
            raise ConfigError(f"clip_high must be > 0, got {self.clip_high}")
        if self.std_mode not in STD_MODES:
            raise ConfigError(
                f"std_mode must be one of {STD_MODES}, got {self.std_mode!r}"
            )


@dataclass(frozen=True)
class VisualContext:
    """The visual side of one prompt.

    Either the raw per-image-token states are held (with optional pooling
    weights) or only the pooled prototype is. Records arriving over the wire
    carry exactly one of the two; contexts built in memory may carry both,
    in which case the prototype must match what pooling would produce.
    """

    image_states: Optional[np.ndarray] = None  # (n_image_tokens, dim)
    pooling_weights: Optional[np.ndarray] = None  # (n_image_tokens,)
    prototype: Optional[np.ndarray] = None  # (dim,)

    def __post_init__(self):
        if self.image_states is not None:
            object.__setattr__(self, "image_states", _frozen_array(self.image_states))
        if self.pooling_weights is not None:
            object.__setattr__(
                self, "pooling_weights", _frozen_array(self.pooling_weights)
            )
        if self.prototype is not None:
            object.__setattr__(self, "prototype", _frozen_array(self.prototype))

    @classmethod
    def from_prototype(cls, prototype) -> "VisualContext":
        return cls(prototype=prototype)

    @classmethod
    def from_image_states(cls, image_states, pooling_weights=None) -> "VisualContext":
        """Build a context from raw states, pooling the prototype eagerly."""
        states = np.asarray(image_states, dtype=np.float64)
        if pooling_weights is None:
            pooled = states.mean(axis=0)
        else:
            pooled = np.asarray(pooling_weights, dtype=np.float64) @ states
        return cls(
            image_states=states,
            pooling_weights=pooling_weights,
            prototype=pooled,
        )

    def hidden_dim(self) -> Optional[int]:
        if self.prototype is not None:
            return int(self.prototype.shape[-1])
        if self.image_states is not None and self.image_states.ndim == 2:
            return int(self.image_states.shape[1])
        return None


@dataclass(frozen=True)
class Trajectory:
    """One sampled response: per-token hidden states plus its scalar reward.

    logp_old / logp_new are optional because shaping alone never needs them;
    only the surrogate objective does. attn_split, when present, holds one
    (image, query, generated) attention-mass triple per token.
    """

    hidden_states: np.ndarray  # (T, dim)
    reward: float
    logp_old: Optional[np.ndarray] = None  # (T,)
    logp_new: Optional[np.ndarray] = None  # (T,)
    attn_split: Optional[np.ndarray] = None  # (T, 3)

    def __post_init__(self):
        object.__setattr__(self, "hidden_states", _frozen_array(self.hidden_states))
        object.__setattr__(self, "reward", float(self.reward))
        for name in ("logp_old", "logp_new", "attn_split"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, _frozen_array(val))

    def __len__(self) -> int:
        return int(self.hidden_states.shape[0])


@dataclass(frozen=True)
class RolloutGroup:
    """All responses sampled for one prompt, sharing one visual context."""

    group_id: str
    context: VisualContext
    trajectories: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

    def __len__(self) -> int:
        return len(self.trajectories)


@dataclass(frozen=True)
class ShapedAdvantages:
    """Everything the shaping pipeline produced for one group.

    Per-token fields are tuples of one array per trajectory (lengths may
    differ); per-trajectory fields are flat arrays of length G. psi and phi
    are the values actually applied: when a toggle is off, or when the group
    carries no focus contrast at all, they are stored as zeros so that
    shaped_adv == base_adv * (1 + psi) * (1 + phi) holds on the stored data.
    """

    rho: tuple  # per trajectory, (T_i,)
    weight: tuple  # per trajectory, (T_i,)
    gate: tuple  # per trajectory, (T_i,) ints in {0, 1}
    psi: tuple  # per trajectory, (T_i,)
    traj_score: np.ndarray  # (G,)
    phi: np.ndarray  # (G,)
    base_adv: np.ndarray  # (G,)
    shaped_adv: tuple  # per trajectory, (T_i,)
    degenerate_group: bool

    def __len__(self) -> int:
        return int(self.base_adv.shape[0])


# ---------------------------------------------------------------------------
# validation


def validate_trajectory(traj: Trajectory, hidden_dim: int) -> Optional[Violation]:
    """Check one trajectory against the group's hidden dimension.

    Returns the first violation found, None when the trajectory passes.
    """
    h = traj.hidden_states
    if h.ndim != 2:
        return Violation(
            "DimensionMismatch",
            "hidden_states",
            f"expected a (T, dim) array, got {h.ndim} axes",
        )
    if h.shape[0] == 0:
        return Violation(
            "EmptyTrajectory", "hidden_states", "trajectory has no tokens"
        )
    if h.shape[1] != hidden_dim:
        return Violation(
            "DimensionMismatch",
            "hidden_states",
            f"expected width {hidden_dim}, got {h.shape[1]}",
        )
    seq_len = h.shape[0]
    for name in ("logp_old", "logp_new"):
        logp = getattr(traj, name)
        if logp is not None and logp.shape != (seq_len,):
            return Violation(
                "LengthMismatch",
                name,
                f"expected {seq_len} entries, got {logp.shape}",
            )
    if traj.attn_split is not None and traj.attn_split.shape != (seq_len, 3):
        return Violation(
            "LengthMismatch",
            "attn_split",
            f"expected shape ({seq_len}, 3), got {traj.attn_split.shape}",
        )
    return None


def validate_context(
    ctx: VisualContext, *, weight_sum_tol: float = _SUM_TOL
) -> Optional[Violation]:
    """Check internal consistency of one visual context.

    ``weight_sum_tol`` widens the unit-sum check on pooling weights; the
    trace reader passes a looser bound because the wire stores weights at
    32-bit precision and quantization alone can move the sum off 1 by more
    than the in-memory tolerance allows.
    """
    if ctx.prototype is None and ctx.image_states is None:
        return Violation(
            "MissingField",
            "context",
            "need image_states or a prototype, found neither",
        )
    if ctx.prototype is not None and ctx.prototype.ndim != 1:
        return Violation(
            "DimensionMismatch",
            "prototype",
            f"expected a flat vector, got {ctx.prototype.ndim} axes",
        )
    if ctx.image_states is not None:
        states = ctx.image_states
        if states.ndim != 2:
            return Violation(
                "DimensionMismatch",
                "image_states",
                f"expected a (n, dim) array, got {states.ndim} axes",
            )
        if states.shape[0] == 0:
            return Violation(
                "EmptyImageStates", "image_states", "no image token states"
            )
        if ctx.prototype is not None and states.shape[1] != ctx.prototype.shape[0]:
            return Violation(
                "DimensionMismatch",
                "image_states",
                f"width {states.shape[1]} does not match prototype "
                f"width {ctx.prototype.shape[0]}",
            )
        weights = ctx.pooling_weights
        if weights is not None:
            if weights.shape != (states.shape[0],):
                return Violation(
                    "BadPoolingWeights",
                    "pooling_weights",
                    f"expected {states.shape[0]} entries, got {weights.shape}",
                )
            if np.any(weights < 0.0):
                return Violation(
                    "BadPoolingWeights",
                    "pooling_weights",
                    "weights must be non-negative",
                )
            total = float(weights.sum())
            if abs(total - 1.0) > weight_sum_tol:
                return Violation(
                    "BadPoolingWeights",
                    "pooling_weights",
                    f"weights sum to {total!r}, expected 1",
                )
        if ctx.prototype is not None:
            # Independent recomputation: a stored prototype must agree with
            # what pooling the stored states would produce.
            if weights is None:
                pooled = states.mean(axis=0)
            else:
                pooled = weights @ states
            if float(np.max(np.abs(pooled - ctx.prototype))) > _SUM_TOL:
                return Violation(
                    "PrototypeMismatch",
                    "prototype",
                    "stored prototype disagrees with pooled image states",
                )
    elif ctx.pooling_weights is not None:
        return Violation(
            "BadPoolingWeights",
            "pooling_weights",
            "pooling weights present without image states",
        )
    return None


def validate_group(
    group: RolloutGroup, *, weight_sum_tol: float = _SUM_TOL
) -> Optional[Violation]:
    """Check a whole group: context first, then every trajectory in order."""
    bad = validate_context(group.context, weight_sum_tol=weight_sum_tol)
    if bad is not None:
        return bad
    if len(group.trajectories) == 0:
        return Violation("EmptyGroup", "trajectories", "group has no trajectories")
    dim = group.context.hidden_dim()
    for i, traj in enumerate(group.trajectories):
        bad = validate_trajectory(traj, dim)
        if bad is not None:
            return Violation(
                bad.code, f"trajectories[{i}].{bad.field}", bad.detail
            )
    return None
