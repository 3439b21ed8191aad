"""Flat-buffer surface over the advantage shaper.

Trainers that hold rollouts as in-memory tensors pass one contiguous hidden
state buffer plus a lengths vector instead of serializing through trace
files. Float inputs must already be 32-bit; they are taken zero-copy when
contiguous and copied once when not. Nothing is retained between calls, so
concurrent callers are safe as long as each owns its buffers for the
duration of the call.

Only shaping is exposed. Diagnostics, the synthetic lab, and the trainer
stay behind the command line and trace files.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from vgpo import (
    InvalidInput,
    RolloutGroup,
    ShapingConfig,
    Trajectory,
    VisualContext,
    shape_group,
)

__version__ = "0.1.0"

__all__ = [
    "BindingError",
    "FlatGroupView",
    "ShapedArrays",
    "shape_from_arrays",
    "version",
]


class BindingError(ValueError):
    """A view or its buffers violate the input contract.

    Carries the same code / field / detail triple the core validators use,
    rendered identically, so a caller can match messages against command
    line failures.
    """

    def __init__(self, code: str, field: str, detail: str):
        super().__init__(f"{code} at {field}: {detail}")
        self.code = code
        self.field = field
        self.detail = detail


def _f32_buffer(value, name: str, ndim: int) -> Optional[np.ndarray]:
    if value is None:
        return None
    arr = np.asarray(value)
    # narrowing float64 here would silently drop precision; make the caller
    # hand over the dtype this surface is specified for
    if arr.dtype != np.float32:
        raise BindingError(
            "DtypeMismatch", name, f"expected float32, got {arr.dtype}"
        )
    if arr.ndim != ndim:
        raise BindingError(
            "DimensionMismatch", name, f"expected {ndim} axes, got {arr.ndim}"
        )
    return np.ascontiguousarray(arr)  # no copy when already contiguous


@dataclass(frozen=True)
class FlatGroupView:
    """One rollout group as flat row-major buffers.

    hidden stacks every trajectory's token states into a single
    (total_tokens, d) float32 buffer; lengths says how many rows belong to
    each trajectory, in order. Exactly one of image_states / prototype
    describes the visual context.
    """

    hidden: np.ndarray  # (total_tokens, d) float32
    lengths: np.ndarray  # (G,) ints
    rewards: np.ndarray  # (G,)
    image_states: Optional[np.ndarray] = None  # (N_v, d) float32
    prototype: Optional[np.ndarray] = None  # (d,) float32

    def __post_init__(self):
        object.__setattr__(self, "hidden", _f32_buffer(self.hidden, "hidden", 2))
        object.__setattr__(
            self, "image_states", _f32_buffer(self.image_states, "image_states", 2)
        )
        object.__setattr__(
            self, "prototype", _f32_buffer(self.prototype, "prototype", 1)
        )
        lengths = np.asarray(self.lengths)
        if lengths.ndim != 1 or not np.issubdtype(lengths.dtype, np.integer):
            raise BindingError(
                "DimensionMismatch", "lengths", "expected a flat integer vector"
            )
        object.__setattr__(self, "lengths", lengths.astype(np.int64, copy=False))
        rewards = np.asarray(self.rewards, dtype=np.float64)
        if rewards.ndim != 1:
            raise BindingError(
                "DimensionMismatch", "rewards", "expected a flat vector"
            )
        object.__setattr__(self, "rewards", rewards)


@dataclass(frozen=True)
class ShapedArrays:
    """Shaping output, flattened back into the caller's layout.

    Token-level buffers are (total_tokens,) in the same order as the hidden
    buffer; trajectory-level buffers are (G,). weight is populated only when
    the call asked for it.
    """

    rho: np.ndarray
    psi: np.ndarray
    shaped_adv: np.ndarray
    phi: np.ndarray
    base_adv: np.ndarray
    degenerate: bool
    weight: Optional[np.ndarray] = None


def version() -> str:
    return __version__


def _validate(view: FlatGroupView) -> None:
    if view.image_states is None and view.prototype is None:
        raise BindingError(
            "MissingField", "view", "need image_states or a prototype, found neither"
        )
    if view.image_states is not None and view.prototype is not None:
        raise BindingError(
            "ExtraField", "view", "exactly one of image_states / prototype must be present"
        )
    if view.lengths.shape[0] == 0:
        raise BindingError("EmptyGroup", "lengths", "group has no trajectories")
    if view.rewards.shape[0] != view.lengths.shape[0]:
        raise BindingError(
            "LengthMismatch",
            "rewards",
            f"expected {view.lengths.shape[0]} entries, got {view.rewards.shape[0]}",
        )
    bad = np.flatnonzero(view.lengths < 1)
    if bad.size:
        raise BindingError(
            "EmptyTrajectory",
            f"lengths[{int(bad[0])}]",
            "every trajectory needs at least one token",
        )
    total = int(view.lengths.sum())
    if total != view.hidden.shape[0]:
        raise BindingError(
            "LengthMismatch",
            "lengths",
            f"lengths sum to {total}, hidden buffer has {view.hidden.shape[0]} rows",
        )
    for name in ("image_states", "prototype"):
        other = getattr(view, name)
        if other is not None and np.shares_memory(view.hidden, other):
            raise BindingError(
                "OverlappingBuffers", name, "buffers must not share memory with hidden"
            )


def shape_from_arrays(
    view: FlatGroupView, *, with_weights: bool = False, **config
) -> ShapedArrays:
    """Run the shaping pipeline on flat buffers.

    Config keywords mirror ShapingConfig fields (beta, gamma, kappa,
    schedule, power, span, epsilon_smooth, std_mode, enable_intra,
    enable_inter). Out-of-range values raise the core ConfigError with the
    same message the command line prints.
    """
    try:
        cfg = ShapingConfig(**config)
    except TypeError:
        unknown = sorted(set(config) - set(ShapingConfig.__dataclass_fields__))
        raise BindingError(
            "UnknownKey", "config", f"unknown config keys {unknown}"
        ) from None
    _validate(view)

    if view.prototype is not None:
        context = VisualContext(prototype=view.prototype)
    else:
        context = VisualContext(image_states=view.image_states)
    offsets = np.concatenate([[0], np.cumsum(view.lengths)])
    trajectories = tuple(
        Trajectory(
            hidden_states=view.hidden[offsets[i] : offsets[i + 1]],
            reward=float(view.rewards[i]),
        )
        for i in range(view.lengths.shape[0])
    )
    group = RolloutGroup(group_id="flat", context=context, trajectories=trajectories)

    try:
        shaped = shape_group(group, cfg)
    except InvalidInput as exc:
        v = exc.violation
        raise BindingError(v.code, v.field, v.detail) from None

    return ShapedArrays(
        rho=np.concatenate(shaped.rho),
        psi=np.concatenate(shaped.psi),
        shaped_adv=np.concatenate(shaped.shaped_adv),
        phi=shaped.phi.copy(),
        base_adv=shaped.base_adv.copy(),
        degenerate=shaped.degenerate_group,
        weight=np.concatenate(shaped.weight) if with_weights else None,
    )
