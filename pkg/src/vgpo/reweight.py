"""Dual-grained advantage re-weighting factors.

Two zero-centered factors come out of the compensated weights. Within one
trajectory, psi ranks tokens against each other; across the group, phi ranks
whole trajectories by their summed weight. Both are built the same way:
min-max normalize, then subtract the mean, so each factor lives strictly
inside (-1, 1) and multiplying an advantage by (1 + factor) can never flip
its sign.

The eps in the min-max denominator makes the degenerate case total: when all
inputs are equal the normalized values are all exactly 0, hence the factor is
all zeros rather than NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInput, Violation
from .model import EPS_SMOOTH


@dataclass(frozen=True)
class IntraFactors:
    """Min-max normalized weights and the centered per-token factor."""

    w_hat: np.ndarray  # (T,)
    psi: np.ndarray  # (T,), sums to 0 up to rounding


@dataclass(frozen=True)
class InterFactors:
    """Raw and min-max normalized trajectory scores with the centered factor."""

    s: np.ndarray  # (G,)
    s_hat: np.ndarray  # (G,)
    phi: np.ndarray  # (G,), sums to 0 up to rounding


def _minmax_centered(values: np.ndarray, eps: float):
    lo = values.min()
    hi = values.max()
    normed = (values - lo) / (hi - lo + eps)
    return normed, normed - normed.mean()


def intra_factors(weights, eps: float = EPS_SMOOTH) -> IntraFactors:
    """Token-level factor for one trajectory's compensated weights."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] == 0:
        raise InvalidInput(
            Violation("EmptyTrajectory", "weights", "need at least one weight")
        )
    w_hat, psi = _minmax_centered(w, eps)
    return IntraFactors(w_hat=w_hat, psi=psi)


def trajectory_score(weights) -> float:
    """Trajectory-level score: the plain sum of compensated weights.

    This sum splits into the raw focus mass plus the gated bonus mass, which
    is what makes the score readable in diagnostics: a score above the
    ungated sum means the trajectory kept focus where the gate rewards it.
    """
    w = np.asarray(weights, dtype=np.float64)
    return float(w.sum())


def inter_factors(scores, eps: float = EPS_SMOOTH) -> InterFactors:
    """Trajectory-level factor over the group's scores."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] == 0:
        raise InvalidInput(
            Violation("EmptyGroup", "scores", "need at least one trajectory score")
        )
    s_hat, phi = _minmax_centered(s, eps)
    return InterFactors(s=s, s_hat=s_hat, phi=phi)


def shape_advantages(
    base_adv,
    psi_per_traj: Sequence[np.ndarray],
    phi,
    enable_intra: bool = True,
    enable_inter: bool = True,
) -> tuple:
    """Broadcast group advantages onto tokens through both factors.

    shaped[i][t] = base_adv[i] * (1 + psi[i][t]) * (1 + phi[i]). A disabled
    factor is treated as exactly zero, so switching both off reproduces the
    unshaped baseline bit for bit.

    Returns a tuple of per-trajectory arrays, one per input trajectory.
    """
    base = np.asarray(base_adv, dtype=np.float64)
    phi_arr = np.asarray(phi, dtype=np.float64)
    if base.shape != phi_arr.shape or len(psi_per_traj) != base.shape[0]:
        raise InvalidInput(
            Violation(
                "LengthMismatch",
                "base_adv",
                f"got {base.shape[0]} advantages, {len(psi_per_traj)} psi "
                f"series, {phi_arr.shape[0]} phi entries",
            )
        )
    shaped = []
    for i in range(base.shape[0]):
        psi = np.asarray(psi_per_traj[i], dtype=np.float64)
        intra = (1.0 + psi) if enable_intra else np.ones_like(psi)
        inter = (1.0 + phi_arr[i]) if enable_inter else 1.0
        shaped.append(base[i] * intra * inter)
    return tuple(shaped)
