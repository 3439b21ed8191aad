"""Visual focus scoring.

Every generated token is scored by how strongly its hidden state still points
at the pooled visual prototype. The score is the cosine between the two
vectors, remapped onto [0, 1] so that 0.5 reads as "no visual signal either
way", 1 as fully aligned and 0 as fully opposed.

The cosine denominator is floored at eps rather than shifted by it: with an
additive eps the score of a pair (c * h, c * mu) drifts with c, and that
drift gets amplified by the min-max normalization downstream. Flooring keeps
the score exactly invariant under positive rescaling of both arguments while
still mapping zero vectors to a neutral 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, Violation
from .model import EPS_SMOOTH


@dataclass(frozen=True)
class FocusSeries:
    """Per-token cosine and focus score for one trajectory."""

    cosine: np.ndarray  # (T,) values in [-1, 1]
    rho: np.ndarray  # (T,) values in [0, 1], rho = (cosine + 1) / 2


def pool_prototype(image_states, pooling_weights=None) -> np.ndarray:
    """Pool per-image-token states into a single visual prototype.

    Args:
        image_states: array of shape (n_tokens, dim), one row per image token.
        pooling_weights: optional length n_tokens convex weights (non-negative,
            summing to 1 within 1e-9). Defaults to uniform mean pooling.

    Returns:
        The pooled prototype, shape (dim,), as float64.
    """
    states = np.asarray(image_states, dtype=np.float64)
    if states.ndim != 2:
        raise InvalidInput(
            Violation(
                "DimensionMismatch",
                "image_states",
                f"expected a (n, dim) array, got {states.ndim} axes",
            )
        )
    if states.shape[0] == 0:
        raise InvalidInput(
            Violation("EmptyImageStates", "image_states", "no image token states")
        )
    if pooling_weights is None:
        return states.mean(axis=0)
    weights = np.asarray(pooling_weights, dtype=np.float64)
    if weights.shape != (states.shape[0],):
        raise InvalidInput(
            Violation(
                "BadPoolingWeights",
                "pooling_weights",
                f"expected {states.shape[0]} entries, got {weights.shape}",
            )
        )
    if np.any(weights < 0.0):
        raise InvalidInput(
            Violation(
                "BadPoolingWeights", "pooling_weights", "weights must be non-negative"
            )
        )
    total = float(weights.sum())
    if abs(total - 1.0) > 1e-9:
        raise InvalidInput(
            Violation(
                "BadPoolingWeights",
                "pooling_weights",
                f"weights sum to {total!r}, expected 1",
            )
        )
    return weights @ states


def cosine_sim(h, mu, eps: float = EPS_SMOOTH) -> float:
    """Cosine similarity between a hidden state and the prototype.

    The norm product in the denominator is floored at eps. Zero vectors have
    a zero numerator, so they come out at exactly 0. The result is clipped
    into [-1, 1] to absorb last-ulp rounding.
    """
    hv = np.asarray(h, dtype=np.float64)
    mv = np.asarray(mu, dtype=np.float64)
    if hv.shape != mv.shape or hv.ndim != 1:
        raise InvalidInput(
            Violation(
                "DimensionMismatch",
                "hidden_states",
                f"cannot compare shapes {hv.shape} and {mv.shape}",
            )
        )
    # einsum, not @: BLAS picks different kernels for different shapes, so
    # matmul dots are not bit-reproducible between a lone vector and a row
    # of a matrix. einsum contractions are, which keeps this function and
    # focus_series in exact agreement.
    num = float(np.einsum("d,d->", hv, mv))
    den = float(
        np.sqrt(np.einsum("d,d->", hv, hv)) * np.sqrt(np.einsum("d,d->", mv, mv))
    )
    return float(np.clip(num / max(den, eps), -1.0, 1.0))


def focus_series(hidden_states, prototype, eps: float = EPS_SMOOTH) -> FocusSeries:
    """Score every token of one trajectory against the prototype.

    Args:
        hidden_states: (T, dim) array of per-token hidden states.
        prototype: (dim,) pooled visual prototype.
        eps: denominator floor, must be > 0.

    Returns:
        A FocusSeries with per-token cosine in [-1, 1] and rho in [0, 1].
    """
    states = np.asarray(hidden_states, dtype=np.float64)
    mu = np.asarray(prototype, dtype=np.float64)
    if states.ndim != 2 or mu.ndim != 1 or states.shape[1] != mu.shape[0]:
        raise InvalidInput(
            Violation(
                "DimensionMismatch",
                "hidden_states",
                f"cannot score shape {states.shape} against prototype "
                f"shape {mu.shape}",
            )
        )
    # einsum keeps per-row dots bit-identical no matter how many rows the
    # trajectory has (see cosine_sim); identical tokens then score identically
    # across trajectories of different lengths, which the constant-focus
    # detection downstream relies on
    num = np.einsum("td,d->t", states, mu)
    den = np.sqrt(np.einsum("td,td->t", states, states)) * np.sqrt(
        np.einsum("d,d->", mu, mu)
    )
    # zero rows (or a zero prototype) have num == 0, so the floor alone
    # already maps them to cosine 0 without a separate branch
    cos = np.clip(num / np.maximum(den, eps), -1.0, 1.0)
    rho = 0.5 * (cos + 1.0)
    return FocusSeries(cosine=cos, rho=rho)
