"""Descriptive statistics over rollout groups.

Nothing in here feeds back into shaping; these are read-only views used to
inspect where attention mass sits, how focus evolves over a sequence, and
whether either lines up with reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidInput, Violation
from .focus import focus_series
from .model import RolloutGroup
from .pipeline import resolve_prototype

SELECTORS = ("rho", "image_attention")

_HIST_BINS = 10


@dataclass(frozen=True)
class AllocationResult:
    """Per-position attention fractions, with empty rows flagged."""

    fractions: np.ndarray  # (T, channels), rows sum to 1 or are all zero
    flagged: np.ndarray  # (T,) bools, True where the row had zero total mass


@dataclass(frozen=True)
class RatioReport:
    """Late/early ratio distribution, split by reward."""

    selector: str
    split_point: float
    entries: tuple  # of dicts: group_id, trajectory, reward, ratio
    high: dict
    low: dict
    bin_edges: tuple
    reward_correlation: Optional[float]

    def as_dict(self) -> dict:
        return {
            "selector": self.selector,
            "split_point": self.split_point,
            "entries": list(self.entries),
            "high": dict(self.high),
            "low": dict(self.low),
            "bin_edges": list(self.bin_edges),
            "reward_correlation": self.reward_correlation,
        }


def _check_finite(arr: np.ndarray, field: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(
            Violation("NonFiniteValue", field, "values must be finite")
        )


def attention_allocation(attn_split) -> AllocationResult:
    """Normalize attention masses into per-position fractions.

    Rows whose total mass is zero come back as all-zero fractions and are
    flagged rather than dropped, so positions stay aligned.
    """
    if attn_split is None:
        raise InvalidInput(
            Violation(
                "MissingAttentionSplit", "attn_split", "no attention masses present"
            )
        )
    arr = np.asarray(attn_split, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInput(
            Violation(
                "DimensionMismatch",
                "attn_split",
                f"expected a (positions, channels) matrix, got shape {arr.shape}",
            )
        )
    _check_finite(arr, "attn_split")
    if np.any(arr < 0):
        raise InvalidInput(
            Violation("NegativeMass", "attn_split", "attention mass cannot be negative")
        )
    totals = arr.sum(axis=1)
    empty = totals == 0.0
    fractions = arr / np.where(empty, 1.0, totals)[:, None]
    fractions[empty] = 0.0
    fractions.setflags(write=False)
    flagged = empty.copy()
    flagged.setflags(write=False)
    return AllocationResult(fractions=fractions, flagged=flagged)


def late_early_ratio(series, split_point: float = 0.5) -> Optional[float]:
    """Sum of the series after the split divided by the sum before it.

    Positions are 1-based; position t is early when t <= split_point * T.
    Returns None when the early mass is zero (the ratio is undefined, which
    callers must keep distinct from any numeric value).
    """
    if not 0.0 < split_point < 1.0:
        raise ConfigError(f"split_point must be in (0, 1), got {split_point}")
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInput(
            Violation("DimensionMismatch", "series", f"expected 1-D, got shape {arr.shape}")
        )
    if arr.size < 2:
        raise InvalidInput(
            Violation("ShortSequence", "series", "need at least 2 positions")
        )
    _check_finite(arr, "series")
    if np.any(arr < 0):
        raise InvalidInput(
            Violation("NegativeMass", "series", "mass values cannot be negative")
        )
    positions = np.arange(1, arr.size + 1)
    early = float(arr[positions <= split_point * arr.size].sum())
    late = float(arr[positions > split_point * arr.size].sum())
    if early == 0.0:
        return None
    return late / early


def pearson(x, y) -> float:
    """Plain centered-product correlation, clipped into [-1, 1]."""
    ax = np.asarray(x, dtype=np.float64)
    ay = np.asarray(y, dtype=np.float64)
    if ax.ndim != 1 or ay.ndim != 1:
        raise InvalidInput(
            Violation("DimensionMismatch", "x/y", "expected 1-D sequences")
        )
    if ax.size != ay.size:
        raise InvalidInput(
            Violation(
                "LengthMismatch", "x/y", f"lengths differ: {ax.size} vs {ay.size}"
            )
        )
    if ax.size < 2:
        raise InvalidInput(Violation("ShortSequence", "x/y", "need at least 2 points"))
    _check_finite(ax, "x")
    _check_finite(ay, "y")
    cx = ax - ax.mean()
    cy = ay - ay.mean()
    var_x = float((cx * cx).sum())
    var_y = float((cy * cy).sum())
    if var_x == 0.0 or var_y == 0.0:
        raise InvalidInput(
            Violation(
                "ConstantSequence", "x/y", "correlation undefined for a constant input"
            )
        )
    r = float((cx * cy).sum()) / math.sqrt(var_x * var_y)
    return float(min(1.0, max(-1.0, r)))


def _safe_pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    if len(x) < 2:
        return None
    try:
        return pearson(x, y)
    except InvalidInput:
        return None


def _partition_stats(entries: list, edges: np.ndarray) -> dict:
    values = [e["ratio"] for e in entries if e["ratio"] is not None]
    counts, _ = np.histogram(values, bins=edges) if values else (
        np.zeros(len(edges) - 1, dtype=np.int64),
        edges,
    )
    return {
        "count": len(entries),
        "defined": len(values),
        "undefined": len(entries) - len(values),
        "mean": float(np.mean(values)) if values else None,
        "median": float(np.median(values)) if values else None,
        "histogram": [int(c) for c in counts],
    }


def ratio_distribution(
    groups: Iterable[RolloutGroup],
    selector: str = "rho",
    split_point: float = 0.5,
) -> RatioReport:
    """Late/early ratios for every trajectory, partitioned by reward.

    Trajectories with reward >= 0.5 land in the high partition. Histograms
    for both partitions share one set of bin edges spanning all defined
    ratios, so the two distributions are directly comparable. Undefined
    ratios (zero early mass) are counted per partition, never dropped.
    """
    if selector not in SELECTORS:
        raise ConfigError(f"selector must be one of {SELECTORS}, got {selector!r}")
    entries = []
    missing = []
    for group in groups:
        prototype = resolve_prototype(group) if selector == "rho" else None
        for i, traj in enumerate(group.trajectories):
            if selector == "rho":
                series = focus_series(traj.hidden_states, prototype).rho
            elif traj.attn_split is None:
                missing.append(f"{group.group_id}[{i}]")
                continue
            else:
                series = attention_allocation(traj.attn_split).fractions[:, 0]
            # a single position cannot be split into early and late, so the
            # ratio is undefined for it; the report must still cover every
            # trajectory of a valid trace
            ratio = (
                late_early_ratio(series, split_point) if len(series) >= 2 else None
            )
            entries.append(
                {
                    "group_id": group.group_id,
                    "trajectory": i,
                    "reward": float(traj.reward),
                    "ratio": ratio,
                }
            )
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise InvalidInput(
            Violation(
                "MissingAttentionSplit",
                "attn_split",
                f"records lacking attention masses: {shown}",
            )
        )
    defined = [e["ratio"] for e in entries if e["ratio"] is not None]
    if defined:
        _, edges = np.histogram(defined, bins=_HIST_BINS)
    else:
        edges = np.linspace(0.0, 1.0, _HIST_BINS + 1)
    high = [e for e in entries if e["reward"] >= 0.5]
    low = [e for e in entries if e["reward"] < 0.5]
    paired = [(e["ratio"], e["reward"]) for e in entries if e["ratio"] is not None]
    correlation = _safe_pearson(
        [p[0] for p in paired], [p[1] for p in paired]
    )
    return RatioReport(
        selector=selector,
        split_point=split_point,
        entries=tuple(entries),
        high=_partition_stats(high, edges),
        low=_partition_stats(low, edges),
        bin_edges=tuple(float(e) for e in edges),
        reward_correlation=correlation,
    )
