"""Late-position compensation of focus scores.

Focus tends to fade over long generations, so tokens late in the sequence get
a position-dependent bonus, but only where the focus is still strong: a gate
opens for tokens that sit inside the tail window and whose score reaches the
top kappa-fraction of that window. Everything here treats token positions as
1-based and the window boundary as a literal real comparison, t > (1 - gamma)
* T, with no rounding of the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, UnknownSchedule


@dataclass(frozen=True)
class CompensatedSeries:
    """Gates and compensated weights for one trajectory.

    tail_threshold is None when the window is empty; tail_start is the first
    1-based position inside the window, None likewise.
    """

    weight: np.ndarray
    gate: np.ndarray
    tail_threshold: Optional[float]
    tail_start: Optional[int]


def window_boundary(seq_len: int, gamma: float, span: str = "late") -> float:
    """Positions strictly greater than this boundary are inside the window.

    span="full" pulls the boundary to 0 so the window covers the whole
    sequence; gamma is ignored in that case.
    """
    if span == "full":
        return 0.0
    if span == "late":
        return (1.0 - gamma) * seq_len
    raise ConfigError(f"span must be 'late' or 'full', got {span!r}")


def tail_threshold(
    rho_series, gamma: float, kappa: float, span: str = "late"
) -> Optional[float]:
    """Order-statistic threshold over the tail focus scores.

    With m tail values, the threshold is the ceil(kappa * m)-th largest one,
    so for kappa = 1 it degenerates to the tail minimum. Returns None when the
    window is empty (gamma = 0 with span="late"), in which case no gate can
    open.
    """
    if not 0.0 < kappa <= 1.0:
        raise ConfigError(f"kappa must be in (0, 1], got {kappa}")
    rho = np.asarray(rho_series, dtype=np.float64)
    seq_len = rho.shape[0]
    boundary = window_boundary(seq_len, gamma, span)
    positions = np.arange(1, seq_len + 1)
    tail = rho[positions > boundary]
    m = tail.shape[0]
    if m == 0:
        return None
    rank = math.ceil(kappa * m)
    return float(np.sort(tail)[m - rank])


def gate_mask(
    rho_series, gamma: float, kappa: float, span: str = "late"
) -> np.ndarray:
    """Per-token 0/1 gates: inside the window and at or above the threshold.

    Ties pass: a token whose score equals the threshold opens its gate, so
    an all-equal tail opens every tail gate.
    """
    rho = np.asarray(rho_series, dtype=np.float64)
    seq_len = rho.shape[0]
    gates = np.zeros(seq_len, dtype=np.int64)
    threshold = tail_threshold(rho, gamma, kappa, span)
    if threshold is None:
        return gates
    boundary = window_boundary(seq_len, gamma, span)
    positions = np.arange(1, seq_len + 1)
    gates[(positions > boundary) & (rho >= threshold)] = 1
    return gates


def schedule_values(
    seq_len: int, schedule: str = "linear", power: int = 2
) -> np.ndarray:
    """Evaluate the position schedule at t / T for t = 1..T.

    linear is the identity, exponential raises t / T to `power`, and step is
    a flat 1 (the gate alone decides where the bonus lands).
    """
    x = np.arange(1, seq_len + 1, dtype=np.float64) / seq_len
    if schedule == "linear":
        return x
    if schedule == "exponential":
        return x**power
    if schedule == "step":
        return np.ones(seq_len, dtype=np.float64)
    raise UnknownSchedule(f"unknown schedule {schedule!r}")


def compensate(
    rho_series,
    gates,
    beta: float,
    schedule: str = "linear",
    power: int = 2,
) -> np.ndarray:
    """Apply the position bonus to gated tokens.

    w_t = rho_t * (1 + gate_t * beta * sched(t / T)). With beta = 0 or all
    gates closed this is the identity on rho. Weights never fall below rho
    because the bonus factor is >= 1.
    """
    rho = np.asarray(rho_series, dtype=np.float64)
    gate = np.asarray(gates, dtype=np.float64)
    if rho.shape != gate.shape:
        raise ConfigError(
            f"rho and gates must align, got {rho.shape} and {gate.shape}"
        )
    sched = schedule_values(rho.shape[0], schedule, power)
    return rho * (1.0 + gate * beta * sched)


def compensated_series(
    rho_series,
    beta: float,
    gamma: float,
    kappa: float,
    schedule: str = "linear",
    power: int = 2,
    span: str = "late",
) -> CompensatedSeries:
    """Gate and compensate one focus series in a single call."""
    rho = np.asarray(rho_series, dtype=np.float64)
    threshold = tail_threshold(rho, gamma, kappa, span)
    gates = gate_mask(rho, gamma, kappa, span)
    weights = compensate(rho, gates, beta, schedule, power)
    boundary = window_boundary(rho.shape[0], gamma, span)
    positions = np.arange(1, rho.shape[0] + 1)
    inside = positions[positions > boundary]
    start = int(inside[0]) if inside.size else None
    return CompensatedSeries(
        weight=weights, gate=gates, tail_threshold=threshold, tail_start=start
    )
