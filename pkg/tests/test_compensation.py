"""Tail gating and position-scheduled compensation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vgpo import (
    ConfigError,
    UnknownSchedule,
    compensate,
    compensated_series,
    gate_mask,
    schedule_values,
    tail_threshold,
    window_boundary,
)

rho_lists = st.lists(
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
    min_size=1,
    max_size=24,
)


def test_boundary_late_vs_full():
    assert window_boundary(10, 0.5, "late") == 5.0
    assert window_boundary(10, 0.5, "full") == 0.0
    assert window_boundary(10, 0.0, "late") == 10.0
    with pytest.raises(ConfigError):
        window_boundary(10, 0.5, "middle")


def test_threshold_hand_value():
    rho = [0.1, 0.2, 0.3, 0.4, 0.5, 0.4, 0.9, 0.5, 0.6, 0.7]
    # tail of the last 5 values: {0.4, 0.9, 0.5, 0.6, 0.7}, top 20% -> 1 value
    assert tail_threshold(rho, gamma=0.5, kappa=0.2) == 0.9


def test_threshold_kappa_one_is_tail_min():
    rho = [0.3, 0.8, 0.1, 0.6]
    assert tail_threshold(rho, gamma=1.0, kappa=1.0) == 0.1


def test_threshold_single_token_tail():
    # T=1, gamma=0.5: position 1 > 0.5, so the lone token is the tail
    assert tail_threshold([0.42], gamma=0.5, kappa=0.2) == 0.42


def test_threshold_empty_tail_is_none():
    assert tail_threshold([0.3, 0.4], gamma=0.0, kappa=0.5) is None


def test_threshold_kappa_out_of_range():
    with pytest.raises(ConfigError):
        tail_threshold([0.5], gamma=0.5, kappa=0.0)
    with pytest.raises(ConfigError):
        tail_threshold([0.5], gamma=0.5, kappa=1.5)


def test_gates_hand_value():
    rho = [0.1, 0.2, 0.3, 0.4, 0.5, 0.4, 0.9, 0.5, 0.6, 0.7]
    gates = gate_mask(rho, gamma=0.5, kappa=0.2)
    assert gates.tolist() == [0, 0, 0, 0, 0, 0, 1, 0, 0, 0]


def test_gates_all_equal_tail_ties_pass():
    gates = gate_mask([0.7] * 8, gamma=0.5, kappa=0.2)
    assert gates.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]


def test_gates_gamma_zero_all_closed():
    assert gate_mask([0.9, 0.9, 0.9], gamma=0.0, kappa=0.5).sum() == 0


def test_gates_full_span_ignores_position():
    rho = [0.9, 0.1, 0.1, 0.1]
    gates = gate_mask(rho, gamma=0.0, kappa=0.25, span="full")
    assert gates.tolist() == [1, 0, 0, 0]


@settings(max_examples=150, deadline=None)
@given(
    st.integers(min_value=1, max_value=30),
    st.floats(min_value=0.05, max_value=1.0),
    st.floats(min_value=0.05, max_value=1.0),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_gate_count_bound_with_distinct_scores(seq_len, gamma, kappa, seed):
    rng = np.random.default_rng(seed)
    rho = rng.permutation(np.linspace(0.01, 0.99, seq_len))  # all distinct
    gates = gate_mask(rho, gamma=gamma, kappa=kappa)
    boundary = window_boundary(seq_len, gamma)
    m = int(np.sum(np.arange(1, seq_len + 1) > boundary))
    if m:
        assert int(gates.sum()) == int(np.ceil(kappa * m))
    else:
        assert int(gates.sum()) == 0


def test_schedule_values():
    lin = schedule_values(4, "linear")
    assert np.allclose(lin, [0.25, 0.5, 0.75, 1.0], atol=1e-15)
    expo = schedule_values(4, "exponential", power=2)
    assert np.allclose(expo, [0.0625, 0.25, 0.5625, 1.0], atol=1e-15)
    step = schedule_values(4, "step")
    assert np.array_equal(step, np.ones(4))
    with pytest.raises(UnknownSchedule):
        schedule_values(4, "cosine")


def test_compensate_hand_values():
    # gated last token of ten, beta 0.3, linear: 0.8 * (1 + 0.3 * 1.0)
    w = compensate([0.8] * 10, [0] * 9 + [1], beta=0.3)
    assert w[-1] == pytest.approx(1.04, abs=1e-12)
    assert np.allclose(w[:-1], 0.8, atol=1e-15)
    # exponential p=2 at t=5 of 10: sched = 0.25
    w = compensate([0.8] * 10, [0] * 4 + [1] + [0] * 5, beta=0.3, schedule="exponential")
    assert w[4] == pytest.approx(0.86, abs=1e-12)


def test_compensate_weight_can_exceed_one():
    w = compensate([0.9], [1], beta=0.5)
    assert w[0] > 1.0


def test_compensate_shape_mismatch():
    with pytest.raises(ConfigError):
        compensate([0.5, 0.5], [1], beta=0.3)


@settings(max_examples=150, deadline=None)
@given(rho_lists, st.sampled_from(["linear", "exponential", "step"]))
def test_beta_zero_is_identity(rho, schedule):
    gates = [1] * len(rho)
    w = compensate(rho, gates, beta=0.0, schedule=schedule)
    assert np.array_equal(w, np.asarray(rho, dtype=np.float64))


@settings(max_examples=150, deadline=None)
@given(
    st.floats(min_value=0.01, max_value=1.0),
    st.floats(min_value=0.0, max_value=2.0),
    st.integers(min_value=2, max_value=20),
    st.sampled_from([("linear", 1), ("exponential", 1), ("exponential", 2)]),
)
def test_open_gate_weights_monotone_in_position(rho_val, beta, seq_len, sched):
    schedule, power = sched
    w = compensate(
        [rho_val] * seq_len, [1] * seq_len, beta=beta, schedule=schedule, power=power
    )
    assert np.all(np.diff(w) >= -1e-15)


@settings(max_examples=100, deadline=None)
@given(rho_lists, st.floats(min_value=0.0, max_value=2.0))
def test_weights_never_fall_below_rho(rho, beta):
    gates = gate_mask(rho, gamma=0.5, kappa=0.3)
    w = compensate(rho, gates, beta=beta)
    assert np.all(w >= np.asarray(rho) - 1e-15)


def test_combined_series_matches_parts():
    rho = [0.1, 0.2, 0.3, 0.4, 0.5, 0.4, 0.9, 0.5, 0.6, 0.7]
    comp = compensated_series(rho, beta=0.3, gamma=0.5, kappa=0.2)
    assert comp.tail_threshold == 0.9
    assert comp.tail_start == 6
    assert np.array_equal(comp.gate, gate_mask(rho, 0.5, 0.2))
    assert np.array_equal(comp.weight, compensate(rho, comp.gate, 0.3))


def test_combined_series_empty_tail():
    comp = compensated_series([0.5, 0.5], beta=0.3, gamma=0.0, kappa=0.5)
    assert comp.tail_threshold is None
    assert comp.tail_start is None
    assert comp.gate.sum() == 0
    assert np.array_equal(comp.weight, [0.5, 0.5])
