from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from jointfe.scheduler import (FE, HPO, SchedulerError, SchedulerState, exploitation_term, p1_in_range,
                               p1_upper_bound, prior_weight, pucb_scores, pucb_select, record_outcome,
                               recurrence_residuals, simulate_neutral, sweep_neutral)

SQRT2 = math.sqrt(2)


def brute_neutral(M, p1):
    """Direct Eq. 8 comparison in exact rationals: w_FE / (1 + N_FE) vs w_HPO / (1 + N_HPO)."""
    p = Fraction(p1)
    n = {FE: 0, HPO: 0}
    for m in range(M):
        w_fe = p - (p - Fraction(1, 2)) * Fraction(m, M)
        w_hpo = 1 - w_fe
        pick = FE if w_fe / (1 + n[FE]) >= w_hpo / (1 + n[HPO]) else HPO
        n[pick] += 1
    return n[FE], n[HPO]


def test_prior_weight_examples():
    s = SchedulerState(M=200, p1=0.9)
    assert prior_weight(FE, 0, s) == 0.9 and prior_weight(HPO, 0, s) == pytest.approx(0.1)
    assert prior_weight(FE, 200, s) == 0.5 and prior_weight(HPO, 200, s) == 0.5
    assert prior_weight(FE, 100, s) == pytest.approx(0.7)
    for bad in (-1, 201):
        with pytest.raises(SchedulerError):
            prior_weight(FE, bad, s)
    with pytest.raises(SchedulerError):
        prior_weight("XX", 0, s)


@settings(max_examples=100)
@given(M=st.integers(1, 1000), p1=st.floats(0.5, 1.0), frac=st.floats(0, 1))
def test_prior_weights_sum_to_one(M, p1, frac):
    s = SchedulerState(M=M, p1=p1)
    m = int(frac * M)
    assert prior_weight(FE, m, s) + prior_weight(HPO, m, s) == pytest.approx(1.0, abs=1e-12)
    assert prior_weight(FE, M, s) == prior_weight(HPO, M, s) == 0.5


def test_exploitation_term():
    s = SchedulerState(M=10)
    assert exploitation_term(FE, s) == 0.5
    s.counts[FE], s.successes[FE] = 4, 3
    assert exploitation_term(FE, s) == 0.75
    s.counts[HPO], s.successes[HPO] = 10, 0
    assert exploitation_term(HPO, s) == 0.0


def test_pucb_first_step_follows_priors():
    s = SchedulerState(M=200, p1=0.9)
    sc = pucb_scores(s)
    assert sc[FE] == pytest.approx(0.5 + SQRT2 * 0.9) and sc[HPO] == pytest.approx(0.5 + SQRT2 * 0.1)
    assert pucb_select(s) == FE


def test_pucb_denominator_example():
    s = SchedulerState(M=100, p1=0.5)
    s.counts = {FE: 3, HPO: 1}
    s.successes = {FE: 0, HPO: 0}
    s.m = 4
    assert pucb_select(s, q={FE: 0.5, HPO: 0.5}) == HPO


def test_pucb_exploitation_dominance():
    s = SchedulerState(M=100, p1=0.5)
    s.counts = {FE: 2, HPO: 2}
    s.successes = {FE: 2, HPO: 0}
    s.m = 4
    assert pucb_select(s) == FE


def test_pucb_tie_goes_to_fe():
    s = SchedulerState(M=10, p1=0.5)
    assert pucb_select(s) == FE


def test_record_outcome():
    s = SchedulerState(M=2)
    a = pucb_select(s)
    record_outcome(s, a, True)
    assert s.counts[a] == 1 and s.successes[a] == 1 and s.m == 1
    b = pucb_select(s)
    other = HPO if b == FE else FE
    with pytest.raises(SchedulerError):
        record_outcome(s, other, False)
    record_outcome(s, b, False)
    assert s.counts[FE] + s.counts[HPO] == 2 and s.successes[b] == (1 if b == a else 0)
    with pytest.raises(SchedulerError):
        pucb_select(s)


def test_state_validation():
    with pytest.raises(ValueError):
        SchedulerState(M=0)
    with pytest.raises(ValueError):
        SchedulerState(M=5, p1=0.9, p2=0.2)


# --- Theorem 1 harness --------------------------------------------------------

def test_published_settings_instance():
    run = simulate_neutral(200, 0.9, SQRT2)
    assert (run.n_fe, run.n_hpo) == (100, 100)
    assert run.q_trace[0] == 0.8 and run.q_exact(0) == 2 * Fraction(0.9) - 1


def test_odd_budget_instance():
    run = simulate_neutral(11, 0.6)
    assert sorted((run.n_fe, run.n_hpo)) == [5, 6]


def test_q0_is_two_p1_minus_one():
    for p1 in (0.5, 0.55, 0.7, 0.75):
        assert simulate_neutral(40, p1).q_exact(0) == 2 * Fraction(p1) - 1


def test_refuses_out_of_range():
    with pytest.raises(SchedulerError):
        simulate_neutral(10, 0.49)
    with pytest.raises(SchedulerError):
        simulate_neutral(10, 0.9)  # bound is 23/26 ~ 0.885
    with pytest.raises(SchedulerError):
        simulate_neutral(10, 0.6, c2=0.0)
    assert p1_upper_bound(10) == Fraction(23, 26)
    assert p1_in_range(200, 0.9) and not p1_in_range(2, 0.9)


@settings(max_examples=150, deadline=None)
@given(M=st.integers(1, 300), k=st.integers(0, 999))
def test_simulation_matches_direct_rule(M, k):
    hi = float(p1_upper_bound(M))
    p1 = 0.5 + (hi - 0.5) * k / 1000
    run = simulate_neutral(M, p1)
    assert (run.n_fe, run.n_hpo) == brute_neutral(M, p1)
    assert abs(run.n_fe - run.n_hpo) <= 1 and (M % 2 or run.n_fe == run.n_hpo)
    assert run.max_abs_q < 1
    assert recurrence_residuals(run) == [0] * M


def test_c2_is_irrelevant_under_neutral_rewards():
    a = simulate_neutral(51, 0.7, 0.1)
    b = simulate_neutral(51, 0.7, 10.0)
    assert a.choices == b.choices and a.q_scaled == b.q_scaled


def test_live_selector_matches_simulation():
    M, p1 = 60, 0.8
    s = SchedulerState(M=M, p1=p1)
    picks = []
    while s.m < M:
        a = pucb_select(s, q={FE: 0.5, HPO: 0.5})
        picks.append(a)
        record_outcome(s, a, False)
    assert picks == simulate_neutral(M, p1).choices


def test_skewed_rewards_favor_fe():
    s = SchedulerState(M=100, p1=0.9)
    while s.m < s.M:
        a = pucb_select(s)
        record_outcome(s, a, a == FE)
    assert s.counts[FE] / 100 > 0.5


def test_sweep_stays_in_range():
    rows = list(sweep_neutral(range(2, 30), 10))
    assert rows and all(p1_in_range(M, p1) for M, p1, _ in rows)
