"""Two-armed PUCB selector choosing between FE and HPO at each budget step.

Prior weights move linearly from ``(p1, p2)`` at step 0 to ``(0.5, 0.5)`` at
step ``M``.  Under neutral rewards the allocation ends within one step of an
even split whenever ``0.5 <= p1 < (M + 1.5) / (M + 3)``;
:func:`simulate_neutral` reproduces that regime in exact arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

FE = "FE"
HPO = "HPO"
ACTIONS = (FE, HPO)
COLD_Q = 0.5


class SchedulerError(RuntimeError):
    pass


def p1_upper_bound(M: int) -> Fraction:
    return Fraction(2 * M + 3, 2 * (M + 3))


def p1_in_range(M: int, p1: float) -> bool:
    p = Fraction(p1)
    return Fraction(1, 2) <= p < p1_upper_bound(M)


@dataclass
class SchedulerState:
    M: int
    p1: float = 0.9
    c2: float = math.sqrt(2)
    p2: float | None = None
    m: int = 0
    counts: dict = field(default_factory=lambda: {FE: 0, HPO: 0})
    successes: dict = field(default_factory=lambda: {FE: 0, HPO: 0})
    pending: str | None = None

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("budget M must be positive")
        if self.p2 is None:
            self.p2 = 1.0 - self.p1
        if abs(self.p1 + self.p2 - 1.0) > 1e-12:
            raise ValueError("p1 + p2 must equal 1")

    @property
    def delta(self) -> float:
        return (self.p1 - 0.5) / self.M


def prior_weight(action: str, m: int, state: SchedulerState) -> float:
    if not 0 <= m <= state.M:
        raise SchedulerError(f"step {m} outside [0, {state.M}]")
    if action not in ACTIONS:
        raise SchedulerError(f"unknown action {action!r}")
    start = state.p1 if action == FE else state.p2
    # endpoints pinned so w(0) = p and w(M) = 0.5 hold exactly in floating point
    if m == 0:
        return start
    if m == state.M:
        return 0.5
    return start + (0.5 - start) * m / state.M


def exploitation_term(action: str, state: SchedulerState) -> float:
    n = state.counts[action]
    return state.successes[action] / n if n else COLD_Q


def pucb_scores(state: SchedulerState, q: dict | None = None) -> dict[str, float]:
    total = sum(state.counts.values())
    root = math.sqrt(total) if total else 1.0
    out = {}
    for a in ACTIONS:
        qa = exploitation_term(a, state) if q is None else q[a]
        out[a] = qa + state.c2 * prior_weight(a, state.m, state) * root / (1 + state.counts[a])
    return out


def pucb_select(state: SchedulerState, q: dict | None = None) -> str:
    """Pick FE or HPO; ties go to FE.  ``q`` overrides the empirical success rates."""
    if state.m >= state.M:
        raise SchedulerError("budget exhausted")
    scores = pucb_scores(state, q)
    action = FE if scores[FE] >= scores[HPO] else HPO
    state.pending = action
    return action


def record_outcome(state: SchedulerState, action: str, success: bool) -> None:
    if state.pending != action:
        raise SchedulerError(f"outcome for {action!r} but last selection was {state.pending!r}")
    state.counts[action] += 1
    state.successes[action] += int(bool(success))
    state.m += 1
    state.pending = None


@dataclass
class NeutralRun:
    """Result of a neutral-reward simulation.

    ``q_scaled[m]`` is ``Q(m) * scale`` as an exact integer, where
    ``Q(m) = w_FE(m) (1 + N_HPO(m)) - w_HPO(m) (1 + N_FE(m))``.
    """

    M: int
    p1: float
    n_fe: int
    n_hpo: int
    choices: list[str]
    q_scaled: list[int]
    scale: int
    delta_scaled: int

    @property
    def q_trace(self) -> list[float]:
        return [q / self.scale for q in self.q_scaled]

    def q_exact(self, m: int) -> Fraction:
        return Fraction(self.q_scaled[m], self.scale)

    @property
    def max_abs_q(self) -> Fraction:
        return Fraction(max(abs(q) for q in self.q_scaled), self.scale)

    def w_fe_scaled(self, m: int) -> int:
        """``w_FE(m) * scale``; with ``p1 = a / b`` this is ``2 a M - (2a - b) m``."""
        a = Fraction(self.p1).numerator
        return 2 * a * self.M - self.delta_scaled * m


def simulate_neutral(M: int, p1: float, c2: float = math.sqrt(2)) -> NeutralRun:
    """Run the selector for ``M`` steps with both success rates pinned equal.

    With equal exploitation terms the common ``c2 * sqrt(sum N)`` factor
    cancels, so each step compares ``w_a(m) / (1 + N_a)`` exactly; all
    quantities are integers over the common denominator ``2 b M`` where
    ``p1 = a / b`` exactly.
    """
    if M < 1:
        raise SchedulerError("M must be positive")
    if c2 <= 0:
        raise SchedulerError("c2 must be positive")
    if not p1_in_range(M, p1):
        raise SchedulerError(f"p1={p1!r} outside [0.5, (M+1.5)/(M+3)) for M={M}")
    p = Fraction(p1)
    a, b = p.numerator, p.denominator
    scale = 2 * b * M
    step = 2 * a - b  # delta * scale
    n_fe = n_hpo = 0
    choices, trace = [], []
    for m in range(M + 1):
        w_fe = 2 * a * M - step * m
        w_hpo = scale - w_fe
        q = w_fe * (1 + n_hpo) - w_hpo * (1 + n_fe)
        trace.append(q)
        if m == M:
            break
        if q >= 0:
            n_fe += 1
            choices.append(FE)
        else:
            n_hpo += 1
            choices.append(HPO)
    return NeutralRun(M, p1, n_fe, n_hpo, choices, trace, scale, step)


def recurrence_residuals(run: NeutralRun) -> list[int]:
    """Exact residuals of ``Q(m+1) - [Q(m) + w_FE(m) - I(m+1) - delta (m+3)]`` (scaled)."""
    out = []
    for m in range(run.M):
        w_fe = run.w_fe_scaled(m)
        indicator = run.scale if run.choices[m] == FE else 0
        predicted = run.q_scaled[m] + w_fe - indicator - run.delta_scaled * (m + 3)
        out.append(run.q_scaled[m + 1] - predicted)
    return out


def sweep_neutral(Ms, n_p1: int = 10, c2: float = math.sqrt(2)):
    """Yield ``(M, p1, run)`` over an evenly spaced p1 grid inside the admissible range."""
    for M in Ms:
        hi = float(p1_upper_bound(M))
        for k in range(n_p1):
            p1 = 0.5 + (hi - 0.5) * k / n_p1
            if not p1_in_range(M, p1):
                continue
            yield M, p1, simulate_neutral(M, p1, c2)
