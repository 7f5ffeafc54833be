"""How the FE/HPO selector spends its budget.

Part 1 replays the neutral-reward case: both optimizers succeed equally
often, the prior starts FE-heavy and drifts to 0.5, and the final split is
still even.  Part 2 feeds the live selector rewards that favour FE and shows
the allocation tilting towards it.
"""

from __future__ import annotations

import math

from jointfe.scheduler import FE, HPO, SchedulerState, pucb_select, record_outcome, simulate_neutral


def neutral(M: int = 200, p1: float = 0.9) -> None:
    r = simulate_neutral(M, p1, math.sqrt(2))
    print(f"neutral rewards, M={M}, p1={p1}: N_FE={r.n_fe}, N_HPO={r.n_hpo}, max |Q| = {float(r.max_abs_q):.4f}")
    # FE-heavy at first, drifting towards alternation as the prior relaxes
    head = "".join("F" if c == FE else "H" for c in r.choices[:60])
    print(f"first 60 picks: {head}")
    print(f"Q(0) = {r.q_trace[0]}, Q(M) = {r.q_trace[-1]:.4f}")


def skewed(M: int = 100, p_fe: float = 1.0, p_hpo: float = 0.0) -> None:
    import numpy as np

    rng = np.random.default_rng(0)
    s = SchedulerState(M=M, p1=0.9)
    while s.m < s.M:
        a = pucb_select(s)
        record_outcome(s, a, rng.random() < (p_fe if a == FE else p_hpo))
    print(f"skewed rewards (FE succeeds w.p. {p_fe}, HPO w.p. {p_hpo}): "
          f"N_FE={s.counts[FE]}, N_HPO={s.counts[HPO]}")


if __name__ == "__main__":
    neutral()
    print()
    for odd in (11, 51):
        r = simulate_neutral(odd, 0.6)
        print(f"odd budget M={odd}, p1=0.6: N_FE={r.n_fe}, N_HPO={r.n_hpo}")
    print()
    skewed()
    skewed(p_fe=0.3, p_hpo=0.6)
