"""Dynamic-programming construction of optimal checkpoint policy tables.

Three homogeneous strategies over a length-t chain with budget m:

* hidden-state memorization: checkpoints are hidden states (1 unit each);
  backing up one position always costs one forward from the adjacent
  stored state.
* internal-state memorization: checkpoints are full internal states
  (one slot each, counted in internal-state slots); backpropagating over a
  stored state costs no forward at all.
* mixed memorization: both entry kinds compete under a single budget in
  hidden-state units, internal entries charging alpha units (beta when the
  input hidden state is already stored and dedup is enabled).

Tables are filled bottom-up, increasing m then increasing t, so every cell
reads only finished cells.  A build for (t_max, m_max) performs
O(t_max^2 * m_max) candidate evaluations; candidate vectors are evaluated
with numpy and ties always resolve to the smallest split position so that
serialized policies are reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    INF,
    Algorithm,
    CostModel,
    MemoryBudget,
    PolicyTable,
    PushKind,
    as_budget_units,
)


@dataclass(frozen=True)
class SolveRequest:
    """One table-build request; cost_model is consulted for mixed solves only."""

    algorithm: Algorithm
    t_max: int
    m_max: int
    cost_model: CostModel | None = None
    dedup: bool = False

    def __post_init__(self):
        if self.t_max < 1 or self.m_max < 1:
            raise ValueError("t_max and m_max must be >= 1")


def solve(request: SolveRequest) -> PolicyTable:
    alg = Algorithm(request.algorithm)
    if alg is Algorithm.HSM:
        return solve_hsm(request.t_max, request.m_max)
    if alg is Algorithm.ISM:
        return solve_ism(request.t_max, request.m_max)
    model = request.cost_model or CostModel()
    dedup = request.dedup or alg is Algorithm.MSM_DEDUP
    return solve_msm(request.t_max, request.m_max, model, dedup=dedup)


def _empty_tables(t_max: int, m_max: int):
    cost = np.full((t_max + 1, m_max + 1), INF, dtype=np.int64)
    cost[0, :] = 0
    split = np.zeros((t_max + 1, m_max + 1), dtype=np.int64)
    return cost, split


def solve_hsm(t_max: int, m_max: int) -> PolicyTable:
    """Optimal hidden-state-only checkpointing table.

    Boundaries: cost(t, 1) = t(t+1)/2 (re-forward from the subsequence base
    for every backward step) and cost(t, m >= t) = 2t-1 (store-all).  The
    recurrence picks the first checkpoint position y, paying y forwards,
    then solves the right part with one slot fewer and the left part with
    the slot returned:  cost(t, m) = min_y [y + cost(t-y, m-1) + cost(y, m)].
    """
    if t_max < 1 or m_max < 1:
        raise ValueError("t_max and m_max must be >= 1")
    C, D = _empty_tables(t_max, m_max)
    t = np.arange(t_max + 1)
    C[:, 1] = t * (t + 1) // 2
    if t_max >= 2:
        # with a single slot the only feasible first push is at t-1
        D[2:, 1] = t[2:] - 1
    # plentiful region m >= t: push immediately, every step
    for tt in range(1, min(t_max, m_max) + 1):
        C[tt, tt:] = 2 * tt - 1
        D[tt, tt:] = 1
    D[0, :] = 0
    if t_max >= 1:
        D[1, :] = 0
    ys = np.arange(1, t_max + 1, dtype=np.int64)
    for m in range(2, m_max + 1):
        col = C[:, m]
        prev = C[:, m - 1]
        for tt in range(m + 1, t_max + 1):
            q = ys[: tt - 1] + col[1:tt] + prev[tt - 1 : 0 : -1]
            i = int(np.argmin(q))
            col[tt] = q[i]
            D[tt, m] = i + 1
    return PolicyTable(Algorithm.HSM, t_max, m_max, C, split=D)


def solve_ism(t_max: int, m_max: int) -> PolicyTable:
    """Optimal internal-state-only checkpointing table (slots hold internals).

    Backpropagating over a stored internal state is free, so the split may
    sit at the very end (1 <= y <= t) and the left part shrinks to y-1:
    cost(t, m) = min_y [y + cost(y-1, m) + cost(t-y, m-1)], cost(0, m) = 0.
    Boundaries: cost(t, 1) = t(t+1)/2, cost(t, m >= t) = t (plain replay of
    standard BPTT, every internal state stored on the first pass).
    """
    if t_max < 1 or m_max < 1:
        raise ValueError("t_max and m_max must be >= 1")
    C, D = _empty_tables(t_max, m_max)
    t = np.arange(t_max + 1)
    C[:, 1] = t * (t + 1) // 2
    D[1:, 1] = t[1:]  # single slot: carry the frontier internal state
    for tt in range(1, min(t_max, m_max) + 1):
        C[tt, tt:] = tt
        D[tt, tt:] = 1
    D[0, :] = 0
    ys = np.arange(1, t_max + 1, dtype=np.int64)
    for m in range(2, m_max + 1):
        col = C[:, m]
        prev = C[:, m - 1]
        for tt in range(m + 1, t_max + 1):
            q = ys[:tt] + col[0:tt] + prev[tt - 1 :: -1]
            i = int(np.argmin(q))
            col[tt] = q[i]
            D[tt, m] = i + 1
    return PolicyTable(Algorithm.ISM, t_max, m_max, C, split=D)


def solve_msm(
    t_max: int,
    budget: MemoryBudget | int,
    model: CostModel,
    dedup: bool = False,
) -> PolicyTable:
    """Optimal mixed-memorization table under a hidden-unit budget.

    Each cell compares the best hidden push (position y in [1, t), charging
    1 unit) with the best internal push (y in [1, t], charging alpha units,
    or beta when y = 1 under dedup; y = t stores nothing and backpropagates
    straight off the working core).  Budgets of zero or less are infeasible
    for any nonempty span, which is what keeps one unit of headroom under
    every stored state.  Ties between the two kinds prefer the internal
    push; it is never costlier in forwards.
    """
    m_max = as_budget_units(budget)
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    alpha, beta = model.alpha, model.beta
    algorithm = Algorithm.MSM_DEDUP if dedup else Algorithm.MSM
    C, D1 = _empty_tables(t_max, m_max)
    D2 = np.zeros_like(D1)
    H = np.zeros_like(D1)
    t = np.arange(t_max + 1)
    # single unit: no pushes fit, replay from the base for every step
    C[:, 1] = t * (t + 1) // 2
    D2[1:, 1] = t[1:]
    H[1:, 1] = PushKind.INTERNAL
    # length-1 row: one forward, backward off the working core
    C[1, 1:] = 1
    D2[1, 1:] = 1
    H[1, 1:] = PushKind.INTERNAL
    # plentiful region m >= alpha*t: store every internal state on the way
    for tt in range(1, t_max + 1):
        if alpha * tt > m_max:
            break
        C[tt, alpha * tt :] = tt
        D2[tt, alpha * tt :] = 1
        H[tt, alpha * tt :] = PushKind.INTERNAL
        if tt >= 2:
            D1[tt, alpha * tt :] = 1
    inf_col = np.full(t_max + 1, INF, dtype=np.int64)
    inf_col[0] = 0  # empty right part costs nothing no matter the budget
    ys = np.arange(1, t_max + 1, dtype=np.int64)
    for m in range(2, m_max + 1):
        col = C[:, m]
        prev = C[:, m - 1]
        col_a = C[:, m - alpha] if m - alpha >= 1 else inf_col
        col_b = C[:, m - beta] if m - beta >= 1 else inf_col
        t_lo = max(2, m // alpha + 1)
        for tt in range(t_lo, t_max + 1):
            if alpha * tt <= m:
                continue
            q1 = ys[: tt - 1] + col[1:tt] + prev[tt - 1 : 0 : -1]
            q2 = ys[:tt] + col[0:tt] + col_a[tt - 1 :: -1]
            if dedup:
                q2[0] = 1 + col_b[tt - 1]
            i1 = int(np.argmin(q1))
            i2 = int(np.argmin(q2))
            c1, c2 = q1[i1], q2[i2]
            D1[tt, m] = i1 + 1
            D2[tt, m] = i2 + 1
            if c2 <= c1:
                col[tt] = c2
                H[tt, m] = PushKind.INTERNAL
            else:
                col[tt] = c1
                H[tt, m] = PushKind.HIDDEN
    return PolicyTable(
        algorithm,
        t_max,
        m_max,
        C,
        split_hidden=D1,
        split_internal=D2,
        kind=H,
        cost_model=model,
    )
