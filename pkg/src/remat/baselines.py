"""Reference strategies, an exhaustive scheduling oracle, and bound checks.

The oracle performs uniform-cost search over schedules expressible in the
stack model: a LIFO store of tagged checkpoints, a working core, and a
backprop frontier that moves from position t down to 0.  Action rules per
strategy class (costs are forward-step counts):

* hidden-only: a recomputation run always starts at the topmost stored
  state and ends in a push; backing the frontier up one position costs one
  forward from a stored state at frontier-1.  Entries charge 1 unit each.
* internal-only: runs end in an internal-state push (possibly at the
  frontier); backpropagating over the top entry when it sits at the
  frontier is free and consumes it.  Entries charge one slot each.
* mixed: both push kinds compete; a run may also end at the frontier and
  back up one position straight off the working core without storing
  anything.  The working core permanently reserves one unit of the budget,
  so stored entries fit in m-1 units; internals charge alpha units, or
  beta when pushed directly above the current top under dedup.

These rules reproduce exactly the schedule space the dynamic programs
optimize over, which is what makes oracle-vs-solver equality a meaningful
test.  A relax_lifo flag widens the model (runs may seed from any stored
state, entries may be dropped in any order) for exploratory comparisons.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (
    INF,
    Algorithm,
    CostModel,
    MemoryBudget,
    OracleLimitError,
    PolicyTable,
    as_budget_units,
)

ORACLE_MAX_T = 12
ORACLE_MAX_BUDGET = 6


@dataclass
class StrategyReport:
    """Cost/memory summary of one strategy at one sequence length."""

    name: str
    t: int
    total_forwards: int
    memory_units: int | Fraction
    forwards_per_step: Fraction = field(init=False)

    def __post_init__(self):
        self.forwards_per_step = Fraction(self.total_forwards, self.t)


def naive_quadratic(t: int) -> StrategyReport:
    """Zero-checkpoint baseline: re-forward from the start for every step."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return StrategyReport("naive_quadratic", t, t * (t + 1) // 2, 0)


def store_all_hidden(t: int) -> StrategyReport:
    """Keep every hidden state; one recompute per backward step except the last."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return StrategyReport("store_all_hidden", t, 2 * t - 1, t)


def chen_sqrt(t: int, model: CostModel) -> StrategyReport:
    """Fixed sqrt(t) segmentation: boundary hidden states between segments
    plus all internal states of the segment currently being backpropagated.

    Segments have length ceil(sqrt(t)) with a possibly-shorter last segment.
    One full pass materializes boundaries and the last segment's internals;
    every earlier segment is then restored with one extra pass.  Memory is
    reported as (#segments) hidden units -- counting the initial boundary --
    plus segment_len internal entries at beta units each, which reduces to
    sqrt(t) * (1 + beta) when t is a perfect square.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    seg = math.isqrt(t)
    if seg * seg < t:
        seg += 1
    nseg = -(-t // seg)
    last = t - seg * (nseg - 1)
    forwards = t + (t - last)
    memory = nseg + seg * model.beta
    return StrategyReport("chen_sqrt", t, forwards, memory)


def _chen_recursive_sim(length: int, k: int) -> tuple[int, int]:
    """Exact (forwards, peak states) of the recursive segmentation schedule."""
    if length <= 1 or length < k:
        # leaf: single pass storing every internal state
        return length, length
    # store k evenly spaced boundaries, splitting into k+1 parts
    q, r = divmod(length, k + 1)
    parts = [q + 1] * r + [q] * (k + 1 - r)
    fwd = length - parts[-1]  # initial pass up to the last boundary
    peak = 0
    for j, p in enumerate(parts):
        pf, pm = _chen_recursive_sim(p, k)
        fwd += pf
        # boundaries for parts left of j are still held while part j runs
        peak = max(peak, j + pm)
    return fwd, peak


def chen_recursive(t: int, k: int) -> StrategyReport:
    """Recursive segmentation: k stored boundaries split a span into k+1
    parts until spans shrink below k, where every internal state is kept.

    Memory is reported in state counts (hidden and internal states both
    count 1), matching the scheme's own coarse accounting; peak memory is
    about k*log_{k+1}(t) and forwards about t*log_k(t).
    """
    if t < 1 or k < 1:
        raise ValueError("t and k must be >= 1")
    fwd, peak = _chen_recursive_sim(t, k)
    return StrategyReport(f"chen_recursive(k={k})", t, fwd, peak)


# --- exhaustive oracle ------------------------------------------------------

_H, _I = 0, 1  # entry kinds: hidden state / internal state


def _entry_charge(kind, d, alpha, beta, dedup):
    if kind == _H:
        return 1
    return beta if (dedup and d == 1) else alpha


def state_space_oracle(
    t: int,
    budget: MemoryBudget | int,
    model: CostModel | None = None,
    algorithm_class: Algorithm = Algorithm.HSM,
    force: bool = False,
    relax_lifo: bool = False,
) -> int:
    """Exact minimum forward count over all schedules in the stack model.

    Uniform-cost search over states (stored entries, frontier).  Refuses
    instances above t=12 or budget=6 unless force=True; the space grows
    exponentially.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    m = as_budget_units(budget)
    if not force and (t > ORACLE_MAX_T or m > ORACLE_MAX_BUDGET):
        raise OracleLimitError(
            f"instance (t={t}, budget={m}) above caps "
            f"(t<={ORACLE_MAX_T}, budget<={ORACLE_MAX_BUDGET}); pass force=True to override"
        )
    if t == 0:
        return 0
    alg = Algorithm(algorithm_class)
    if alg.mixed:
        model = model or CostModel()
        alpha, beta = model.alpha, model.beta
        cap = m - 1
        kinds = (_H, _I)
    else:
        alpha = beta = 1
        cap = m
        kinds = (_H,) if alg is Algorithm.HSM else (_I,)
    dedup = alg is Algorithm.MSM_DEDUP

    neighbors = _relaxed_neighbors if relax_lifo else _lifo_neighbors
    start = ((), t)
    dist = {start: 0}
    heap = [(0, start)]
    while heap:
        d, state = heapq.heappop(heap)
        if d > dist.get(state, INF):
            continue
        if state[1] == 0:
            return d
        for step_cost, nxt in neighbors(state, alg, cap, alpha, beta, dedup, kinds):
            nd = d + step_cost
            if nd < dist.get(nxt, INF):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    raise RuntimeError("search exhausted without reaching frontier 0")  # pragma: no cover


def _lifo_neighbors(state, alg, cap, alpha, beta, dedup, kinds):
    stack, frontier = state
    top = stack[-1][0] if stack else 0
    occupancy = sum(e[2] for e in stack)
    out = []
    # pushes: run from the top and store at distance d
    for kind in kinds:
        # a hidden state at the frontier cannot feed the frontier's backward
        # step, and an internal push at the frontier is dominated by backing
        # up straight off the working core (mixed) or is the only way to
        # retire the frontier (internal-only)
        if kind == _I and not alg.mixed:
            d_hi = frontier - top
        else:
            d_hi = frontier - 1 - top
        for d in range(1, d_hi + 1):
            charge = _entry_charge(kind, d, alpha, beta, dedup)
            if occupancy + charge > cap:
                continue
            entry = (top + d, kind, charge)
            out.append((d, (stack + (entry,), frontier)))
    # backward steps
    if stack and stack[-1][0] == frontier and stack[-1][1] == _I:
        out.append((0, (stack[:-1], frontier - 1)))  # stored internal: free
    if alg is Algorithm.HSM:
        if top == frontier - 1:
            out.append((1, (stack, frontier - 1)))
    elif alg.mixed:
        run = frontier - top
        if run >= 1:
            out.append((run, (stack, frontier - 1)))
    # drop a dead entry (position at or above the frontier)
    if stack and stack[-1][0] >= frontier and not (
        stack[-1][1] == _I and stack[-1][0] == frontier
    ):
        out.append((0, (stack[:-1], frontier)))
    return out


def _relaxed_neighbors(state, alg, cap, alpha, beta, dedup, kinds):
    """Exploratory variant: seeds from any stored state, pops in any order."""
    entries, frontier = state
    occupancy = sum(e[2] for e in entries)
    positions = {e[0] for e in entries}
    hidden_at = sorted({0} | {e[0] for e in entries})

    def nearest_seed(p):
        lo = [h for h in hidden_at if h < p]
        return lo[-1]

    out = []
    for kind in kinds:
        if kind == _I and not alg.mixed:
            p_hi = frontier
        else:
            p_hi = frontier - 1
        for p in range(1, p_hi + 1):
            if p in positions:
                continue
            seed = nearest_seed(p)
            adjacent = (p - 1) in hidden_at
            charge = _entry_charge(kind, 1 if adjacent else 2, alpha, beta, dedup)
            if occupancy + charge > cap:
                continue
            entry = (p, kind, charge)
            nxt = tuple(sorted(entries + (entry,)))
            out.append((p - seed, (nxt, frontier)))
    stored_internal = next((e for e in entries if e[0] == frontier and e[1] == _I), None)
    if stored_internal is not None:
        nxt = tuple(e for e in entries if e != stored_internal)
        out.append((0, (nxt, frontier - 1)))
    if alg is Algorithm.HSM:
        if (frontier - 1) in hidden_at:
            out.append((1, (entries, frontier - 1)))
    elif alg.mixed:
        out.append((frontier - nearest_seed(frontier), (entries, frontier - 1)))
    for e in entries:
        nxt = tuple(x for x in entries if x != e)
        out.append((0, (nxt, frontier)))
    return out


# --- analytic bound checks --------------------------------------------------


@dataclass(frozen=True)
class BoundViolation:
    rule: str
    t: int
    m: int
    cost: int
    bound: float


def check_bounds(
    policy: PolicyTable,
    model: CostModel | None = None,
    reference: PolicyTable | None = None,
) -> list[BoundViolation]:
    """Check the analytic cost bounds over an entire policy table.

    Hidden-state and mixed tables must satisfy cost <= m * t^(1+1/m),
    cost < 4 * t^(1+1/m), and cost <= (a+1)*t whenever t*a! <= m^a for
    a in 1..6.  Internal-state tables must satisfy cost <= a*t under the
    same condition.  When a hidden-state reference table is supplied for an
    internal-state policy, costs must also dominate pointwise (internal
    never above hidden at equal slot counts).  Returns all violations;
    an empty list means every bound holds.
    """
    del model  # charges are already baked into the table's unit convention
    violations: list[BoundViolation] = []
    cost = policy.cost_table[1:, 1:]  # rows t>=1, cols m>=1
    t = np.arange(1, policy.t_max + 1, dtype=np.float64)[:, None]
    alg = policy.algorithm

    if alg is not Algorithm.ISM:
        for m in range(1, policy.m_max + 1):
            power = t[:, 0] ** (1.0 + 1.0 / m)
            col = cost[:, m - 1]
            for bad in np.nonzero(col > m * power)[0]:
                violations.append(
                    BoundViolation("cost <= m*t^(1+1/m)", int(bad + 1), m, int(col[bad]), float(m * power[bad]))
                )
            for bad in np.nonzero(col >= 4 * power)[0]:
                violations.append(
                    BoundViolation("cost < 4*t^(1+1/m)", int(bad + 1), m, int(col[bad]), float(4 * power[bad]))
                )

    # short-sequence regime: t * a! <= m^a  (exact integer comparison)
    per_step_slack = 1 if alg is not Algorithm.ISM else 0
    for a in range(1, 7):
        fact = math.factorial(a)
        for m in range(1, policy.m_max + 1):
            t_cap = (m**a) // fact
            if t_cap < 1:
                continue
            hi = min(t_cap, policy.t_max)
            col = cost[:hi, m - 1]
            limit = (a + per_step_slack) * np.arange(1, hi + 1, dtype=np.int64)
            for bad in np.nonzero(col > limit)[0]:
                violations.append(
                    BoundViolation(
                        f"cost <= {a + per_step_slack}*t for t <= m^{a}/{a}!",
                        int(bad + 1),
                        m,
                        int(col[bad]),
                        float(limit[bad]),
                    )
                )

    if reference is not None and alg is Algorithm.ISM and reference.algorithm is Algorithm.HSM:
        t_hi = min(policy.t_max, reference.t_max)
        m_hi = min(policy.m_max, reference.m_max)
        mine = policy.cost_table[: t_hi + 1, 1 : m_hi + 1]
        ref = reference.cost_table[: t_hi + 1, 1 : m_hi + 1]
        for tt, mm in np.argwhere(mine > ref):
            violations.append(
                BoundViolation("internal <= hidden pointwise", int(tt), int(mm + 1), int(mine[tt, mm]), float(ref[tt, mm]))
            )
    return violations
