"""Command-line surface: solve policies, simulate them, emit figure data.

All outputs are deterministic for identical flags: solver ties are fixed,
iteration orders are explicit, and floats are rendered with repr, so CSV
emissions are byte-stable run to run.

Exit codes: 0 success, 2 usage error, 3 out-of-range request,
4 solver capacity exceeded.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction

from .baselines import chen_sqrt
from .core import (
    Algorithm,
    CapacityError,
    CostModel,
    PolicyFormatError,
    PolicyRangeError,
    PolicyValidationError,
    RematError,
    deserialize_policy,
    serialize_policy,
)
from .executor import trace_execution
from .solvers import solve_hsm, solve_ism, solve_msm

DEFAULT_MAX_T = 10000

CSV_COLUMNS = [
    "figure",
    "t",
    "m",
    "algorithm",
    "total_forwards",
    "forwards_per_step",
    "memory_units",
    "simulated_time_per_step",
]

FIGURES = (
    "hsm_cost",
    "ism_cost",
    "msm_cost",
    "strategy_compare",
    "chen_memory_ratio",
    "chen_cost_fixed_memory",
)


class UsageError(RematError):
    pass


def _solver_cap() -> int:
    raw = os.environ.get("REMAT_MAX_T", "")
    try:
        return int(raw) if raw else DEFAULT_MAX_T
    except ValueError:
        return DEFAULT_MAX_T


@dataclass
class CurveRequest:
    """One figure-data request."""

    figure: str
    t_values: list[int]
    m_values: list[int]
    alpha: int = 5
    beta: int = 4
    backward_ratio: Fraction = Fraction(2)
    dedup: bool = False

    def __post_init__(self):
        if self.figure not in FIGURES:
            raise UsageError(f"unknown figure {self.figure!r}")
        if not self.t_values or not self.m_values and not self.figure.startswith("chen"):
            raise UsageError("empty t or m range")
        cap = _solver_cap()
        worst_t = max(self.t_values)
        if worst_t > cap:
            raise CapacityError(
                f"t={worst_t} above solver cap {cap}; raise REMAT_MAX_T to override"
            )


# --- solver cache (per process; keeps figure sweeps cheap) ---


_cache: dict = {}


def _policy(alg: Algorithm, t_max: int, m_max: int, model: CostModel | None = None, dedup=False):
    key = (alg, t_max, m_max, model.alpha if model else None, model.beta if model else None, dedup)
    if key not in _cache:
        if alg is Algorithm.HSM:
            _cache[key] = solve_hsm(t_max, m_max)
        elif alg is Algorithm.ISM:
            _cache[key] = solve_ism(t_max, m_max)
        else:
            _cache[key] = solve_msm(t_max, m_max, model, dedup=dedup)
    return _cache[key]


def _fmt(value) -> str:
    if isinstance(value, Fraction):
        value = float(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _row(figure, t, m, algorithm, forwards, memory_units, ratio):
    return {
        "figure": figure,
        "t": t,
        "m": m,
        "algorithm": algorithm,
        "total_forwards": forwards,
        "forwards_per_step": Fraction(forwards, t),
        "memory_units": memory_units,
        "simulated_time_per_step": Fraction(forwards, t) + ratio,
    }


def build_curves(request: CurveRequest) -> list[dict]:
    """Figure data rows, deterministic order (curve by curve, t ascending)."""
    fig = request.figure
    ratio = request.backward_ratio
    rows = []
    if fig in ("hsm_cost", "ism_cost"):
        alg = Algorithm.HSM if fig == "hsm_cost" else Algorithm.ISM
        t_max = max(request.t_values)
        for m in request.m_values:
            pol = _policy(alg, t_max, m)
            for t in request.t_values:
                rows.append(_row(fig, t, m, alg.value, pol.cost(t, min(m, pol.m_max)), m, ratio))
    elif fig == "msm_cost":
        model = CostModel(request.alpha, request.beta, ratio)
        t_max = max(request.t_values)
        alg = Algorithm.MSM_DEDUP if request.dedup else Algorithm.MSM
        for k in request.m_values:  # k internal states -> alpha*k hidden units
            budget = request.alpha * k
            pol = _policy(alg, t_max, budget, model, request.dedup)
            for t in request.t_values:
                rows.append(_row(fig, t, budget, alg.value, pol.cost(t, budget), budget, ratio))
    elif fig == "strategy_compare":
        model = CostModel(request.alpha, request.beta, ratio)
        t_max = max(request.t_values)
        for k in request.m_values:  # total budget = k internal states
            budget = request.alpha * k
            hsm = _policy(Algorithm.HSM, t_max, budget)
            ism = _policy(Algorithm.ISM, t_max, k)
            msm = _policy(Algorithm.MSM, t_max, budget, model)
            for alg, pol, m in (("hsm", hsm, budget), ("ism", ism, k), ("msm", msm, budget)):
                for t in request.t_values:
                    rows.append(_row(fig, t, m, alg, pol.cost(t, m), m, ratio))
    else:
        rows.extend(_chen_rows(request))
    return rows


def _chen_budget(t: int, beta: int) -> int:
    root = math.isqrt(t)
    if root * root != t:
        raise UsageError(f"chen figures need perfect-square t values, got {t}")
    return root * (1 + beta)


def _chen_rows(request: CurveRequest) -> list[dict]:
    """Comparison against the sqrt(t) heuristic: alpha = beta + 1, dedup on."""
    beta = request.beta
    model = CostModel(beta + 1, beta, request.backward_ratio)
    label = f"msm_dedup(beta={beta})"
    rows = []
    for t in request.t_values:
        budget = _chen_budget(t, beta)
        pol = _policy(Algorithm.MSM_DEDUP, t, budget, model, True)
        if request.figure == "chen_cost_fixed_memory":
            rows.append(
                _row(request.figure, t, budget, label, pol.cost(t, budget), budget, request.backward_ratio)
            )
        else:  # chen_memory_ratio: smallest budget with cost <= 2 forwards/step
            m = _min_budget_at_cost(pol, t, 2 * t)
            rows.append(_row(request.figure, t, m, label, pol.cost(t, m), m, request.backward_ratio))
    return rows


def _min_budget_at_cost(pol, t: int, cost_limit: int) -> int:
    for m in range(1, pol.m_max + 1):
        if pol.cost(t, m) <= cost_limit:
            return m
    raise RematError(
        f"no budget within {pol.m_max} units reaches cost {cost_limit} at t={t}"
    )  # pragma: no cover - the sqrt(t) footprint always suffices


def build_chen_comparison(t_values, beta: int, ratio: Fraction) -> list[dict]:
    """Both comparison modes plus the heuristic's own numbers, per t."""
    model = CostModel(beta + 1, beta, ratio)
    rows = []
    for t in t_values:
        budget = _chen_budget(t, beta)
        pol = _policy(Algorithm.MSM_DEDUP, t, budget, model, True)
        chen = chen_sqrt(t, model)
        rows.append(
            _row("chen_compare", t, chen.memory_units, "chen_sqrt", chen.total_forwards, chen.memory_units, ratio)
        )
        rows.append(
            _row("chen_compare", t, budget, f"msm_fixed_memory(beta={beta})", pol.cost(t, budget), budget, ratio)
        )
        m = _min_budget_at_cost(pol, t, 2 * t)
        rows.append(
            _row("chen_compare", t, m, f"msm_fixed_cost(beta={beta})", pol.cost(t, m), m, ratio)
        )
    return rows


def _write_csv(rows, out_path: str | None):
    def emit(stream):
        writer = csv.DictWriter(stream, CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})

    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as f:
            emit(f)
    else:
        emit(sys.stdout)


# --- subcommand handlers ---


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}")
    if not values:
        raise UsageError(f"{flag} is empty")
    return values


def cmd_solve(args) -> int:
    if args.t < 1 or args.m < 1:
        raise UsageError("--t and --m must be >= 1")
    cap = _solver_cap()
    if args.t > cap or args.m > cap:
        raise CapacityError(f"request above solver cap {cap}; raise REMAT_MAX_T to override")
    alg = Algorithm.from_string(args.alg)
    if alg.mixed or args.dedup:
        model = CostModel(args.alpha, args.beta, Fraction(args.backward_ratio))
        policy = solve_msm(args.t, args.m, model, dedup=args.dedup)
    elif alg is Algorithm.HSM:
        policy = solve_hsm(args.t, args.m)
    else:
        policy = solve_ism(args.t, args.m)
    with open(args.output, "wb") as f:
        f.write(serialize_policy(policy))
    print(
        f"{policy.algorithm.value}: cost(t={args.t}, m={args.m}) = "
        f"{policy.cost(args.t, args.m)} forwards -> {args.output}"
    )
    return 0


def cmd_simulate(args) -> int:
    with open(args.policy, "rb") as f:
        policy = deserialize_policy(f.read())
    trace = trace_execution(policy, args.t, args.m)
    ratio = (
        policy.cost_model.backward_ratio
        if policy.cost_model is not None
        else Fraction(args.backward_ratio)
    )
    sim_time = Fraction(trace.forward_ops) + ratio * trace.backward_ops
    print(f"algorithm: {policy.algorithm.value}")
    print(f"forwards: {trace.forward_ops}")
    print(f"backwards: {trace.backward_ops}")
    print(f"peak_memory_units: {trace.peak_memory_units}")
    print(f"simulated_time: {_fmt(sim_time)}")
    if args.t:
        per_step = Fraction(trace.forward_ops, args.t) + ratio
        print(f"simulated_time_per_step: {_fmt(per_step)}")
    if args.events_csv:
        with open(args.events_csv, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["event", "pos", "dedup"])
            for ev in trace.events:
                writer.writerow([type(ev).__name__, ev.pos, getattr(ev, "dedup", "")])
    return 0


def cmd_curves(args) -> int:
    figure = args.figure
    if figure.startswith("chen"):
        t_values = _parse_int_list(args.t, "--t") if args.t else [16, 64, 256, 1024]
        m_values = [0]
    else:
        t_max = args.t_max
        step = args.t_step
        if t_max < 1 or step < 1:
            raise UsageError("--t-max and --t-step must be >= 1")
        t_values = list(range(1, t_max + 1, step))
        if args.m:
            m_values = _parse_int_list(args.m, "--m")
        elif figure == "strategy_compare":
            m_values = [10, 20]
        elif figure == "msm_cost":
            m_values = [10, 50, 100]
        else:
            m_values = [10, 50, 100, 500, 1000]
    request = CurveRequest(
        figure,
        t_values,
        m_values,
        alpha=args.alpha,
        beta=args.beta,
        backward_ratio=Fraction(args.backward_ratio),
        dedup=args.dedup,
    )
    _write_csv(build_curves(request), args.output)
    return 0


def cmd_compare_chen(args) -> int:
    t_values = _parse_int_list(args.t, "--t") if args.t else [16, 64, 256, 1024]
    cap = _solver_cap()
    if max(t_values) > cap:
        raise CapacityError(f"t above solver cap {cap}; raise REMAT_MAX_T to override")
    rows = build_chen_comparison(t_values, args.beta, Fraction(args.backward_ratio))
    _write_csv(rows, args.output)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="remat",
        description="Optimal checkpoint/recompute schedules for chain backpropagation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="build a policy table and write it to a file")
    p.add_argument("--alg", required=True, choices=["hsm", "ism", "msm"])
    p.add_argument("--t", type=int, required=True, help="maximum sequence length")
    p.add_argument("--m", type=int, required=True, help="memory budget in units")
    p.add_argument("--alpha", type=int, default=2)
    p.add_argument("--beta", type=int, default=1)
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--backward-ratio", default="2")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="dry-run a stored policy at one (t, m)")
    p.add_argument("--policy", required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--backward-ratio", default="2")
    p.add_argument("--events-csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("curves", help="emit CSV data for one cost/memory figure")
    p.add_argument("--figure", required=True, choices=FIGURES)
    p.add_argument("--t-max", type=int, default=1000)
    p.add_argument("--t-step", type=int, default=1)
    p.add_argument("--t", help="explicit t list (chen figures)")
    p.add_argument("--m", help="comma-separated budgets")
    p.add_argument("--alpha", type=int, default=5)
    p.add_argument("--beta", type=int, default=4)
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--backward-ratio", default="2")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("compare-chen", help="fixed-cost and fixed-memory comparison CSV")
    p.add_argument("--t", help="comma-separated perfect-square lengths")
    p.add_argument("--beta", type=int, default=5)
    p.add_argument("--backward-ratio", default="2")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare_chen)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PolicyRangeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except CapacityError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (UsageError, PolicyFormatError, PolicyValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
