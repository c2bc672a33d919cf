"""Memory-budgeted checkpoint/recompute scheduling for chain backpropagation.

Build provably optimal policy tables for a given sequence length and memory
budget, execute them against any deterministic chain computation with a
bounded checkpoint stack, and compare them against fixed heuristics.
"""

from .baselines import (
    BoundViolation,
    StrategyReport,
    check_bounds,
    chen_recursive,
    chen_sqrt,
    naive_quadratic,
    state_space_oracle,
    store_all_hidden,
)
from .core import (
    Algorithm,
    Backward,
    CapacityError,
    ConfigurationError,
    CostModel,
    ExecutionTrace,
    Forward,
    InfeasibleChainError,
    IntegrityError,
    MemoryBudget,
    OracleLimitError,
    PolicyFormatError,
    PolicyRangeError,
    PolicyTable,
    PolicyValidationError,
    Pop,
    PushHidden,
    PushInternal,
    PushKind,
    RematError,
    deserialize_policy,
    serialize_policy,
)
from .executor import (
    ChainTape,
    CheckpointStack,
    StackEntry,
    execute_hsm,
    execute_ism,
    execute_msm,
    execute_policy,
    trace_execution,
)
from .hetero import (
    ChainSpec,
    HeteroPolicy,
    Layer,
    cumulative_cost,
    feasibility_gate,
    load_chain_spec,
    solve_hetero,
)
from .refchain import (
    RefCell,
    RefChainTape,
    chain_loss,
    full_bptt_reference,
    run_under_policy,
)
from .solvers import SolveRequest, solve, solve_hsm, solve_ism, solve_msm

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "Backward",
    "BoundViolation",
    "CapacityError",
    "ChainSpec",
    "ChainTape",
    "CheckpointStack",
    "ConfigurationError",
    "CostModel",
    "ExecutionTrace",
    "Forward",
    "HeteroPolicy",
    "InfeasibleChainError",
    "IntegrityError",
    "Layer",
    "MemoryBudget",
    "OracleLimitError",
    "PolicyFormatError",
    "PolicyRangeError",
    "PolicyTable",
    "PolicyValidationError",
    "Pop",
    "PushHidden",
    "PushInternal",
    "PushKind",
    "RefCell",
    "RefChainTape",
    "RematError",
    "SolveRequest",
    "StackEntry",
    "StrategyReport",
    "chain_loss",
    "check_bounds",
    "chen_recursive",
    "chen_sqrt",
    "cumulative_cost",
    "deserialize_policy",
    "execute_hsm",
    "execute_ism",
    "execute_msm",
    "execute_policy",
    "feasibility_gate",
    "full_bptt_reference",
    "load_chain_spec",
    "naive_quadratic",
    "run_under_policy",
    "serialize_policy",
    "solve",
    "solve_hetero",
    "solve_hsm",
    "solve_ism",
    "solve_msm",
    "state_space_oracle",
    "store_all_hidden",
    "trace_execution",
]
