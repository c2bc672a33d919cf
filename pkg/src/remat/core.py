"""Shared domain types for checkpoint/recompute scheduling.

A policy table prescribes, for every (remaining sequence length t, memory
budget m), where the next checkpoint goes and what kind of state it stores.
Costs count forward operations only; backward steps happen exactly once per
position regardless of policy, so they never influence the optimum.

Memory is accounted in hidden-state units: a hidden state occupies 1 unit,
a full internal state ``alpha`` units, and ``beta`` units when its input
hidden state is already stored elsewhere.  The single working core used for
recomputation and the input sequence are outside the budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from fractions import Fraction

import numpy as np

# Internal infinity sentinel for integer cost arrays.  Large enough to
# dominate any real cost, small enough that sums of two never overflow
# int64.  Never exposed: the public API reports math.inf, files use -1.
INF = 1 << 61


class RematError(Exception):
    """Base class for all errors raised by this package."""


class PolicyFormatError(RematError):
    """Policy document is malformed (bad JSON, missing/ill-typed field)."""


class PolicyValidationError(RematError):
    """Policy document parsed but violates a table invariant."""


class ConfigurationError(RematError):
    """Executor invoked with an unusable budget or mismatched cost model."""


class PolicyRangeError(RematError):
    """Requested (t, m) lies outside the policy table."""


class CapacityError(RematError):
    """Request exceeds a configured solver size cap."""


class OracleLimitError(RematError):
    """Exhaustive search refused: instance above the tractability caps."""


class IntegrityError(RematError):
    """Recomputed state differs from its checksum: nondeterministic tape."""


class InfeasibleChainError(RematError):
    """No schedule fits the budget; carries the smallest admissible budget."""

    def __init__(self, min_feasible_m: int):
        self.min_feasible_m = min_feasible_m
        super().__init__(
            f"chain infeasible at this budget; smallest admissible m is {min_feasible_m}"
        )


class Algorithm(str, Enum):
    HSM = "hsm"                # memorize hidden states only
    ISM = "ism"                # memorize internal states only
    MSM = "msm"                # optimal mixture
    MSM_DEDUP = "msm_dedup"    # mixture, input-hidden dedup enabled

    @classmethod
    def from_string(cls, name: str) -> "Algorithm":
        try:
            return cls(name.lower())
        except ValueError:
            raise PolicyFormatError(f"unknown algorithm {name!r}") from None

    @property
    def mixed(self) -> bool:
        return self in (Algorithm.MSM, Algorithm.MSM_DEDUP)


class PushKind(IntEnum):
    """What the next memorization stores.  0 is reserved for 'none'."""

    HIDDEN = 1
    INTERNAL = 2


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(value).limit_denominator(10**9)


@dataclass(frozen=True)
class CostModel:
    """Memory charges and the simulated backward/forward cost ratio.

    alpha: units taken by one internal state.
    beta:  units taken by an internal state whose input hidden state is
           stored elsewhere (dedup); beta <= alpha.
    backward_ratio: simulated cost of one backward step, in forward units.
    """

    alpha: int = 2
    beta: int = 1
    backward_ratio: Fraction = Fraction(2)

    def __post_init__(self):
        object.__setattr__(self, "backward_ratio", _as_fraction(self.backward_ratio))
        if not (isinstance(self.alpha, int) and self.alpha >= 2):
            raise ValueError("alpha must be an integer >= 2")
        if not (isinstance(self.beta, int) and 1 <= self.beta <= self.alpha):
            raise ValueError("beta must be an integer in [1, alpha]")
        if self.backward_ratio <= 0:
            raise ValueError("backward_ratio must be positive")


@dataclass(frozen=True)
class MemoryBudget:
    """Checkpoint capacity in hidden-state units."""

    units: int

    def __post_init__(self):
        if not (isinstance(self.units, int) and self.units >= 1):
            raise ValueError("budget must be an integer >= 1")


def as_budget_units(budget) -> int:
    """Accept a MemoryBudget or a plain positive int."""
    if isinstance(budget, MemoryBudget):
        return budget.units
    return MemoryBudget(budget).units


# --- execution trace -------------------------------------------------------


@dataclass(frozen=True)
class PushHidden:
    pos: int


@dataclass(frozen=True)
class PushInternal:
    pos: int
    dedup: bool = False


@dataclass(frozen=True)
class Pop:
    pos: int


@dataclass(frozen=True)
class Forward:
    pos: int


@dataclass(frozen=True)
class Backward:
    pos: int


TraceEvent = PushHidden | PushInternal | Pop | Forward | Backward


@dataclass
class ExecutionTrace:
    """Operation counts and the push/pop event log of one execution.

    peak_memory_units counts stack entries only (the working core is free);
    units follow the policy's accounting (internal-state slots for ISM,
    hidden-state units otherwise).
    """

    forward_ops: int = 0
    backward_ops: int = 0
    peak_memory_units: int = 0
    events: list = field(default_factory=list)


# --- policy table ----------------------------------------------------------

FORMAT_VERSION = 1


class PolicyTable:
    """Immutable solver output: cost and split tables indexed by (t, m).

    Rows cover t = 0..t_max; columns cover m = 1..m_max.  Mixed policies
    additionally carry split_hidden/split_internal/kind tables and the cost
    model they were solved under.  Split value 0 means "not applicable"
    (cells the executor never consults).
    """

    def __init__(
        self,
        algorithm: Algorithm,
        t_max: int,
        m_max: int,
        cost: np.ndarray,
        split: np.ndarray | None = None,
        split_hidden: np.ndarray | None = None,
        split_internal: np.ndarray | None = None,
        kind: np.ndarray | None = None,
        cost_model: CostModel | None = None,
    ):
        self.algorithm = Algorithm(algorithm)
        self.t_max = int(t_max)
        self.m_max = int(m_max)
        self._cost = self._freeze("cost", cost)
        if self.algorithm.mixed:
            if split_hidden is None or split_internal is None or kind is None:
                raise PolicyValidationError(
                    "mixed policy requires split_hidden, split_internal and kind tables"
                )
            if cost_model is None:
                raise PolicyValidationError("mixed policy requires a cost model")
            self._split_hidden = self._freeze("split_hidden", split_hidden)
            self._split_internal = self._freeze("split_internal", split_internal)
            self._kind = self._freeze("kind", kind)
            self._split = None
        else:
            if split is None:
                raise PolicyValidationError("policy requires a split table")
            self._split = self._freeze("split", split)
            self._split_hidden = self._split_internal = self._kind = None
        self.cost_model = cost_model
        self.validate()

    def _freeze(self, name: str, arr) -> np.ndarray:
        a = np.asarray(arr, dtype=np.int64)
        if a.shape != (self.t_max + 1, self.m_max + 1):
            raise PolicyValidationError(
                f"{name} table has shape {a.shape}, expected "
                f"{(self.t_max + 1, self.m_max + 1)}"
            )
        a = a.copy()
        a.flags.writeable = False
        return a

    # -- accessors (m is 1-based; column 0 is internal padding) --

    def _check_range(self, t: int, m: int):
        if not (0 <= t <= self.t_max and 1 <= m <= self.m_max):
            raise PolicyRangeError(
                f"(t={t}, m={m}) outside table (t_max={self.t_max}, m_max={self.m_max})"
            )

    def cost(self, t: int, m: int):
        """Minimal total forward ops for length t under budget m."""
        self._check_range(t, m)
        c = int(self._cost[t, m])
        return math.inf if c >= INF else c

    def split(self, t: int, m: int) -> int:
        self._check_range(t, m)
        if self._split is None:
            raise PolicyRangeError("mixed policy has no single split table")
        return int(self._split[t, m])

    def split_hidden(self, t: int, m: int) -> int:
        self._check_range(t, m)
        return int(self._split_hidden[t, m])

    def split_internal(self, t: int, m: int) -> int:
        self._check_range(t, m)
        return int(self._split_internal[t, m])

    def kind(self, t: int, m: int) -> PushKind:
        self._check_range(t, m)
        return PushKind(int(self._kind[t, m]))

    @property
    def cost_table(self) -> np.ndarray:
        """Read-only (t_max+1, m_max+1) int64 array; column 0 is padding."""
        return self._cost

    @property
    def split_table(self) -> np.ndarray:
        return self._split

    @property
    def kind_table(self) -> np.ndarray:
        return self._kind

    def covers(self, t: int, m: int) -> bool:
        return 0 <= t <= self.t_max and 1 <= m <= self.m_max

    # -- equality / repr --

    def __eq__(self, other):
        if not isinstance(other, PolicyTable):
            return NotImplemented
        if (
            self.algorithm != other.algorithm
            or self.t_max != other.t_max
            or self.m_max != other.m_max
            or self.cost_model != other.cost_model
        ):
            return False
        mine = (self._cost, self._split, self._split_hidden, self._split_internal, self._kind)
        theirs = (other._cost, other._split, other._split_hidden, other._split_internal, other._kind)
        for a, b in zip(mine, theirs):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True

    def __hash__(self):
        return hash((self.algorithm, self.t_max, self.m_max))

    def __repr__(self):
        return (
            f"PolicyTable({self.algorithm.value}, t_max={self.t_max}, "
            f"m_max={self.m_max})"
        )

    # -- invariant validation --

    def validate(self):
        """Check table invariants; raises PolicyValidationError on failure."""
        c = self._cost[:, 1:]           # t rows, m columns 1..m_max
        t = np.arange(self.t_max + 1)
        if np.any(c < 0):
            raise PolicyValidationError("cost contains negative entries")
        if np.any(self._cost[0, 1:] != 0):
            raise PolicyValidationError("cost(0, m) must be 0")
        # nonincreasing in m, nondecreasing in t (INF sentinel sorts last)
        if self.m_max >= 2 and np.any(c[:, 1:] > c[:, :-1]):
            bad = np.argwhere(c[:, 1:] > c[:, :-1])[0]
            raise PolicyValidationError(
                f"cost(t={bad[0]}, m={bad[1] + 2}) exceeds cost at m={bad[1] + 1}"
            )
        if self.t_max >= 1:
            # INF sentinel is numerically huge, so plain comparison is right
            grow = c[1:] < c[:-1]
            if np.any(grow):
                bad = np.argwhere(grow)[0]
                raise PolicyValidationError(
                    f"cost(t={bad[0] + 1}, m={bad[1] + 1}) below cost at t={bad[0]}"
                )
        tri = t * (t + 1) // 2
        alg = self.algorithm
        if alg in (Algorithm.HSM, Algorithm.ISM):
            if np.any(self._cost[:, 1] != tri):
                raise PolicyValidationError("cost(t, 1) must equal t(t+1)/2")
        tt, mm = np.meshgrid(t, np.arange(1, self.m_max + 1), indexing="ij")
        if alg is Algorithm.HSM:
            plentiful = (mm >= tt) & (tt >= 1)
            if np.any(c[plentiful] != (2 * tt - 1)[plentiful]):
                raise PolicyValidationError("cost(t, m>=t) must equal 2t-1")
        elif alg is Algorithm.ISM:
            plentiful = (mm >= tt) & (tt >= 1)
            if np.any(c[plentiful] != tt[plentiful]):
                raise PolicyValidationError("cost(t, m>=t) must equal t")
        else:
            plentiful = (mm >= self.cost_model.alpha * tt) & (tt >= 1)
            if np.any(c[plentiful] != tt[plentiful]):
                raise PolicyValidationError("cost(t, m>=alpha*t) must equal t")
        self._validate_splits(tt, mm)

    def _validate_splits(self, tt, mm):
        alg = self.algorithm
        if alg is Algorithm.HSM:
            d = self._split[:, 1:]
            applicable = tt >= 2
            if np.any((d[applicable] < 1) | (d[applicable] >= tt[applicable])):
                raise PolicyValidationError("split out of range [1, t) somewhere")
            if np.any(d[~applicable] != 0):
                raise PolicyValidationError("split must be 0 for t <= 1")
        elif alg is Algorithm.ISM:
            d = self._split[:, 1:]
            applicable = tt >= 1
            if np.any((d[applicable] < 1) | (d[applicable] > tt[applicable])):
                raise PolicyValidationError("split out of range [1, t] somewhere")
            if np.any(d[0] != 0):
                raise PolicyValidationError("split must be 0 at t = 0")
        else:
            d1 = self._split_hidden[:, 1:]
            d2 = self._split_internal[:, 1:]
            k = self._kind[:, 1:]
            applicable = tt >= 1
            if np.any((d2[applicable] < 1) | (d2[applicable] > tt[applicable])):
                raise PolicyValidationError("split_internal out of range [1, t]")
            ok1 = (d1 == 0) | ((d1 >= 1) & (d1 < tt))
            if np.any(~ok1[applicable]):
                raise PolicyValidationError("split_hidden out of range [1, t)")
            if np.any(~np.isin(k, (0, 1, 2))):
                raise PolicyValidationError("kind contains values outside {0, 1, 2}")
            if np.any(k[applicable] == 0):
                raise PolicyValidationError("kind missing where t >= 1")
            if np.any((k == PushKind.HIDDEN) & (d1 == 0)):
                raise PolicyValidationError("kind is hidden but split_hidden unset")


# --- serialization ---------------------------------------------------------


def _table_to_rows(arr: np.ndarray) -> list:
    """Row-major lists over columns m = 1..m_max, with -1 for infinity."""
    out = arr[:, 1:].copy()
    out[out >= INF] = -1
    return out.tolist()


def _rows_to_table(rows, t_max: int, m_max: int, name: str) -> np.ndarray:
    try:
        a = np.asarray(rows, dtype=np.int64)
    except (ValueError, TypeError):
        raise PolicyFormatError(f"field {name!r} is not a rectangular integer table") from None
    if a.ndim != 2 or a.shape != (t_max + 1, m_max):
        raise PolicyFormatError(
            f"field {name!r} has shape {a.shape}, expected {(t_max + 1, m_max)}"
        )
    full = np.full((t_max + 1, m_max + 1), INF, dtype=np.int64)
    full[:, 1:] = a
    full[:, 1:][a == -1] = INF
    full[:, 0] = 0 if name != "cost" else INF
    full[0, 0] = 0
    return full


def serialize_policy(policy: PolicyTable) -> bytes:
    """Encode a policy as a self-describing JSON document (UTF-8 bytes)."""
    doc: dict = {
        "version": FORMAT_VERSION,
        "algorithm": policy.algorithm.value,
        "t_max": policy.t_max,
        "m_max": policy.m_max,
        "alpha": policy.cost_model.alpha if policy.cost_model else None,
        "beta": policy.cost_model.beta if policy.cost_model else None,
        "backward_ratio": str(policy.cost_model.backward_ratio) if policy.cost_model else None,
        "cost": _table_to_rows(policy.cost_table),
    }
    if policy.algorithm.mixed:
        doc["split_hidden"] = _table_to_rows(policy._split_hidden)
        doc["split_internal"] = _table_to_rows(policy._split_internal)
        doc["kind"] = _table_to_rows(policy._kind)
    else:
        doc["split"] = _table_to_rows(policy._split)
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def _require(doc: dict, name: str, types) -> object:
    if name not in doc:
        raise PolicyFormatError(f"missing field {name!r}")
    value = doc[name]
    if not isinstance(value, types):
        raise PolicyFormatError(f"field {name!r} has wrong type {type(value).__name__}")
    return value


def deserialize_policy(data: bytes | str) -> PolicyTable:
    """Parse and validate a policy document produced by serialize_policy."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise PolicyFormatError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise PolicyFormatError("document root must be an object")
    version = _require(doc, "version", int)
    if version != FORMAT_VERSION:
        raise PolicyFormatError(f"unsupported format version {version}")
    algorithm = Algorithm.from_string(_require(doc, "algorithm", str))
    t_max = _require(doc, "t_max", int)
    m_max = _require(doc, "m_max", int)
    if t_max < 1 or m_max < 1:
        raise PolicyFormatError("t_max and m_max must be positive")
    cost = _rows_to_table(_require(doc, "cost", list), t_max, m_max, "cost")
    model = None
    if doc.get("alpha") is not None:
        ratio = doc.get("backward_ratio")
        model = CostModel(
            alpha=_require(doc, "alpha", int),
            beta=_require(doc, "beta", int),
            backward_ratio=Fraction(ratio) if ratio is not None else Fraction(2),
        )
    if algorithm.mixed:
        if model is None:
            raise PolicyFormatError("missing field 'alpha' (required for mixed policies)")
        return PolicyTable(
            algorithm,
            t_max,
            m_max,
            cost,
            split_hidden=_rows_to_table(_require(doc, "split_hidden", list), t_max, m_max, "split_hidden"),
            split_internal=_rows_to_table(_require(doc, "split_internal", list), t_max, m_max, "split_internal"),
            kind=_rows_to_table(_require(doc, "kind", list), t_max, m_max, "kind"),
            cost_model=model,
        )
    return PolicyTable(
        algorithm,
        t_max,
        m_max,
        cost,
        split=_rows_to_table(_require(doc, "split", list), t_max, m_max, "split"),
        cost_model=model,
    )
