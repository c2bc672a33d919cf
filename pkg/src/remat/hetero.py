"""Hidden-state checkpointing for non-homogeneous feed-forward chains.

Layers have individual forward costs u, hidden-state sizes s and working
sizes p, so the tables gain a third axis: cost(t, m, x) covers t layers of
the chain with the bottom x layers cut off, under budget m.  A feasibility
gate prices any forward span whose working size exceeds the current budget
at infinity.

Cell values take the cheaper of: replaying from the base state for every
backward step (no checkpoints; the "naive" option, admissible whenever the
working sizes fit), or storing the hidden state after y more layers and
recursing on both parts, with the stored s_{x+y} units charged to the right
part.  The right part must keep at least one unit of budget; the separately
stored m = 0 plane answers zero-checkpoint queries but never feeds the
recursion, which is exactly what makes the homogeneous chain (u = s = 1,
uniform p) reproduce the hidden-state-only tables identically, boundary
included.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import CapacityError, InfeasibleChainError, PolicyFormatError

DEFAULT_CHAIN_CAP = 512


@dataclass(frozen=True)
class Layer:
    u: float  # forward cost
    s: int    # hidden-state size after this layer, in memory units
    p: int    # working size needed to run this layer

    def __post_init__(self):
        if not (self.u > 0 and self.s > 0 and self.p > 0):
            raise ValueError("layer costs and sizes must be strictly positive")


@dataclass(frozen=True)
class ChainSpec:
    """Ordered description of a heterogeneous chain."""

    layers: tuple[Layer, ...]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("chain must have at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))

    def __len__(self):
        return len(self.layers)

    @classmethod
    def homogeneous(cls, n: int, u: float = 1.0, s: int = 1, p: int = 1) -> "ChainSpec":
        return cls(tuple(Layer(u, s, p) for _ in range(n)))

    @classmethod
    def from_json(cls, text: str | bytes) -> "ChainSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise PolicyFormatError(f"chain file is not valid JSON: {e}") from None
        if isinstance(doc, dict):
            doc = doc.get("layers")
        if not isinstance(doc, list):
            raise PolicyFormatError("chain file must hold a list of layer records")
        layers = []
        for i, rec in enumerate(doc):
            if not isinstance(rec, dict) or not {"u", "s", "p"} <= rec.keys():
                raise PolicyFormatError(f"layer record {i} must carry fields u, s, p")
            layers.append(Layer(float(rec["u"]), int(rec["s"]), int(rec["p"])))
        return cls(tuple(layers))

    def to_json(self) -> str:
        return json.dumps(
            {"layers": [{"u": l.u, "s": l.s, "p": l.p} for l in self.layers]},
            separators=(",", ":"),
        )


def load_chain_spec(path) -> ChainSpec:
    with open(path, "rb") as f:
        return ChainSpec.from_json(f.read())


def cumulative_cost(chain: ChainSpec, x: int, y: int) -> float:
    """Total forward cost of layers x+1 .. x+y."""
    if not (0 <= x and 1 <= y and x + y <= len(chain)):
        raise ValueError(f"span (x={x}, y={y}) outside chain of length {len(chain)}")
    return float(sum(l.u for l in chain.layers[x : x + y]))


def feasibility_gate(chain: ChainSpec, x: int, y: int, m: int) -> float:
    """0 if the largest working size over layers x+1..x+y fits in m, else inf."""
    if not (0 <= x and 1 <= y and x + y <= len(chain)):
        raise ValueError(f"span (x={x}, y={y}) outside chain of length {len(chain)}")
    worst = max(l.p for l in chain.layers[x : x + y])
    return 0.0 if worst <= m else math.inf


class HeteroPolicy:
    """3-D cost/split tables for one chain.

    split(t, m, x) = 0 means "no checkpoint: replay from the base"; y >= 1
    stores the hidden state after layer x+y first.  Queries with m < 0
    return infinity; empty spans (t <= 0 or x + t > N) cost 0.
    """

    def __init__(self, chain: ChainSpec, m_max: int, cost: np.ndarray, split: np.ndarray):
        self.chain = chain
        self.m_max = m_max
        self._cost = cost
        self._split = split
        cost.flags.writeable = False
        split.flags.writeable = False

    def cost(self, t: int, m: int, x: int) -> float:
        if m < 0:
            return math.inf
        if t <= 0 or x + t > len(self.chain):
            return 0.0
        if not (m <= self.m_max and 0 <= x <= len(self.chain)):
            raise ValueError(f"(t={t}, m={m}, x={x}) outside solved tables")
        return float(self._cost[t, m, x])

    def split(self, t: int, m: int, x: int) -> int:
        if t <= 0 or x + t > len(self.chain):
            return 0
        return int(self._split[t, m, x])

    @property
    def cost_table(self) -> np.ndarray:
        return self._cost


def solve_hetero(
    chain: ChainSpec,
    m_max: int,
    chain_cap: int = DEFAULT_CHAIN_CAP,
    force: bool = False,
) -> HeteroPolicy:
    """Build optimal 3-D checkpoint tables for a heterogeneous chain.

    The build is O(N^3 * m_max); chains longer than chain_cap are refused
    unless force=True.  Raises InfeasibleChainError when even the full-chain
    cell is infinite, naming the smallest budget that admits any schedule
    (the largest working size in the chain).
    """
    n = len(chain)
    if m_max < 0:
        raise ValueError("m_max must be >= 0")
    if n > chain_cap and not force:
        raise CapacityError(
            f"chain length {n} above cap {chain_cap}; the build is O(N^3*m). "
            f"Pass force=True to proceed anyway"
        )
    u = np.zeros(n + 1)
    s = np.zeros(n + 1, dtype=np.int64)
    p = np.zeros(n + 1, dtype=np.int64)
    for i, layer in enumerate(chain.layers, start=1):
        u[i], s[i], p[i] = layer.u, layer.s, layer.p
    cum_u = np.cumsum(u)
    cum_s = np.cumsum(s)
    # max_p[x, y]: largest working size over layers x+1 .. x+y
    max_p = np.zeros((n + 1, n + 1), dtype=np.int64)
    for x in range(n):
        np.maximum.accumulate(p[x + 1 :], out=max_p[x, 1 : n - x + 1])

    cost = np.zeros((n + 1, m_max + 1, n + 1))
    split = np.zeros((n + 1, m_max + 1, n + 1), dtype=np.int64)
    # zero-checkpoint plane: each backward step replays from the base
    for x in range(n):
        acc = 0.0
        for t in range(1, n - x + 1):
            acc += cum_u[x + t] - cum_u[x]
            cost[t, 0, x] = acc

    ys_all = np.arange(1, n + 1)
    for m in range(1, m_max + 1):
        for t in range(1, n + 1):
            for x in range(0, n - t + 1):
                span_u = cum_u[x + t] - cum_u[x]
                if m >= (cum_s[x + t] - cum_s[x]) + max_p[x, t]:
                    # every hidden state plus the working layer fit at once
                    cost[t, m, x] = 2.0 * span_u - u[x + t]
                    split[t, m, x] = 1 if t >= 2 else 0
                    continue
                naive = cost[t, 0, x] if max_p[x, t] <= m else math.inf
                best, best_y = naive, 0
                if t >= 2:
                    ys = ys_all[: t - 1]
                    u_vec = cum_u[x + 1 : x + t] - cum_u[x]
                    gate = np.where(max_p[x, 1:t] <= m, 0.0, math.inf)
                    m_rem = m - s[x + 1 : x + t]
                    rights = np.where(
                        m_rem >= 1,
                        cost[t - ys, np.maximum(m_rem, 1), x + ys],
                        math.inf,
                    )
                    q = u_vec + gate + rights + cost[1:t, m, x]
                    i = int(np.argmin(q))
                    if q[i] < best:
                        best, best_y = float(q[i]), i + 1
                cost[t, m, x] = best
                split[t, m, x] = best_y

    if not math.isfinite(cost[n, m_max, 0]):
        raise InfeasibleChainError(int(p[1:].max()))
    return HeteroPolicy(chain, m_max, cost, split)
