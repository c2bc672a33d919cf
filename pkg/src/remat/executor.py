"""Execute checkpoint policies against a concrete chain computation.

The executor walks the policy tables recursively: run forward to the split
position, store what the policy says, finish the right part under the
reduced budget, then the left part with the slot returned.  Gradients come
out identical to store-everything backpropagation because every position's
backward step sees bit-identical inputs; only the recomputation schedule
differs.

Positions are 1-based: step i consumes input i and hidden state i-1 and
produces output i and hidden state i.  The initial hidden state (position
0) is a free, always-available checkpoint and never counts against the
budget.  Outputs are surrendered to the tape at the moment a position's
backward step runs, exactly once per position, in decreasing position
order.
"""

from __future__ import annotations

import hashlib
import pickle
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

from .core import (
    Algorithm,
    Backward,
    ConfigurationError,
    CostModel,
    ExecutionTrace,
    Forward,
    IntegrityError,
    MemoryBudget,
    PolicyRangeError,
    PolicyTable,
    Pop,
    PushHidden,
    PushInternal,
    PushKind,
    RematError,
    as_budget_units,
)


class ChainTape(ABC):
    """Host-supplied view of one chain computation.

    forward must be deterministic: recomputation regenerates states by
    replaying it, so equal (input, hidden) must yield equal outputs.
    """

    @abstractmethod
    def get_input(self, pos: int):
        """Input consumed by the step at 1-based position pos."""

    @abstractmethod
    def initial_hidden(self):
        """Hidden state entering position 1."""

    @abstractmethod
    def forward(self, core, input, hidden):
        """Run one step; returns (output, next_hidden)."""

    @abstractmethod
    def backward(self, core, input, hidden, grad_output, grad_hidden):
        """Backpropagate one step; returns (grad_input, grad_prev_hidden)."""

    @abstractmethod
    def set_output_and_get_grad_output(self, pos: int, output):
        """Surrender the output at pos; returns the loss gradient w.r.t. it."""

    @abstractmethod
    def set_grad_input(self, pos: int, grad_input):
        """Receive the gradient w.r.t. the input at pos."""


@dataclass
class StackEntry:
    """One stored checkpoint.  Hidden entries keep a hidden state; internal
    entries keep whatever one backward step needs (minus the input hidden
    state when has_input_hidden is False -- it is then recovered from the
    entry below, which is what the dedup charge beta pays for)."""

    pos: int
    kind: PushKind
    charge: int
    hidden: object = None
    in_hidden: object = None
    output: object = None
    out_hidden: object = None
    has_input_hidden: bool = True

    @property
    def exit_hidden(self):
        return self.hidden if self.kind is PushKind.HIDDEN else self.out_hidden


class CheckpointStack:
    """LIFO checkpoint store with unit accounting and peak tracking."""

    def __init__(self, capacity_units: int):
        self.capacity = capacity_units
        self.entries: list[StackEntry] = []
        self.occupancy = 0
        self.peak = 0

    def push(self, entry: StackEntry):
        if self.entries and entry.pos <= self.entries[-1].pos:
            raise RematError(
                f"push at {entry.pos} below stack top {self.entries[-1].pos}"
            )
        if self.occupancy + entry.charge > self.capacity:
            raise ConfigurationError(
                f"stack occupancy {self.occupancy + entry.charge} would exceed "
                f"capacity {self.capacity}"
            )
        self.entries.append(entry)
        self.occupancy += entry.charge
        self.peak = max(self.peak, self.occupancy)

    def pop(self) -> StackEntry:
        entry = self.entries.pop()
        self.occupancy -= entry.charge
        return entry

    @property
    def top(self) -> StackEntry | None:
        return self.entries[-1] if self.entries else None


def _digest(obj) -> bytes:
    try:
        data = pickle.dumps(obj, protocol=4)
    except Exception:
        data = repr(obj).encode()
    return hashlib.blake2b(data, digest_size=16).digest()


class _MachineBase:
    """Bookkeeping shared by the real executor and the dry-run tracer."""

    def __init__(self, capacity: int, t: int):
        self.stack = CheckpointStack(capacity)
        self.trace = ExecutionTrace()
        self._next_backward = t

    def _top_pos(self) -> int:
        return self.stack.entries[-1].pos if self.stack.entries else 0

    def _note_forward(self, pos: int):
        self.trace.forward_ops += 1
        self.trace.events.append(Forward(pos))

    def _note_backward(self, pos: int):
        if pos != self._next_backward:
            raise RematError(
                f"backward at {pos}, expected {self._next_backward}"
            )
        self._next_backward -= 1
        self.trace.backward_ops += 1
        self.trace.events.append(Backward(pos))

    def pop(self):
        entry = self.stack.pop()
        self.trace.events.append(Pop(entry.pos))

    def finish(self) -> ExecutionTrace:
        if self._next_backward != 0:
            raise RematError(
                f"execution incomplete: frontier stopped at {self._next_backward}"
            )
        self.trace.peak_memory_units = self.stack.peak
        return self.trace


class _TraceMachine(_MachineBase):
    """Counts operations and stack motion without touching any tape."""

    def _run(self, y: int) -> int:
        base = self._top_pos()
        for i in range(1, y + 1):
            self._note_forward(base + i)
        return base + y

    def run_and_push_hidden(self, y: int):
        pos = self._run(y)
        self.stack.push(StackEntry(pos, PushKind.HIDDEN, 1))
        self.trace.events.append(PushHidden(pos))

    def run_and_push_internal(self, y: int, charge: int, dedup: bool):
        pos = self._run(y)
        self.stack.push(
            StackEntry(pos, PushKind.INTERNAL, charge, has_input_hidden=not dedup)
        )
        self.trace.events.append(PushInternal(pos, dedup))

    def run_and_backward(self, y: int, grad):
        pos = self._run(y)
        self._note_backward(pos)
        return grad

    def backward_stored(self, grad):
        entry = self.stack.top
        self._note_backward(entry.pos)
        self.pop()
        return grad


class _RealMachine(_MachineBase):
    """Drives a ChainTape; identical control path to the trace machine."""

    def __init__(self, tape: ChainTape, core, capacity: int, t: int, checksum: bool):
        super().__init__(capacity, t)
        self.tape = tape
        self.core = core
        self.base_hidden = tape.initial_hidden()
        self._checksums: dict[int, bytes] | None = {} if checksum else None
        if checksum:
            self._checksums[0] = _digest(self.base_hidden)

    def _top_hidden(self):
        top = self.stack.top
        return top.exit_hidden if top is not None else self.base_hidden

    def _check_state(self, pos: int, hidden):
        if self._checksums is None:
            return
        d = _digest(hidden)
        seen = self._checksums.get(pos)
        if seen is None:
            self._checksums[pos] = d
        elif seen != d:
            raise IntegrityError(
                f"recomputed hidden state at position {pos} differs from the "
                f"previously observed one; tape.forward is not deterministic"
            )

    def _run(self, y: int):
        """Forward y steps from the stack top; returns the last step's
        (pos, input, in_hidden, output, out_hidden)."""
        base = self._top_pos()
        h = self._top_hidden()
        last = None
        for i in range(1, y + 1):
            pos = base + i
            x = self.tape.get_input(pos)
            out, h_next = self.tape.forward(self.core, x, h)
            self._note_forward(pos)
            self._check_state(pos, h_next)
            if i == y:
                last = (pos, x, h, out, h_next)
            h = h_next
        return last

    def _backward_at(self, pos, x, in_hidden, output, grad):
        grad_out = self.tape.set_output_and_get_grad_output(pos, output)
        grad_in, grad_prev = self.tape.backward(self.core, x, in_hidden, grad_out, grad)
        self.tape.set_grad_input(pos, grad_in)
        self._note_backward(pos)
        return grad_prev

    def run_and_push_hidden(self, y: int):
        pos, _x, _h, _out, h_next = self._run(y)
        self.stack.push(StackEntry(pos, PushKind.HIDDEN, 1, hidden=h_next))
        self.trace.events.append(PushHidden(pos))

    def run_and_push_internal(self, y: int, charge: int, dedup: bool):
        pos, x, h, out, h_next = self._run(y)
        self.stack.push(
            StackEntry(
                pos,
                PushKind.INTERNAL,
                charge,
                in_hidden=None if dedup else h,
                output=out,
                out_hidden=h_next,
                has_input_hidden=not dedup,
            )
        )
        self.trace.events.append(PushInternal(pos, dedup))

    def run_and_backward(self, y: int, grad):
        pos, x, h, out, _h_next = self._run(y)
        return self._backward_at(pos, x, h, out, grad)

    def backward_stored(self, grad):
        entry = self.stack.top
        if entry is None or entry.kind is not PushKind.INTERNAL:
            raise RematError("stored-backward with no internal entry on top")
        if entry.has_input_hidden:
            in_hidden = entry.in_hidden
        else:
            below = self.stack.entries[-2] if len(self.stack.entries) > 1 else None
            in_hidden = below.exit_hidden if below is not None else self.base_hidden
        x = self.tape.get_input(entry.pos)
        grad_prev = self._backward_at(entry.pos, x, in_hidden, entry.output, grad)
        self.pop()
        return grad_prev


def _walk(policy: PolicyTable, machine, t: int, m: int, grad):
    """Recurse on the policy tables.  Left parts are handled iteratively so
    stack depth is bounded by the memory budget, not the sequence length."""
    alg = policy.algorithm
    model = policy.cost_model
    while t > 0:
        if alg is Algorithm.HSM:
            if t == 1:
                return machine.run_and_backward(1, grad)
            y = policy.split(t, m)
            machine.run_and_push_hidden(y)
            grad = _walk(policy, machine, t - y, m - 1, grad)
            machine.pop()
            t = y
        elif alg is Algorithm.ISM:
            y = policy.split(t, m)
            machine.run_and_push_internal(y, charge=1, dedup=False)
            grad = _walk(policy, machine, t - y, m - 1, grad)
            grad = machine.backward_stored(grad)
            t = y - 1
        elif policy.kind(t, m) is PushKind.HIDDEN:
            y = policy.split_hidden(t, m)
            machine.run_and_push_hidden(y)
            grad = _walk(policy, machine, t - y, m - 1, grad)
            machine.pop()
            t = y
        else:
            y = policy.split_internal(t, m)
            if y == t:
                # run to the frontier and backpropagate off the working core
                grad = machine.run_and_backward(t, grad)
                t -= 1
                continue
            dedup = alg is Algorithm.MSM_DEDUP and y == 1
            charge = model.beta if dedup else model.alpha
            machine.run_and_push_internal(y, charge=charge, dedup=dedup)
            grad = _walk(policy, machine, t - y, m - charge, grad)
            grad = machine.backward_stored(grad)
            t = y - 1
    return grad


def _check_request(policy: PolicyTable, expected: tuple, t: int, budget) -> int:
    units = as_budget_units(budget)
    if policy.algorithm not in expected:
        raise ConfigurationError(
            f"policy is {policy.algorithm.value}, expected one of "
            f"{[a.value for a in expected]}"
        )
    if units < 1:
        raise ConfigurationError("budget must be >= 1")
    if t < 0:
        raise ConfigurationError("t must be >= 0")
    if t > 0 and not policy.covers(t, units):
        raise PolicyRangeError(
            f"policy covers t<={policy.t_max}, m<={policy.m_max}; "
            f"got (t={t}, m={units})"
        )
    return units


def execute_hsm(
    policy: PolicyTable,
    tape: ChainTape,
    t: int,
    budget: MemoryBudget | int,
    core=None,
    grad_last_hidden=None,
    checksum: bool = False,
    trace_out: ExecutionTrace | None = None,
):
    """Run a hidden-state policy against a tape; returns the gradient with
    respect to the initial hidden state.  grad_last_hidden seeds the
    recursion (gradient w.r.t. the final hidden state); t = 0 returns it
    unchanged.  With checksum=True, recomputed states are verified against
    first observation and a nondeterministic tape raises IntegrityError."""
    units = _check_request(policy, (Algorithm.HSM,), t, budget)
    return _execute(policy, tape, t, units, core, grad_last_hidden, checksum, trace_out)


def execute_ism(
    policy: PolicyTable,
    tape: ChainTape,
    t: int,
    budget: MemoryBudget | int,
    core=None,
    grad_last_hidden=None,
    checksum: bool = False,
    trace_out: ExecutionTrace | None = None,
):
    """Run an internal-state policy; budget counts internal-state slots."""
    units = _check_request(policy, (Algorithm.ISM,), t, budget)
    return _execute(policy, tape, t, units, core, grad_last_hidden, checksum, trace_out)


def execute_msm(
    policy: PolicyTable,
    tape: ChainTape,
    t: int,
    budget: MemoryBudget | int,
    model: CostModel | None = None,
    core=None,
    grad_last_hidden=None,
    checksum: bool = False,
    trace_out: ExecutionTrace | None = None,
):
    """Run a mixed policy; budget is in hidden-state units.  A model passed
    here must agree with the one the policy was solved under."""
    units = _check_request(policy, (Algorithm.MSM, Algorithm.MSM_DEDUP), t, budget)
    if model is not None and (
        model.alpha != policy.cost_model.alpha or model.beta != policy.cost_model.beta
    ):
        raise ConfigurationError(
            f"cost model (alpha={model.alpha}, beta={model.beta}) does not match "
            f"policy (alpha={policy.cost_model.alpha}, beta={policy.cost_model.beta})"
        )
    return _execute(policy, tape, t, units, core, grad_last_hidden, checksum, trace_out)


def execute_policy(policy, tape, t, budget, **kwargs):
    """Dispatch to the right execute_* entry point for the policy."""
    if policy.algorithm is Algorithm.HSM:
        return execute_hsm(policy, tape, t, budget, **kwargs)
    if policy.algorithm is Algorithm.ISM:
        return execute_ism(policy, tape, t, budget, **kwargs)
    return execute_msm(policy, tape, t, budget, **kwargs)


def _execute(policy, tape, t, units, core, grad, checksum, trace_out):
    machine = _RealMachine(tape, core, units, t, checksum)
    result = _walk(policy, machine, t, units, grad)
    trace = machine.finish()
    if trace_out is not None:
        trace_out.forward_ops = trace.forward_ops
        trace_out.backward_ops = trace.backward_ops
        trace_out.peak_memory_units = trace.peak_memory_units
        trace_out.events = trace.events
    return result


def trace_execution(
    policy: PolicyTable,
    t: int,
    budget: MemoryBudget | int,
    model: CostModel | None = None,
) -> ExecutionTrace:
    """Dry-run a policy without a tape: same control path as execution,
    returning operation counts, peak stack occupancy and the event log."""
    units = as_budget_units(budget)
    if units < 1:
        raise ConfigurationError("budget must be >= 1")
    if t > 0 and not policy.covers(t, units):
        raise PolicyRangeError(
            f"policy covers t<={policy.t_max}, m<={policy.m_max}; "
            f"got (t={t}, m={units})"
        )
    if model is not None and policy.cost_model is not None and (
        model.alpha != policy.cost_model.alpha or model.beta != policy.cost_model.beta
    ):
        raise ConfigurationError("cost model does not match the policy")
    machine = _TraceMachine(units, t)
    _walk(policy, machine, t, units, None)
    return machine.finish()
