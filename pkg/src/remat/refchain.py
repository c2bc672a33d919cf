"""Tiny deterministic recurrent chain for validating executor gradients.

One step is an affine map plus tanh: h_i = tanh(W_h h_{i-1} + W_x x_i + b),
and the step's output is h_i itself with loss sum_i |h_i|^2.  The internal
state of a step is therefore (input hidden, pre-activation, output hidden):
three hidden-sized vectors, so a full internal entry costs 3 units and 2
units when the input hidden is stored elsewhere (alpha = beta + 1).

Forward and backward are pure functions of their arguments, so replaying a
step reproduces bit-identical floats; gradients under any checkpoint policy
must then equal store-everything backpropagation exactly, not just within
tolerance.
"""

from __future__ import annotations

import numpy as np

from .core import Algorithm, CostModel
from .executor import ChainTape, execute_hsm, execute_ism, execute_msm


class RefCell:
    """Seeded affine+tanh recurrent core."""

    def __init__(self, hidden_dim: int = 4, input_dim: int = 3, seed: int = 0, scale: float = 0.6):
        self.hidden_dim = hidden_dim
        self.input_dim = input_dim
        rng = np.random.default_rng(seed)
        self.W_h = scale * rng.standard_normal((hidden_dim, hidden_dim)) / np.sqrt(hidden_dim)
        self.W_x = scale * rng.standard_normal((hidden_dim, input_dim)) / np.sqrt(input_dim)
        self.b = scale * 0.1 * rng.standard_normal(hidden_dim)
        self.h0 = rng.standard_normal(hidden_dim)

    def cost_model(self, backward_ratio=2) -> CostModel:
        """Unit charges implied by this cell's internal state layout."""
        return CostModel(alpha=3, beta=2, backward_ratio=backward_ratio)

    def forward_step(self, x, h):
        h_next = np.tanh(self.W_h @ h + self.W_x @ x + self.b)
        return h_next, h_next  # the output is the new hidden state

    def backward_step(self, x, h_prev, grad_output, grad_hidden):
        h_next = np.tanh(self.W_h @ h_prev + self.W_x @ x + self.b)
        d = (grad_output + grad_hidden) * (1.0 - h_next * h_next)
        return self.W_x.T @ d, self.W_h.T @ d

    def make_inputs(self, t: int, seed: int = 1) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.standard_normal((t, self.input_dim))


class RefChainTape(ChainTape):
    """ChainTape over a RefCell and a fixed input sequence; counts calls."""

    def __init__(self, cell: RefCell, inputs):
        self.cell = cell
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.grad_inputs = [None] * len(self.inputs)
        self.forward_calls = 0
        self.backward_calls = 0

    def __len__(self):
        return len(self.inputs)

    def get_input(self, pos):
        return self.inputs[pos - 1]

    def initial_hidden(self):
        return self.cell.h0

    def forward(self, core, input, hidden):
        self.forward_calls += 1
        return self.cell.forward_step(input, hidden)

    def backward(self, core, input, hidden, grad_output, grad_hidden):
        self.backward_calls += 1
        return self.cell.backward_step(input, hidden, grad_output, grad_hidden)

    def set_output_and_get_grad_output(self, pos, output):
        return 2.0 * output  # loss is sum of squared outputs

    def set_grad_input(self, pos, grad_input):
        if self.grad_inputs[pos - 1] is not None:
            raise AssertionError(f"grad_input at {pos} delivered twice")
        self.grad_inputs[pos - 1] = grad_input


def full_bptt_reference(cell: RefCell, inputs):
    """Store-everything backpropagation: the gradient ground truth.

    Returns (per-step input gradients, gradient w.r.t. the initial hidden
    state).  Uses the same step arithmetic as the tape so policy-driven
    executions must match it exactly in double precision.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    t = len(inputs)
    if t < 1:
        raise ValueError("sequence must be nonempty")
    hiddens = [cell.h0]
    for i in range(t):
        _, h = cell.forward_step(inputs[i], hiddens[-1])
        hiddens.append(h)
    grad_hidden = np.zeros(cell.hidden_dim)
    grads = [None] * t
    for i in range(t, 0, -1):
        grad_output = 2.0 * hiddens[i]
        grads[i - 1], grad_hidden = cell.backward_step(
            inputs[i - 1], hiddens[i - 1], grad_output, grad_hidden
        )
    return grads, grad_hidden


def run_under_policy(cell: RefCell, inputs, policy, budget, model: CostModel | None = None):
    """Execute a checkpoint policy over the chain; same output shape as
    full_bptt_reference."""
    tape = RefChainTape(cell, inputs)
    t = len(tape)
    seed = np.zeros(cell.hidden_dim)
    if policy.algorithm is Algorithm.HSM:
        grad0 = execute_hsm(policy, tape, t, budget, grad_last_hidden=seed)
    elif policy.algorithm is Algorithm.ISM:
        grad0 = execute_ism(policy, tape, t, budget, grad_last_hidden=seed)
    else:
        grad0 = execute_msm(policy, tape, t, budget, model=model, grad_last_hidden=seed)
    return tape.grad_inputs, grad0


def chain_loss(cell: RefCell, inputs, h0=None) -> float:
    """Loss of the chain as a plain function, for finite-difference checks."""
    h = cell.h0 if h0 is None else h0
    total = 0.0
    for x in np.asarray(inputs, dtype=np.float64):
        _, h = cell.forward_step(x, h)
        total += float(h @ h)
    return total
