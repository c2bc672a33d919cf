"""Reference chain: gradient ground truth and policy-execution equality."""

import numpy as np
import pytest

from remat import (
    CostModel,
    RefCell,
    RefChainTape,
    chain_loss,
    full_bptt_reference,
    run_under_policy,
    solve_hsm,
    solve_ism,
    solve_msm,
)


def _fd_grad_h0(cell, inputs, eps=1e-6):
    g = np.zeros(cell.hidden_dim)
    for j in range(cell.hidden_dim):
        e = np.zeros(cell.hidden_dim)
        e[j] = eps
        g[j] = (
            chain_loss(cell, inputs, cell.h0 + e) - chain_loss(cell, inputs, cell.h0 - e)
        ) / (2 * eps)
    return g


def test_reference_gradient_matches_finite_differences():
    cell = RefCell()
    inputs = cell.make_inputs(32)
    _, grad_h0 = full_bptt_reference(cell, inputs)
    fd = _fd_grad_h0(cell, inputs)
    rel = np.linalg.norm(fd - grad_h0) / np.linalg.norm(grad_h0)
    assert rel < 1e-5


def test_input_gradient_matches_finite_differences():
    cell = RefCell(seed=3)
    inputs = cell.make_inputs(12)
    grads, _ = full_bptt_reference(cell, inputs)
    eps = 1e-6
    pos, j = 4, 1  # position 5's input, second component
    bumped = inputs.copy()
    bumped[pos, j] += eps
    hi = chain_loss(cell, bumped)
    bumped[pos, j] -= 2 * eps
    lo = chain_loss(cell, bumped)
    fd = (hi - lo) / (2 * eps)
    assert abs(fd - grads[pos][j]) / max(abs(fd), 1e-12) < 1e-5


def test_zero_parameters_give_zero_gradients():
    cell = RefCell(scale=0.0)
    grads, grad_h0 = full_bptt_reference(cell, cell.make_inputs(8))
    assert np.allclose(grad_h0, 0)
    assert all(np.allclose(g, 0) for g in grads)


def test_single_step_chain_rule():
    cell = RefCell(seed=5)
    x = cell.make_inputs(1)
    grads, grad_h0 = full_bptt_reference(cell, x)
    h1 = np.tanh(cell.W_h @ cell.h0 + cell.W_x @ x[0] + cell.b)
    d = 2.0 * h1 * (1.0 - h1 * h1)
    assert np.allclose(grad_h0, cell.W_h.T @ d, rtol=0, atol=0)
    assert np.allclose(grads[0], cell.W_x.T @ d, rtol=0, atol=0)


def _exactly_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a[0], b[0])) and np.array_equal(
        a[1], b[1]
    )


def test_policy_runs_match_reference_exactly():
    cell = RefCell()
    inputs = cell.make_inputs(40)
    ref = full_bptt_reference(cell, inputs)
    hsm = solve_hsm(40, 12)
    ism = solve_ism(40, 12)
    msm = solve_msm(40, 24, CostModel(3, 2), dedup=True)
    for pol, budgets in ((hsm, (1, 2, 5, 12)), (ism, (1, 4, 12)), (msm, (1, 3, 8, 24))):
        for m in budgets:
            got = run_under_policy(cell, inputs, pol, m)
            assert _exactly_equal(got, ref), (pol.algorithm, m)


def test_msm_large_state_model_exact():
    cell = RefCell(seed=11)
    inputs = cell.make_inputs(50, seed=2)
    ref = full_bptt_reference(cell, inputs)
    pol = solve_msm(50, 30, CostModel(5, 4), dedup=True)
    got = run_under_policy(cell, inputs, pol, 30)
    assert _exactly_equal(got, ref)


def test_plentiful_internal_memory_behaves_like_plain_bptt():
    cell = RefCell()
    inputs = cell.make_inputs(12)
    pol = solve_ism(12, 12)
    tape = RefChainTape(cell, inputs)
    from remat import execute_ism

    execute_ism(pol, tape, 12, 12, grad_last_hidden=np.zeros(cell.hidden_dim))
    assert tape.forward_calls == 12  # one pass, no recomputation
    assert tape.backward_calls == 12


def test_randomized_budget_grid_exactness():
    cell = RefCell(seed=9)
    rng = np.random.default_rng(42)
    hsm = solve_hsm(24, 8)
    ism = solve_ism(24, 8)
    msm = solve_msm(24, 12, CostModel(3, 2))
    for _ in range(25):
        t = int(rng.integers(1, 25))
        inputs = cell.make_inputs(t, seed=int(rng.integers(1 << 30)))
        ref = full_bptt_reference(cell, inputs)
        pol = [hsm, ism, msm][int(rng.integers(3))]
        m = int(rng.integers(1, (8 if pol is not msm else 12) + 1))
        got = run_under_policy(cell, inputs, pol, m)
        assert _exactly_equal(got, ref)


def test_cell_cost_model_shape():
    # internal state = input hidden + pre-activation + output hidden
    model = RefCell().cost_model()
    assert (model.alpha, model.beta) == (3, 2)
    assert model.alpha == model.beta + 1
