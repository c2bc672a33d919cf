"""Heterogeneous-chain solver: boundaries, gate, homogeneous reduction."""

import math

import numpy as np
import pytest

from remat import (
    CapacityError,
    ChainSpec,
    InfeasibleChainError,
    Layer,
    cumulative_cost,
    feasibility_gate,
    load_chain_spec,
    solve_hetero,
    solve_hsm,
)


def _chain(us, ss=None, ps=None):
    n = len(us)
    ss = ss or [1] * n
    ps = ps or [1] * n
    return ChainSpec(tuple(Layer(u, s, p) for u, s, p in zip(us, ss, ps)))


def test_cumulative_cost_examples():
    assert cumulative_cost(ChainSpec.homogeneous(8), 0, 5) == 5
    assert cumulative_cost(_chain([2, 3, 4]), 1, 2) == 7
    chain = _chain([1.5, 2.0, 0.5, 3.0])
    assert cumulative_cost(chain, 0, 4) == sum(l.u for l in chain.layers)
    with pytest.raises(ValueError):
        cumulative_cost(chain, 3, 2)


def test_feasibility_gate_examples():
    assert feasibility_gate(ChainSpec.homogeneous(5), 0, 5, 1) == 0
    spiky = _chain([1, 1, 1], ps=[1, 9, 1])
    assert feasibility_gate(spiky, 0, 3, 8) == math.inf
    assert feasibility_gate(spiky, 1, 1, 8) == math.inf
    assert feasibility_gate(spiky, 0, 3, 9) == 0
    assert feasibility_gate(spiky, 2, 1, 1) == 0


def test_zero_memory_boundary_is_quadratic_replay():
    pol = solve_hetero(ChainSpec.homogeneous(6), 3)
    assert pol.cost(4, 0, 0) == 10
    assert all(pol.cost(t, 0, 0) == t * (t + 1) / 2 for t in range(1, 7))
    # heterogeneous weights: each layer is replayed once per backward above it
    pol = solve_hetero(_chain([2, 3, 4]), 2)
    assert pol.cost(3, 0, 0) == 3 * 2 + 2 * 3 + 1 * 4


def test_plentiful_memory_boundary():
    pol = solve_hetero(ChainSpec.homogeneous(4), 20)
    assert pol.cost(4, 20, 0) == 7  # 2t - 1 in the homogeneous case
    pol = solve_hetero(_chain([2, 3, 4]), 50)
    assert pol.cost(3, 50, 0) == 2 * (2 + 3) + 4


def test_empty_span_boundaries():
    pol = solve_hetero(ChainSpec.homogeneous(4), 3)
    assert pol.cost(0, 2, 1) == 0
    assert pol.cost(3, 2, 2) == 0  # x + t > N
    assert pol.cost(2, -1, 0) == math.inf


def test_homogeneous_reduction_equals_hidden_state_tables():
    n, m_hi = 40, 6
    pol = solve_hetero(ChainSpec.homogeneous(n), m_hi)
    ref = solve_hsm(n, m_hi)
    for t in range(1, n + 1):
        for m in range(1, m_hi + 1):
            assert pol.cost(t, m, 0) == ref.cost(t, m), (t, m)


def test_homogeneous_reduction_holds_for_interior_suffixes():
    n = 24
    pol = solve_hetero(ChainSpec.homogeneous(n), 4)
    ref = solve_hsm(n, 4)
    for x in (3, 10):
        for t in range(1, n - x + 1):
            for m in range(1, 5):
                assert pol.cost(t, m, x) == ref.cost(t, m)


def test_monotone_in_memory_for_fixed_span():
    chain = _chain([1, 2, 1, 3, 1, 2], ss=[1, 2, 1, 1, 2, 1], ps=[1, 2, 1, 1, 1, 2])
    pol = solve_hetero(chain, 8)
    for t in range(1, 7):
        for x in range(0, 6 - t + 1):
            costs = [pol.cost(t, m, x) for m in range(2, 9)]
            assert all(a >= b for a, b in zip(costs, costs[1:])), (t, x, costs)


def test_gate_prices_oversized_working_layers_at_infinity():
    chain = _chain([1, 1, 1, 1], ps=[1, 5, 1, 1])
    pol = solve_hetero(chain, 6)
    assert pol.cost(4, 4, 0) == math.inf  # layer 2 cannot even run
    assert math.isfinite(pol.cost(4, 5, 0))
    assert math.isfinite(pol.cost(2, 4, 2))  # spans avoiding layer 2 are fine


def test_fully_infeasible_chain_reports_minimum_budget():
    chain = _chain([1, 1, 1], ps=[1, 9, 1])
    with pytest.raises(InfeasibleChainError) as e:
        solve_hetero(chain, 4)
    assert e.value.min_feasible_m == 9


def test_chain_cap_refusal():
    with pytest.raises(CapacityError):
        solve_hetero(ChainSpec.homogeneous(40), 2, chain_cap=30)
    solve_hetero(ChainSpec.homogeneous(40), 2, chain_cap=30, force=True)


def test_split_zero_means_replay(tmp_path):
    pol = solve_hetero(ChainSpec.homogeneous(8), 1)
    # m = 1 admits no checkpoint that leaves the right part any budget
    assert pol.split(8, 1, 0) == 0
    assert pol.cost(8, 1, 0) == 36


def test_chain_spec_file_round_trip(tmp_path):
    chain = _chain([2, 3.5, 4], ss=[2, 1, 3], ps=[2, 2, 4])
    path = tmp_path / "chain.json"
    path.write_text(chain.to_json())
    loaded = load_chain_spec(path)
    assert loaded == chain
    assert len(loaded) == 3


def test_chain_spec_rejects_bad_records(tmp_path):
    from remat import PolicyFormatError

    path = tmp_path / "bad.json"
    path.write_text('{"layers": [{"u": 1, "s": 2}]}')
    with pytest.raises(PolicyFormatError):
        load_chain_spec(path)
    path.write_text("not json")
    with pytest.raises(PolicyFormatError):
        load_chain_spec(path)
    with pytest.raises(ValueError):
        ChainSpec.from_json('{"layers": [{"u": -1, "s": 1, "p": 1}]}')
