"""CLI behaviour: exit codes, file round trips, deterministic CSV output."""

import csv
import io
import subprocess
import sys

import pytest

from remat import deserialize_policy
from remat.cli import main


def run_cli(*args):
    """Run the CLI in-process, capturing stdout."""
    buf = io.StringIO()
    old = sys.stdout
    sys.stdout = buf
    try:
        code = main(list(args))
    finally:
        sys.stdout = old
    return code, buf.getvalue()


def test_solve_writes_policy_and_summary(tmp_path):
    out = tmp_path / "p.json"
    code, text = run_cli("solve", "--alg", "hsm", "--t", "100", "--m", "10", "-o", str(out))
    assert code == 0
    pol = deserialize_policy(out.read_bytes())
    assert f"cost(t=100, m=10) = {pol.cost(100, 10)}" in text


def test_solve_msm_dedup_policy(tmp_path):
    out = tmp_path / "p.json"
    code, _ = run_cli(
        "solve", "--alg", "msm", "--t", "50", "--m", "25",
        "--alpha", "5", "--beta", "4", "--dedup", "-o", str(out),
    )
    assert code == 0
    pol = deserialize_policy(out.read_bytes())
    assert pol.algorithm.value == "msm_dedup"
    assert pol.cost_model.alpha == 5 and pol.cost_model.beta == 4


def test_solve_rejects_zero_length(tmp_path):
    code, _ = run_cli("solve", "--alg", "hsm", "--t", "0", "--m", "3", "-o", str(tmp_path / "x"))
    assert code == 2


def test_simulate_known_costs(tmp_path):
    out = tmp_path / "p.json"
    run_cli("solve", "--alg", "hsm", "--t", "10", "--m", "4", "-o", str(out))
    code, text = run_cli("simulate", "--policy", str(out), "--t", "4", "--m", "4")
    assert code == 0 and "forwards: 7" in text
    code, text = run_cli("simulate", "--policy", str(out), "--t", "10", "--m", "1")
    assert code == 0 and "forwards: 55" in text


def test_simulate_reports_simulated_time(tmp_path):
    out = tmp_path / "p.json"
    run_cli("solve", "--alg", "ism", "--t", "1000", "--m", "50", "-o", str(out))
    code, text = run_cli("simulate", "--policy", str(out), "--t", "1000", "--m", "50")
    assert code == 0
    forwards = int(next(l for l in text.splitlines() if l.startswith("forwards:")).split()[1])
    assert forwards <= 2000


def test_simulate_out_of_range_exits_3(tmp_path):
    out = tmp_path / "p.json"
    run_cli("solve", "--alg", "hsm", "--t", "10", "--m", "4", "-o", str(out))
    code, _ = run_cli("simulate", "--policy", str(out), "--t", "11", "--m", "4")
    assert code == 3


def test_simulate_event_csv(tmp_path):
    out = tmp_path / "p.json"
    events = tmp_path / "events.csv"
    run_cli("solve", "--alg", "msm", "--t", "8", "--m", "4", "-o", str(out))
    code, _ = run_cli(
        "simulate", "--policy", str(out), "--t", "8", "--m", "4", "--events-csv", str(events)
    )
    assert code == 0
    rows = list(csv.DictReader(events.open()))
    assert rows and {r["event"] for r in rows} >= {"Forward", "Backward"}


def test_capacity_cap_exits_4(tmp_path, monkeypatch):
    monkeypatch.setenv("REMAT_MAX_T", "50")
    code, _ = run_cli("solve", "--alg", "hsm", "--t", "100", "--m", "4", "-o", str(tmp_path / "x"))
    assert code == 4
    code, _ = run_cli("curves", "--figure", "hsm_cost", "--t-max", "100", "--m", "4")
    assert code == 4


def test_env_cap_override_allows_more(tmp_path, monkeypatch):
    monkeypatch.setenv("REMAT_MAX_T", "200")
    code, _ = run_cli("solve", "--alg", "hsm", "--t", "150", "--m", "4", "-o", str(tmp_path / "x"))
    assert code == 0


def _read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_curves_schema_and_strategy_ordering(tmp_path):
    out = tmp_path / "c.csv"
    code, _ = run_cli(
        "curves", "--figure", "strategy_compare", "--t-max", "60", "--t-step", "1",
        "--m", "2", "--alpha", "5", "--beta", "4", "-o", str(out),
    )
    assert code == 0
    rows = _read_rows(out)
    assert list(rows[0].keys()) == [
        "figure", "t", "m", "algorithm", "total_forwards",
        "forwards_per_step", "memory_units", "simulated_time_per_step",
    ]
    by_alg = {}
    for r in rows:
        by_alg.setdefault(r["algorithm"], {})[int(r["t"])] = int(r["total_forwards"])
    for t in range(1, 61):
        assert by_alg["msm"][t] <= min(by_alg["hsm"][t], by_alg["ism"][t])


def test_curves_power_bound_row(tmp_path):
    out = tmp_path / "c.csv"
    code, _ = run_cli(
        "curves", "--figure", "hsm_cost", "--t-max", "1000", "--t-step", "999",
        "--m", "10", "-o", str(out),
    )
    assert code == 0
    row = [r for r in _read_rows(out) if r["t"] == "1000"][0]
    assert int(row["total_forwards"]) < 4 * 1000 ** 1.1


def test_chen_ratio_below_one(tmp_path):
    out = tmp_path / "c.csv"
    code, _ = run_cli(
        "curves", "--figure", "chen_memory_ratio", "--t", "1024", "--beta", "5", "-o", str(out)
    )
    assert code == 0
    (row,) = _read_rows(out)
    assert int(row["memory_units"]) <= 32 * 6  # no worse than the sqrt heuristic


def test_chen_fixed_memory_cost_at_most_two(tmp_path):
    out = tmp_path / "c.csv"
    code, _ = run_cli(
        "curves", "--figure", "chen_cost_fixed_memory", "--t", "16,64,256", "--beta", "2",
        "-o", str(out),
    )
    assert code == 0
    for row in _read_rows(out):
        assert float(row["forwards_per_step"]) <= 2.0


def test_chen_figures_reject_non_squares():
    code, _ = run_cli("curves", "--figure", "chen_memory_ratio", "--t", "15")
    assert code == 2


def test_compare_chen_modes(tmp_path):
    out = tmp_path / "c.csv"
    code, _ = run_cli("compare-chen", "--t", "16,64", "--beta", "2", "-o", str(out))
    assert code == 0
    rows = _read_rows(out)
    for t in (16, 64):
        sub = {r["algorithm"]: r for r in rows if int(r["t"]) == t}
        chen = sub["chen_sqrt"]
        fixed_mem = sub["msm_fixed_memory(beta=2)"]
        fixed_cost = sub["msm_fixed_cost(beta=2)"]
        assert int(fixed_mem["total_forwards"]) <= int(chen["total_forwards"])
        assert float(fixed_cost["forwards_per_step"]) <= 2.0
        assert int(fixed_cost["memory_units"]) <= int(chen["memory_units"])


def test_curves_byte_identical_across_processes(tmp_path):
    args = [
        sys.executable, "-m", "remat.cli", "curves", "--figure", "ism_cost",
        "--t-max", "64", "--t-step", "3", "--m", "4,8",
    ]
    a = subprocess.run(args, capture_output=True, check=True)
    b = subprocess.run(args, capture_output=True, check=True)
    assert a.stdout == b.stdout and a.stdout


def test_usage_error_on_unknown_figure():
    with pytest.raises(SystemExit) as e:
        main(["curves", "--figure", "nope"])
    assert e.value.code == 2
