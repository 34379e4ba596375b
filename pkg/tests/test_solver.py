import threading
from pathlib import Path

import numpy as np
import pytest

from fairtree.milp import MilpModel
from fairtree.solver import (IncumbentError, SolverOptions, branch_and_bound, export_mps,
                             install_incumbent, parse_mps, read_mps, solve_lp)
from fairtree.solver.bnb import DEPTH_FIRST, PSEUDO_COST
from fairtree.solver.mps import mps_text

import oracles
from helpers import random_milp


def two_var(binary):
    """maximize 3x + 2y s.t. 2x + 2y <= 3, written as a minimization of the negation."""
    m = MilpModel("knapsack")
    x = m.add_var("x", 0.0, 1.0, binary=binary)
    y = m.add_var("y", 0.0, 1.0, binary=binary)
    m.add_row("cap", {x: 2.0, y: 2.0}, "L", 3.0)
    m.add_objective({x: -3.0, y: -2.0})
    return m.freeze()


def test_lp_vertex_example():
    res = solve_lp(two_var(False))
    assert res.status == "optimal"
    np.testing.assert_allclose(res.x, [1.0, 0.5], atol=1e-7)
    assert -res.objective == pytest.approx(4.0, abs=1e-7)
    # every vertex of the feasible polygon is no better
    A = [[2, 2], [1, 0], [0, 1], [-1, 0], [0, -1]]
    b = [3, 1, 1, 0, 0]
    best = max(3 * v[0] + 2 * v[1] for v in oracles.polygon_vertices(A, b))
    assert best == pytest.approx(4.0)


@pytest.mark.parametrize("engine", ["highs", "simplex"])
def test_lp_infeasible_pair(engine):
    m = MilpModel()
    x = m.add_var("x", -5, 5)
    m.add_row("lo", {x: 1.0}, "G", 1.0)
    m.add_row("hi", {x: 1.0}, "L", 0.0)
    assert solve_lp(m.freeze(), engine=engine).status == "infeasible"


@pytest.mark.parametrize("engine", ["highs", "simplex"])
def test_lp_empty_objective(engine):
    m = MilpModel()
    x = m.add_var("x", 0, 4)
    y = m.add_var("y", 0, 4)
    m.add_row("r", {x: 1.0, y: 1.0}, "G", 2.0)
    res = solve_lp(m.freeze(), engine=engine)
    assert res.status == "optimal" and res.objective == 0.0
    assert m.first_violation(res.x) is None


def test_lp_unbounded():
    m = MilpModel()
    x = m.add_var("x", 0.0)
    m.add_objective({x: -1.0})
    assert solve_lp(m.freeze()).status == "unbounded"


def test_binary_example():
    res = branch_and_bound(two_var(True))
    assert res.status == "optimal"
    np.testing.assert_array_equal(res.x, [1.0, 0.0])
    assert -res.objective == pytest.approx(3.0)
    assert res.gap == 0.0


def test_all_continuous_single_node():
    res = branch_and_bound(two_var(False))
    assert res.nodes == 1 and res.status == "optimal"


def test_infeasible_model_status():
    m = MilpModel()
    a = m.add_var("a", binary=True)
    b = m.add_var("b", binary=True)
    m.add_row("r", {a: 1.0, b: 1.0}, "E", 1.5)
    assert branch_and_bound(m.freeze()).status == "infeasible"


def test_incumbent_rejected_with_row_name():
    with pytest.raises(IncumbentError) as err:
        install_incumbent(two_var(True), [1.0, 1.0])
    assert "cap" in str(err.value) and err.value.row.startswith("cap")


def test_optimal_incumbent_kept():
    m = two_var(True)
    res = branch_and_bound(m, incumbent=install_incumbent(m, [1.0, 0.0]))
    assert res.status == "optimal"
    np.testing.assert_array_equal(res.x, [1.0, 0.0])
    # the warm start is the first trace sample and never improved upon
    assert res.trace[0][2] == pytest.approx(-3.0)
    assert all(u == pytest.approx(-3.0) for _, _, u in res.trace)


def _check_against_enumeration(m, opts=None):
    A = m.matrix().toarray()
    lb, ub = m.bounds()
    best, best_x = oracles.enumerate_milp(m.objective_vector(), A, m.sense, m.rhs, lb, ub,
                                          m.binary, m.obj_constant)
    res = branch_and_bound(m, opts or SolverOptions())
    if not np.isfinite(best):
        assert res.status == "infeasible"
        return
    assert res.status == "optimal"
    assert res.objective == pytest.approx(best, abs=1e-6)
    assert m.first_violation(res.x, tol=1e-6) is None
    b = m.binary_indices()
    assert np.all(np.abs(res.x[b] - np.round(res.x[b])) <= 1e-9)
    for t, lo, up in res.trace:
        assert lo <= res.objective + 1e-6 and res.objective <= up + 1e-6


@pytest.mark.parametrize("seed", range(15))
def test_random_models_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = random_milp(rng, int(rng.integers(2, 9)), int(rng.integers(0, 4)), int(rng.integers(2, 7)))
    _check_against_enumeration(m)


@pytest.mark.parametrize("opts", [
    SolverOptions(node_order=DEPTH_FIRST),
    SolverOptions(branching=PSEUDO_COST),
    SolverOptions(lp_engine="simplex"),
])
def test_search_variants_agree(opts):
    for seed in range(100, 106):
        rng = np.random.default_rng(seed)
        _check_against_enumeration(random_milp(rng, 7, 2, 5), opts)


def test_determinism():
    m = random_milp(np.random.default_rng(5), 10, 3, 8)
    a = branch_and_bound(m, SolverOptions(seed=3))
    b = branch_and_bound(m, SolverOptions(seed=3))
    assert a.same_search(b)


def _knapsack(n, seed):
    rng = np.random.default_rng(seed)
    m = MilpModel("bag")
    xs = [m.add_var(f"x{j}", binary=True) for j in range(n)]
    m.add_row("cap", {j: float(rng.integers(3, 20)) for j in xs}, "L", 40.0)
    m.add_objective({j: -float(rng.integers(1, 30)) for j in xs})
    return m.freeze()


def test_node_limit_and_cancel():
    m = _knapsack(16, 8)
    res = branch_and_bound(m, SolverOptions(node_limit=1))
    assert res.nodes <= 2
    ev = threading.Event()
    ev.set()
    res = branch_and_bound(m, SolverOptions(cancel=ev))
    assert res.status in ("feasible-time-limit", "time-limit-no-incumbent")


def test_knapsack_golden_mps(tmp_path):
    m = two_var(True)
    path = export_mps(m, tmp_path / "k.mps")
    text = path.read_text()
    assert text == (Path(__file__).parent / "data" / "knapsack.mps").read_text()
    assert read_mps(path) == m


def test_round_trip_random_models():
    for seed in range(20):
        m = random_milp(np.random.default_rng(seed), 5, 3, 6)
        assert parse_mps(mps_text(m)) == m


def test_long_names_mangled_deterministically():
    m = MilpModel("long")
    a = m.add_var("a_rather_long_variable", 0, 2)
    b = m.add_var("has space", binary=True)
    m.add_row("a_rather_long_row_name", {a: 1.5, b: -1.0}, "G", 0.25)
    m.add_objective({a: 1.0}, 2.5)
    m.freeze()
    text = mps_text(m)
    assert "C0000000" in text and "C0000001" in text and "R0000000" in text
    assert "* NAME-MAP C C0000000 a_rather_long_variable" in text
    assert mps_text(m) == text
    assert parse_mps(text) == m
