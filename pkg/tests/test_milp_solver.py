import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from decmilp.formulation import Variant, build
from decmilp.milp_solver import (INFEASIBLE, NODE_LIMIT, OPTIMAL, UNBOUNDED, MilpProblem, SimplexEngine,
                                 most_fractional, solve_lp, solve_milp)
from decmilp.oracle import brute_force_optimal
from decmilp.sequences import all_spaces
from decmilp.valuation import build_table


def problem(c, rows, sense, rhs, lb=None, ub=None, binary=None):
    c = np.asarray(c, dtype=float)
    n = len(c)
    sense = np.array(list(sense), dtype="<U1")
    return MilpProblem(c, sp.csr_matrix(np.asarray(rows, dtype=float).reshape(-1, n)), sense,
                       np.asarray(rhs, dtype=float), np.zeros(n) if lb is None else np.asarray(lb, float),
                       np.full(n, np.inf) if ub is None else np.asarray(ub, float),
                       np.zeros(n, bool) if binary is None else np.asarray(binary, bool))


def highs(p, integral):
    """Reference optimum from HiGHS (maximization)."""
    lo = np.where(p.sense == "<", -np.inf, p.rhs)
    hi = np.where(p.sense == ">", np.inf, p.rhs)
    res = milp(-p.c, constraints=LinearConstraint(p.A, lo, hi), bounds=Bounds(p.lb, p.ub),
               integrality=p.binary.astype(int) if integral else None)
    return res


def test_single_variable_lp():
    sol = solve_lp(problem([1.0], [[1.0]], "<", [3.0]))
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(3.0)


def test_infeasible_lp():
    sol = solve_lp(problem([1.0], [[1.0], [1.0]], [">", "<"], [2.0, 1.0]))
    assert sol.status == INFEASIBLE and sol.x is None


def test_unbounded_lp():
    assert solve_lp(problem([1.0, 0.0], [[1.0, -1.0]], "<", [1.0])).status == UNBOUNDED


def test_no_variables():
    with pytest.raises(ValueError):
        solve_lp(problem([], np.zeros((0, 0)), [], []))


def test_degenerate_cycling_example():
    # Beale's example: Dantzig pricing with a naive ratio test cycles.
    c = [0.75, -150, 0.02, -6]
    rows = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    p = problem(c, rows, "<<<", [0, 0, 1])
    sol = solve_lp(p)
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(0.05)
    tiny = solve_lp(p, bland_after=1)
    assert tiny.objective == pytest.approx(0.05)


def test_bounded_variables_and_equalities():
    p = problem([1, 2, -1], [[1, 1, 1], [1, -1, 0]], "=>", [4, -1], ub=[2, 3, 5])
    sol = solve_lp(p)
    ref = highs(p, False)
    assert sol.objective == pytest.approx(-ref.fun, abs=1e-9)
    assert p.is_feasible(sol.x, integral=False)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 8))
def test_random_lps_match_highs(seed, m, n):
    rng = np.random.default_rng(seed)
    A = np.round(rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.7), 1)
    x0 = rng.random(n) * 2
    sense = rng.choice(["<", ">", "="], m)
    rhs = A @ x0 + np.where(sense == "<", 0.5, np.where(sense == ">", -0.5, 0.0))
    ub = np.where(rng.random(n) < 0.5, 3.0, np.inf)
    p = problem(np.round(rng.normal(size=n), 1), A, sense, rhs, ub=ub)
    ref = highs(p, False)
    for factorization in ("dense", "lu"):
        sol = solve_lp(p, factorization=factorization)
        if ref.status == 0:
            assert sol.status == OPTIMAL
            assert sol.objective == pytest.approx(-ref.fun, abs=1e-6)
            assert p.is_feasible(sol.x, integral=False)
        else:
            assert sol.status == UNBOUNDED


@pytest.mark.parametrize("factorization", ["dense", "lu"])
def test_warm_start_matches_cold(factorization):
    rng = np.random.default_rng(2)
    n = 12
    A = rng.random((5, n))
    p = problem(rng.normal(size=n), A, "<" * 5, A.sum(axis=1) / 2, ub=np.ones(n))
    engine = SimplexEngine(p, factorization=factorization)
    base = engine.solve()
    basis = engine.snapshot()
    for j in range(n):
        for v in (0.0, 1.0):
            engine.set_bounds(j, v, v)
            warm = engine.solve(warm=basis)
            cold_p = problem(p.c, A, "<" * 5, p.rhs, lb=np.where(np.arange(n) == j, v, 0.0),
                             ub=np.where(np.arange(n) == j, v, 1.0))
            cold = solve_lp(cold_p)
            assert warm.status == cold.status
            if warm.status == OPTIMAL:
                assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
            engine.set_bounds(j, 0.0, 1.0)
    assert engine.solve(warm=basis).objective == pytest.approx(base.objective, abs=1e-12)


def test_most_fractional_ties_lowest_index():
    x = np.array([0.5, 0.2, 0.5, 1.0])
    assert most_fractional(x, np.array([1, 2, 0])) == 2
    assert most_fractional(x, np.array([0, 1, 2])) == 0
    assert most_fractional(np.array([0.0, 1.0]), np.array([0, 1])) is None


def test_integral_root_needs_one_node():
    p = problem([1, 1], [[1, 0], [0, 1]], "<<", [1, 1], ub=[1, 1], binary=[1, 1])
    sol = solve_milp(p)
    assert sol.optimal and sol.nodes == 1 and sol.objective == 2


def test_infeasible_milp():
    p = problem([1, 1], [[1, 1]], "=", [1.5], ub=[1, 1], binary=[1, 1])
    assert solve_milp(p).status == INFEASIBLE


def _knapsack(rng, n):
    w = rng.integers(1, 20, n).astype(float)
    v = rng.integers(1, 30, n).astype(float)
    return problem(v, [w], "<", [w.sum() / 2], ub=np.ones(n), binary=np.ones(n)), v, w


@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_knapsack_matches_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    p, v, w = _knapsack(rng, n)
    best = max(v @ np.array(b) for b in itertools.product((0, 1), repeat=n) if w @ np.array(b) <= w.sum() / 2)
    sol = solve_milp(p)
    assert sol.optimal and sol.objective == pytest.approx(best)
    assert p.is_feasible(sol.x)


def test_unknown_factorization():
    with pytest.raises(ValueError):
        SimplexEngine(problem([1.0], [[1.0]], "<", [1.0]), factorization="qr")


@pytest.mark.parametrize("name, k", [("mabc", 3), ("matiger", 2)])
def test_factorizations_agree_on_structured_lps(name, k, request):
    from decmilp.bounds import pomdp_lp
    p = pomdp_lp(request.getfixturevalue(name), k)
    dense = SimplexEngine(p, factorization="dense").solve()
    lu = SimplexEngine(p, factorization="lu").solve()
    assert dense.status == lu.status == OPTIMAL
    assert lu.objective == pytest.approx(dense.objective, abs=1e-9)
    assert lu.objective == pytest.approx(-highs(p, False).fun, abs=1e-6)
    np.testing.assert_allclose(lu.duals, dense.duals, atol=1e-7)


@pytest.mark.parametrize("factorization", ["dense", "lu"])
def test_branch_and_bound_with_either_factorization(factorization):
    rng = np.random.default_rng(8)
    p, v, w = _knapsack(rng, 12)
    best = max(v @ np.array(b) for b in itertools.product((0, 1), repeat=12) if w @ np.array(b) <= w.sum() / 2)
    assert solve_milp(p, factorization=factorization).objective == pytest.approx(best)


def test_mixed_problem_matches_highs():
    rng = np.random.default_rng(11)
    n = 14
    A = rng.normal(size=(6, n))
    binary = np.arange(n) % 2 == 0
    p = problem(rng.normal(size=n), A, "<" * 6, np.abs(A).sum(axis=1) / 3, ub=np.ones(n), binary=binary)
    sol = solve_milp(p)
    assert sol.objective == pytest.approx(-highs(p, True).fun, abs=1e-6)


def test_node_limit_reports_incumbent_and_bound():
    rng = np.random.default_rng(4)
    p, _, _ = _knapsack(rng, 30)
    sol = solve_milp(p, node_limit=5)
    assert sol.status == NODE_LIMIT and not sol.optimal
    assert sol.bound >= sol.objective if sol.x is not None else np.isfinite(sol.bound)


def test_time_limit():
    rng = np.random.default_rng(4)
    p, _, _ = _knapsack(rng, 40)
    sol = solve_milp(p, time_limit=0.0)
    assert sol.status == "time_limit"


def test_supplied_incumbent_must_be_feasible():
    p = problem([1, 1], [[1, 1]], "<", [1], ub=[1, 1], binary=[1, 1])
    with pytest.raises(ValueError):
        solve_milp(p, incumbent=np.array([1.0, 1.0]))
    assert solve_milp(p, incumbent=np.array([1.0, 0.0])).objective == 1.0


@pytest.mark.parametrize("variant", [Variant.MILP_DEC, Variant.ILP_DEC])
def test_mabc_engine_highs_oracle(mabc, variant):
    spaces = all_spaces(mabc, 2)
    table = build_table(mabc, spaces)
    p = build(mabc, spaces, variant, table)
    sol = solve_milp(p)
    oracle = brute_force_optimal(mabc, spaces, table).value
    assert sol.optimal
    assert sol.objective == pytest.approx(oracle, abs=1e-6)
    assert sol.objective == pytest.approx(-highs(p, True).fun, abs=1e-6)
    # LP relaxation from both engines
    assert solve_lp(p.relaxed()).objective == pytest.approx(-highs(p, False).fun, abs=1e-6)


def test_mabc_three_matches_oracle(mabc):
    spaces = all_spaces(mabc, 3)
    table = build_table(mabc, spaces)
    p = build(mabc, spaces, Variant.MILP_DEC, table)
    sol = solve_milp(p)
    assert sol.optimal and sol.objective == pytest.approx(brute_force_optimal(mabc, spaces, table).value, abs=1e-6)
    assert p.is_feasible(sol.x)
    assert sol.root_bound >= sol.objective - 1e-9


def test_deterministic_runs():
    rng = np.random.default_rng(9)
    p, _, _ = _knapsack(rng, 25)
    a, b = solve_milp(p), solve_milp(p)
    assert (a.objective, a.nodes, a.lp_iterations) == (b.objective, b.nodes, b.lp_iterations)
    np.testing.assert_array_equal(a.x, b.x)


@pytest.mark.parametrize("factorization", ["dense", "lu"])
@pytest.mark.parametrize("name, lower, bland_after", [("mabc", 2.0, 1), ("mabc", 2.0, 50), ("matiger", None, 50)])
def test_bound_shift_is_undone(request, name, lower, bland_after, factorization):
    from decmilp.bounds import pomdp_upper_bound
    from decmilp.formulation import add_bounds
    m = request.getfixturevalue(name)
    spaces = all_spaces(m, 3)
    table = build_table(m, spaces)
    p = add_bounds(build(m, spaces, Variant.MILP_DEC, table), lower, pomdp_upper_bound(m, 3)).relaxed()
    sol = solve_lp(p, bland_after=bland_after, factorization=factorization)
    assert sol.status == OPTIMAL
    assert p.is_feasible(sol.x, integral=False)
    assert sol.objective == pytest.approx(-highs(p, False).fun, abs=1e-6)


def test_heuristic_incumbents_are_checked():
    rng = np.random.default_rng(11)
    p, v, w = _knapsack(rng, 12)
    plain = solve_milp(p)

    def greedy(x):
        pick = np.zeros_like(x)
        for j in np.argsort(-v / w, kind="stable"):
            if w @ pick + w[j] <= w.sum() / 2:
                pick[j] = 1.0
        return pick

    helped = solve_milp(p, heuristic=greedy)
    assert helped.optimal and helped.objective == pytest.approx(plain.objective)
    assert helped.nodes <= plain.nodes
    junk = solve_milp(p, heuristic=lambda x: np.ones_like(x))
    assert junk.optimal and junk.objective == pytest.approx(plain.objective)
