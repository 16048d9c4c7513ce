import io
import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from h2bid.model import build_model
from h2bid.solver import (KERNELS, Branching, LpStatus, MilpStatus, SimplexStall, SolverConfig,
                          SolverUnavailableError, available_backends, external_solver_adapter, solve, solve_lp,
                          solve_milp)
from h2bid.solver._simplex import SimplexEngine
from factories import lp_model, micro_instance, oracle_micro_model, random_small_lp
from oracles import lp_by_vertex_enumeration, milp_by_enumeration

HIGHS = SolverConfig(backend="highs")


class TestLp:
    def test_single_bound(self):
        sol = solve_lp(lp_model([1.0], [[1.0]], [3.0]))
        assert sol.status is LpStatus.OPTIMAL
        assert sol.objective == 3.0 and sol.x[0] == 3.0

    def test_degenerate_face(self):
        sol = solve_lp(lp_model([1.0, 1.0], [[1.0, 1.0]], [1.0]))
        assert sol.objective == pytest.approx(1.0)

    def test_vertex_is_deterministic(self):
        model = lp_model([1.0, 1.0], [[1.0, 1.0]], [1.0])
        a, b = solve_lp(model), solve_lp(model)
        assert np.array_equal(a.x, b.x) and a.iterations == b.iterations

    def test_infeasible(self):
        model = lp_model([1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0], sense=["<=", ">="])
        assert solve_lp(model).status is LpStatus.INFEASIBLE

    def test_unbounded(self):
        model = lp_model([1.0, 1.0], [[1.0, -1.0]], [1.0])
        assert solve_lp(model).status is LpStatus.UNBOUNDED

    def test_equality_and_ranges(self):
        model = lp_model([2.0, -1.0, 1.0], [[1.0, 1.0, 1.0], [1.0, -1.0, 0.0]], [4.0, 1.0],
                         sense=["==", ">="], lo=[-1.0, -2.0, 0.0], hi=[3.0, 5.0, 1.0])
        ref = linprog([-2.0, 1.0, -1.0], A_ub=[[-1.0, 1.0, 0.0]], b_ub=[-1.0], A_eq=[[1, 1, 1]], b_eq=[4.0],
                      bounds=[(-1, 3), (-2, 5), (0, 1)])
        assert solve_lp(model).objective == pytest.approx(-ref.fun, abs=1e-9)

    def test_iteration_cap_raises_stall(self):
        c, A, b = random_small_lp(3)
        model = lp_model(c, A, b)
        engine = SimplexEngine(model.A, model.sense, model.rhs, model.lo, model.hi, -model.objective, max_iter=1)
        with pytest.raises(SimplexStall, match="simplex stall"):
            engine.solve()

    @pytest.mark.parametrize("seed", range(100, 110))
    def test_matches_exact_vertex_enumeration(self, seed):
        c, A, b = random_small_lp(seed)
        exact, _ = lp_by_vertex_enumeration(c, A, b)
        sol = solve_lp(lp_model(c, A, b))
        assert sol.status is LpStatus.OPTIMAL
        assert abs(sol.objective - float(exact)) <= 1e-7

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(st.integers(0, 2**31 - 1))
    def test_matches_highs_on_bounded_mixed_rows(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 9))
        A = rng.integers(-5, 6, (m, n)).astype(float)
        x0 = rng.uniform(0, 3, n)
        sense = rng.choice(["<=", ">=", "=="], m, p=[0.5, 0.3, 0.2])
        slack = rng.uniform(0, 2, m)
        b = A @ x0 + np.where(sense == "<=", slack, np.where(sense == ">=", -slack, 0.0))
        c = rng.integers(-5, 6, n).astype(float)
        model = lp_model(c, A, b, sense=list(sense), lo=-1.0, hi=4.0)
        le, ge, eq = sense == "<=", sense == ">=", sense == "=="
        ref = linprog(-c, A_ub=np.vstack([A[le], -A[ge]]), b_ub=np.concatenate([b[le], -b[ge]]),
                      A_eq=A[eq] if eq.any() else None, b_eq=b[eq] if eq.any() else None,
                      bounds=(-1.0, 4.0), method="highs")
        sol = solve_lp(model)
        assert sol.status is LpStatus.OPTIMAL
        assert sol.objective == pytest.approx(-ref.fun, rel=1e-8, abs=1e-8)
        assert model.row_violations(sol.x).max() <= 1e-7
        assert model.bound_violations(sol.x).max() <= 1e-9

    def test_kernels_make_identical_decisions(self):
        if "compiled" not in KERNELS:
            pytest.skip("compiled kernel not built")
        model = build_model(micro_instance(hours=4, segments=2, seed=7))
        a = solve_lp(model, SolverConfig(kernel="python"))
        b = solve_lp(model, SolverConfig(kernel="compiled"))
        assert a.iterations == b.iterations
        assert np.array_equal(a.basis.basis, b.basis.basis)
        assert a.objective == pytest.approx(b.objective, rel=1e-12)


class TestMilp:
    def test_knapsack_matches_enumeration(self):
        model = lp_model([5.0, 4.0, 3.0], [[4.0, 3.0, 2.0]], [5.0], binary=[0, 1, 2])
        best, x, _ = milp_by_enumeration(model)
        sol = solve_milp(model)
        assert sol.status is MilpStatus.OPTIMAL
        assert sol.objective == best == 7.0
        assert np.array_equal(np.round(sol.x), [0, 1, 1])

    def test_all_binaries_fixed_equals_lp(self):
        model = build_model(micro_instance(hours=3, seed=2))
        x = solve(model, HIGHS).x
        fixed = model.with_bounds(model.binaries, np.round(x[model.binaries]), np.round(x[model.binaries]))
        assert solve_milp(fixed).objective == pytest.approx(solve_lp(fixed).objective, rel=1e-12)
        assert solve_milp(fixed).nodes == 1

    @pytest.mark.parametrize("seed", [100, 101, 102, 103, 104])
    def test_micro_day_matches_enumeration(self, seed):
        model = oracle_micro_model(seed)
        best, _, _ = milp_by_enumeration(model)
        sol = solve_milp(model)
        assert abs(sol.objective - best) <= 1e-6 * max(1.0, abs(best))
        assert model.row_violations(sol.x).max() <= 1e-7

    def test_reproducible(self):
        model = build_model(micro_instance(hours=4, segments=2, seed=0))
        a, b = solve_milp(model), solve_milp(model)
        assert a.nodes == b.nodes and a.objective == b.objective
        assert np.array_equal(a.x, b.x)

    def test_kernels_agree_on_search(self):
        if "compiled" not in KERNELS:
            pytest.skip("compiled kernel not built")
        model = build_model(micro_instance(hours=4, segments=2, seed=2))
        a = solve_milp(model, SolverConfig(kernel="python"))
        b = solve_milp(model, SolverConfig(kernel="compiled"))
        assert a.nodes == b.nodes
        assert a.objective == pytest.approx(b.objective, rel=1e-12)

    @pytest.mark.parametrize("rule", list(Branching))
    def test_branching_rules_agree(self, rule):
        model = build_model(micro_instance(hours=4, segments=2, seed=3))
        sol = solve_milp(model, SolverConfig(branching=rule))
        assert sol.objective == pytest.approx(solve(model, HIGHS).objective, rel=1e-6)

    def test_solution_invariants(self):
        model = build_model(micro_instance(hours=4, segments=2, seed=0))
        sol = solve_milp(model)
        assert sol.gap <= 1e-6
        xb = sol.x[model.binaries]
        assert np.all(np.abs(xb - np.round(xb)) <= 1e-6)

    def test_node_limit(self):
        model = build_model(micro_instance(hours=4, segments=2, seed=0))
        sol = solve_milp(model, SolverConfig(node_limit=1))
        assert sol.status is MilpStatus.NODE_LIMIT
        assert sol.nodes == 1

    def test_gap_limit(self):
        model = build_model(micro_instance(hours=4, segments=2, seed=0))
        sol = solve_milp(model, SolverConfig(gap_limit=0.5))
        assert sol.status in (MilpStatus.GAP_LIMIT, MilpStatus.OPTIMAL)
        assert sol.gap <= 0.5

    def test_infeasible_on_both_paths(self):
        model = build_model(micro_instance(hours=2, demand=300.0, trailer_capacity=100.0))
        assert solve_milp(model).status is MilpStatus.INFEASIBLE
        assert solve(model, HIGHS).status is MilpStatus.INFEASIBLE

    def test_node_log_lines(self):
        model = build_model(micro_instance(hours=4, segments=2, seed=0))
        buf = io.StringIO()
        sol = solve_milp(model, SolverConfig(node_log=buf))
        records = [json.loads(line) for line in buf.getvalue().splitlines()]
        solved = [r for r in records if r.get("status") == "solved"]
        assert len(solved) <= sol.nodes
        assert {"node", "depth", "bound", "incumbent"} <= set(solved[0])
        seen = []
        solve_milp(model, SolverConfig(node_log=seen.append))
        assert seen == records


class TestExternal:
    def test_backends(self):
        assert available_backends() == ("bnb", "highs")

    def test_unknown_backend(self):
        with pytest.raises(SolverUnavailableError):
            external_solver_adapter(lp_model([1.0], [[1.0]], [1.0]), SolverConfig(backend="gurobi"))

    @pytest.mark.parametrize("seed", range(4))
    def test_agrees_with_branch_and_bound(self, seed):
        model = build_model(micro_instance(hours=4, segments=2, seed=seed))
        ours, theirs = solve_milp(model), solve(model, HIGHS)
        assert theirs.backend == "highs"
        assert abs(ours.objective - theirs.objective) <= 1e-5 * max(1.0, abs(ours.objective))
        assert model.row_violations(theirs.x).max() <= 1e-7


class TestConfig:
    @pytest.mark.parametrize("field", ["gap_tol", "int_tol", "feas_tol"])
    def test_tolerances_positive(self, field):
        with pytest.raises(ValueError):
            SolverConfig(**{field: 0.0})

    def test_branching_from_string(self):
        assert SolverConfig(branching="FirstFractional").branching is Branching.FIRST_FRACTIONAL
