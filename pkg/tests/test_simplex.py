import numpy as np
import pytest
from scipy.optimize import linprog

from mmwplan.network import MipModel
from mmwplan.simplex import compile_model, solve_lp


def random_model(rng, n, m, bounded=True):
    model = MipModel()
    c = rng.normal(size=n)
    for j in range(n):
        ub = float(rng.uniform(1, 6)) if bounded else np.inf
        model.add_var(f"x{j}", "continuous", 0.0, ub, "f", obj=float(c[j]))
    senses = []
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m) + 1.0
    for i in range(m):
        sense = ["<=", ">=", "="][rng.integers(0, 3)]
        model.add_constraint(f"c{i}", {j: float(A[i, j]) for j in range(n)}, sense, float(b[i]))
        senses.append(sense)
    return model, A, b, c, senses


def scipy_reference(model, A, b, c, senses):
    bounds = [(v.lb, None if np.isinf(v.ub) else v.ub) for v in model.variables]
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for i, sense in enumerate(senses):
        if sense == "<=":
            A_ub.append(A[i]); b_ub.append(b[i])
        elif sense == ">=":
            A_ub.append(-A[i]); b_ub.append(-b[i])
        else:
            A_eq.append(A[i]); b_eq.append(b[i])
    return linprog(
        c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )


class TestSolveLp:
    def test_min_with_lower_bound(self):
        model = MipModel()
        model.add_var("x", "continuous", 0.0, np.inf, "f", obj=1.0)
        model.add_constraint("c1", {0: 1.0}, ">=", 3.0)
        sol = solve_lp(model)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(3.0)
        assert sol.x[0] == pytest.approx(3.0)

    def test_unbounded_detected(self):
        model = MipModel()
        model.add_var("x", "continuous", 0.0, np.inf, "f", obj=-1.0)
        model.add_constraint("c1", {0: 1.0}, ">=", 0.0)
        assert solve_lp(model).status == "unbounded"

    def test_infeasible_detected(self):
        model = MipModel()
        model.add_var("x", "continuous", 0.0, 1.0, "f", obj=1.0)
        model.add_constraint("c1", {0: 1.0}, ">=", 2.0)
        assert solve_lp(model).status == "infeasible"

    def test_max_flow_hand_check(self):
        # max flow s->t over two parallel 2-hop paths with capacities 3 and 2;
        # phrased as min(-flow); optimum ships 5
        model = MipModel()
        arcs = {"sa": 3.0, "at": 3.0, "sb": 2.0, "bt": 2.0}
        for name, cap in arcs.items():
            model.add_var(name, "continuous", 0.0, cap, "f", obj=-1.0 if name.endswith("t") else 0.0)
        model.add_constraint("bal_a", {0: 1.0, 1: -1.0}, "=", 0.0)
        model.add_constraint("bal_b", {2: 1.0, 3: -1.0}, "=", 0.0)
        sol = solve_lp(model)
        assert sol.status == "optimal"
        assert -sol.objective == pytest.approx(5.0)

    def test_scipy_oracle_random(self):
        rng = np.random.default_rng(42)
        agree = 0
        for _ in range(150):
            n = int(rng.integers(2, 10))
            m = int(rng.integers(1, 8))
            model, A, b, c, senses = random_model(rng, n, m, bounded=bool(rng.integers(0, 2)))
            mine = solve_lp(model, engine="simplex")
            ref = scipy_reference(model, A, b, c, senses)
            if ref.status == 2:
                assert mine.status == "infeasible"
            elif ref.status == 3:
                assert mine.status == "unbounded"
            elif ref.status == 0:
                assert mine.status == "optimal"
                assert mine.objective == pytest.approx(ref.fun, rel=1e-6, abs=1e-6)
                agree += 1
        assert agree > 40  # a healthy share must exercise the optimal path

    def test_highs_engine_matches_simplex(self):
        rng = np.random.default_rng(43)
        for _ in range(25):
            model, *_ = random_model(rng, int(rng.integers(3, 8)), int(rng.integers(1, 6)))
            a = solve_lp(model, engine="simplex")
            b = solve_lp(model, engine="highs")
            assert a.status == b.status
            if a.status == "optimal":
                assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-6)

    def test_constraints_hold_and_bounds_exact(self):
        rng = np.random.default_rng(44)
        for _ in range(40):
            model, A, b, c, senses = random_model(rng, 6, 4)
            sol = solve_lp(model)
            if sol.status != "optimal":
                continue
            x = sol.x
            for i, sense in enumerate(senses):
                lhs = A[i] @ x
                if sense == "<=":
                    assert lhs <= b[i] + 1e-7
                elif sense == ">=":
                    assert lhs >= b[i] - 1e-7
                else:
                    assert lhs == pytest.approx(b[i], abs=1e-7)
            for j, v in enumerate(model.variables):
                assert v.lb <= x[j] <= v.ub

    def test_bound_overrides(self):
        model = MipModel()
        model.add_var("x", "continuous", 0.0, 10.0, "f", obj=-1.0)
        sol = solve_lp(model, upper=np.array([4.0]))
        assert sol.x[0] == pytest.approx(4.0)

    def test_relaxation_bounds_integer_optimum(self):
        from mmwplan.instances import demo_problem, random_small_problem
        from mmwplan.network import build_mip
        from mmwplan.solve import SolveControls, branch_and_bound

        rng = np.random.default_rng(45)
        for _ in range(10):
            problem = random_small_problem(rng, objective="min_cost")
            model = build_mip(problem)
            relax = solve_lp(model)
            plan = branch_and_bound(model, SolveControls(gap_target=0.0))
            if plan.status == "optimal" and relax.status == "optimal":
                assert relax.objective <= plan.objective_value + 1e-6

    def test_compile_reusable_across_bounds(self):
        model = MipModel()
        model.add_var("x", "binary", 0.0, 1.0, "z", obj=2.0)
        model.add_var("y", "continuous", 0.0, 5.0, "f", obj=1.0)
        model.add_constraint("c", {0: 3.0, 1: 1.0}, ">=", 2.0)
        lp = compile_model(model)
        free = solve_lp(lp)
        pinned = solve_lp(lp, lower=np.array([1.0, 0.0]))
        assert free.objective <= pinned.objective + 1e-9
