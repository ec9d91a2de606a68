import numpy as np
import pytest

from drccp.formulation import (
    ConeRow,
    GE,
    LE,
    LinearRow,
    MipModel,
    Variable,
    build_basic,
    build_improved,
    build_knapsack,
    compute_bigM_domain,
)
from drccp.oracle import enumerate_optimum
from drccp.quantile import QuantileConfig, build_quantile_table
from drccp.solver import (
    BUDGET_EXHAUSTED,
    OPTIMAL,
    gap_percent,
    root_gap,
    solve_lp,
    solve_mip,
)
from drccp.errors import NoIncumbent

from helpers import mip_agrees, rand_instance, vertex_lp


def toy_model():
    return MipModel(
        variables=(Variable("x", lb=0.0, ub=np.inf),),
        linear_rows=(LinearRow({"x": 1.0}, GE, 3.0, "row"),),
        cone_rows=(),
        objective={"x": 1.0},
    )


class TestSolveLp:
    def test_min_x_at_bound(self):
        sol = solve_lp(toy_model())
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(3.0)
        assert sol.primal["x"] == pytest.approx(3.0)
        assert sol.row_activities[0] == pytest.approx(3.0)

    def test_two_variable_lp_matches_vertex_enumeration(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            c = rng.uniform(-1, 1, size=2)
            A = rng.uniform(-1, 1, size=(3, 2))
            b = rng.uniform(0.5, 1.5, size=3)
            model = MipModel(
                variables=(
                    Variable("x_0", lb=0.0, ub=2.0),
                    Variable("x_1", lb=0.0, ub=2.0),
                ),
                linear_rows=tuple(
                    LinearRow({"x_0": A[r, 0], "x_1": A[r, 1]}, LE, b[r], "row", (r,))
                    for r in range(3)
                ),
                cone_rows=(),
                objective={"x_0": c[0], "x_1": c[1]},
            )
            sol = solve_lp(model)
            ref, _ = vertex_lp(c, A, b, [(0, 2), (0, 2)])
            assert sol.objective == pytest.approx(ref, abs=1e-8)

    def test_integer_data_three_vars_vertex_exact(self):
        rng = np.random.default_rng(23)
        for _ in range(15):
            c = rng.integers(-3, 4, size=3).astype(float)
            A = rng.integers(-2, 3, size=(4, 3)).astype(float)
            b = rng.integers(1, 6, size=4).astype(float)
            model = MipModel(
                variables=tuple(
                    Variable(f"x_{j}", lb=0.0, ub=3.0) for j in range(3)
                ),
                linear_rows=tuple(
                    LinearRow(
                        {f"x_{j}": A[r, j] for j in range(3)}, LE, b[r], "row", (r,)
                    )
                    for r in range(4)
                ),
                cone_rows=(),
                objective={f"x_{j}": c[j] for j in range(3)},
            )
            sol = solve_lp(model)
            ref, _ = vertex_lp(c, A, b, [(0, 3)] * 3)
            assert sol.objective == pytest.approx(ref, abs=1e-8)

    def test_l2_cone_refinement_fixed_input(self):
        # eps*t >= theta*||x||_2 with x frozen: t converges to theta*||x||/eps
        eps, theta = 0.25, 0.8
        xval = np.array([1.5, -2.0])
        model = MipModel(
            variables=(
                Variable("t", lb=0.0, ub=np.inf),
                Variable("x_0", lb=xval[0], ub=xval[0]),
                Variable("x_1", lb=xval[1], ub=xval[1]),
            ),
            linear_rows=(),
            cone_rows=(
                ConeRow(
                    out={"t": eps},
                    scale=theta,
                    inputs=(({"x_0": 1.0}, 0.0), ({"x_1": 1.0}, 0.0)),
                    dual="l2",
                ),
            ),
            objective={"t": 1.0},
        )
        sol = solve_lp(model)
        want = theta * float(np.linalg.norm(xval)) / eps
        assert sol.primal["t"] == pytest.approx(want, rel=1e-6)


class TestSolveMip:
    def test_single_binary_node_count(self):
        inst = rand_instance(30, N=1, epsilon=0.5)
        report = solve_mip(build_knapsack(inst, compute_bigM_domain(inst)))
        assert report.status == OPTIMAL
        assert report.nodes <= 3

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_enumeration(self, seed):
        inst = rand_instance(seed + 100, N=8, P=2, epsilon=0.25, theta=0.01)
        M = compute_bigM_domain(inst)
        report = solve_mip(build_knapsack(inst, M))
        ref, _ = enumerate_optimum(inst, "knapsack")
        assert mip_agrees(report, ref)

    def test_improved_root_at_least_basic(self):
        for seed in range(6):
            inst = rand_instance(seed + 200, N=8, epsilon=0.25, theta=0.02)
            M = compute_bigM_domain(inst)
            qt = build_quantile_table(
                inst, QuantileConfig(mode="exact-individual")
            ).coefficient_safe(inst)
            basic_root = solve_lp(build_basic(inst, M)).objective
            improved_root = solve_lp(build_improved(inst, M, qt)).objective
            assert improved_root >= basic_root - 1e-9

    def test_budget_exhausted_still_reports(self):
        for seed in range(31, 60):
            inst = rand_instance(seed, N=10, epsilon=0.3, theta=0.01)
            model = build_knapsack(inst, compute_bigM_domain(inst))
            full = solve_mip(model)
            if full.status == OPTIMAL and full.nodes >= 4:
                break
        else:
            pytest.skip("no multi-node instance found")
        report = solve_mip(model, node_limit=1)
        assert report.status == BUDGET_EXHAUSTED
        assert np.isfinite(report.lower_bound)
        assert report.lower_bound <= full.upper_bound + 1e-9
        assert report.gap_percent >= 0 or not np.isfinite(report.gap_percent)

    def test_determinism(self):
        inst = rand_instance(32, N=9, P=2, epsilon=0.25, theta=0.01)
        model = build_knapsack(inst, compute_bigM_domain(inst))
        a = solve_mip(model)
        b = solve_mip(model)
        assert a.upper_bound == b.upper_bound
        assert a.lower_bound == b.lower_bound
        assert a.nodes == b.nodes
        assert a.solution == b.solution

    def test_bound_monotonicity_in_log(self):
        inst = rand_instance(33, N=10, epsilon=0.3, theta=0.005)
        lines = []
        solve_mip(build_knapsack(inst, compute_bigM_domain(inst)), log=lines.append)
        ubs, lbs = [], []
        for line in lines:
            kv = dict(tok.split("=") for tok in line.split())
            lbs.append(float(kv["lb"]))
            ubs.append(float(kv["ub"]))
        assert all(u2 <= u1 + 1e-9 for u1, u2 in zip(ubs, ubs[1:]))
        finite_lbs = [v for v in lbs if np.isfinite(v)]
        assert all(l2 >= l1 - 1e-9 for l1, l2 in zip(finite_lbs, finite_lbs[1:]))

    def test_infeasible_model(self):
        model = MipModel(
            variables=(Variable("x", lb=0.0, ub=1.0), Variable("z", "binary", 0, 1)),
            linear_rows=(LinearRow({"x": 1.0}, GE, 2.0, "row"),),
            cone_rows=(),
            objective={"x": 1.0},
        )
        report = solve_mip(model)
        assert report.status == "infeasible"


class TestRootGap:
    def test_zero_when_incumbent_equals_root(self):
        model = toy_model()
        assert root_gap(model, incumbent=3.0) == pytest.approx(0.0)

    def test_definition(self):
        model = toy_model()
        assert root_gap(model, incumbent=3.0 * 1.2309) == pytest.approx(23.09)

    def test_requires_incumbent(self):
        with pytest.raises(NoIncumbent):
            root_gap(toy_model(), incumbent=np.inf)

    def test_gap_formula(self):
        assert gap_percent(123.09, 100.0) == pytest.approx(23.09)
        assert gap_percent(1.0, 1.0) == 0.0
        assert not np.isfinite(gap_percent(np.inf, 1.0))
