import numpy as np
import pytest

from drccp.errors import RedundantIndex, TooManySubsets
from drccp.formulation import build_knapsack, compute_bigM_domain
from drccp.mixing import (
    MixingCut,
    MixingCutSource,
    SortedBaseProfile,
    base_inequality,
    count_separation_ops,
    cut_to_row,
    enumerate_all_cuts,
    profiles_from_table,
    separate,
    strengthened_base_pair,
)
from drccp.quantile import EXACT_JOINT, JOINT, QuantileConfig, build_quantile_table
from drccp.solver import solve_lp

from helpers import rand_instance


def profile_from(values, k, mu=None):
    mu = np.array([1.0]) if mu is None else mu
    return SortedBaseProfile.from_values(mu, values, k)


def feasible_points(inst, M, n_objectives=3):
    """Sample vertices of the knapsack formulation across indicator patterns."""
    from itertools import combinations

    model = build_knapsack(inst, M)
    pts = []
    for count in range(inst.k + 1):
        for ones in combinations(range(inst.N), count):
            overrides = {
                f"z_{i}": (1.0, 1.0) if i in ones else (0.0, 0.0)
                for i in range(inst.N)
            }
            sol = solve_lp(model, bound_overrides=overrides)
            if sol.status != "optimal":
                continue
            pts.append(sol.primal)
    return pts


class TestProfile:
    def test_sorted_and_threshold(self):
        prof = profile_from([3.0, 9.0, 5.0, 1.0], k=1)
        assert [j for j, _ in prof.h_sorted] == [1, 2, 0, 3]
        assert prof.threshold == 5.0

    def test_tie_break_ascending_index(self):
        prof = profile_from([7.0, 7.0, 1.0], k=1)
        assert [j for j, _ in prof.h_sorted] == [0, 1, 2]

    def test_candidates_strictly_above_threshold(self):
        prof = profile_from([5.0, 9.0, 5.0, 1.0], k=2)
        assert prof.candidates() == [(1, 9.0)]


class TestBaseInequality:
    def test_threshold_element_degenerates(self):
        prof = profile_from([9.0, 5.0, 3.0], k=1)
        cut = base_inequality(prof, 1)  # value 5 = threshold
        assert cut.J == ()
        assert cut.rhs == 5.0

    def test_top_element(self):
        prof = profile_from([9.0, 5.0, 3.0], k=1)
        cut = base_inequality(prof, 0)
        assert cut.J == (0,)
        assert cut.coefficients == (4.0,)
        assert cut.rhs == 9.0

    def test_redundant_raises(self):
        prof = profile_from([9.0, 5.0, 3.0], k=1)
        with pytest.raises(RedundantIndex):
            base_inequality(prof, 2)

    def test_valid_on_feasible_points(self):
        inst = rand_instance(80, N=6, epsilon=0.34, theta=0.01)
        M = compute_bigM_domain(inst)
        qt = build_quantile_table(
            inst, QuantileConfig(mode=EXACT_JOINT, relaxation=JOINT)
        )
        profiles = profiles_from_table(inst, qt)
        pts = feasible_points(inst, M)
        assert pts
        for prof in profiles:
            for pos in range(inst.k + 1):
                scen = prof.h_sorted[pos][0]
                cut = base_inequality(prof, scen)
                for pt in pts:
                    x = np.array([pt[f"x_{j}"] for j in range(inst.L)])
                    z = {i: pt[f"z_{i}"] for i in range(inst.N)}
                    assert cut.violation(x, z) <= 1e-7


class TestStrengthenedPair:
    def test_substitution_identities(self):
        inst = rand_instance(81, N=5, P=2)
        qt = build_quantile_table(inst, QuantileConfig(mode="exact-individual"))
        rng = np.random.default_rng(0)
        for i in range(inst.N):
            for p in range(inst.P):
                if not np.isfinite(qt.q[i, p]):
                    continue
                quant_row, relaxed_row = strengthened_base_pair(i, p, qt, inst)
                mu = inst.safety.row_coefficient(inst.scenarios[i])[p]
                const = float(inst.safety.row_constant(inst.scenarios[i])[p])
                x = rng.uniform(0, 1, size=inst.L)
                mu_x = float(mu @ x)

                def eval_row(row, z):
                    val = sum(
                        c * (z if name == f"z_{i}" else x[int(name[2:])])
                        for name, c in row.coeffs.items()
                    )
                    return val - row.rhs

                # z = 1: relaxed row reduces to the quantile row
                assert eval_row(relaxed_row, 1.0) == pytest.approx(
                    mu_x - qt.q[i, p], abs=1e-9
                )
                # z = 0: relaxed row is the scenario's original safety row
                assert eval_row(relaxed_row, 0.0) == pytest.approx(
                    mu_x + const, abs=1e-9
                )

    def test_valid_on_feasible_points(self):
        inst = rand_instance(82, N=6, epsilon=0.34, theta=0.01)
        M = compute_bigM_domain(inst)
        qt = build_quantile_table(
            inst, QuantileConfig(mode=EXACT_JOINT, relaxation=JOINT)
        )
        pts = feasible_points(inst, M)
        assert pts
        for i in range(inst.N):
            for p in range(inst.P):
                if not np.isfinite(qt.q[i, p]):
                    continue
                for row in strengthened_base_pair(i, p, qt, inst):
                    for pt in pts:
                        val = sum(c * pt[name] for name, c in row.coeffs.items())
                        assert val >= row.rhs - 1e-7


class TestSeparation:
    def test_no_cut_when_z_zero_and_x_large(self):
        prof = profile_from([9.0, 5.0, 3.0, 1.0], k=2)
        z = {j: 0.0 for j in range(4)}
        assert separate(prof, np.array([9.0]), z) is None

    def test_no_cut_when_z_one_and_x_at_threshold(self):
        prof = profile_from([9.0, 5.0, 3.0, 1.0], k=2)
        z = {j: 1.0 for j in range(4)}
        assert separate(prof, np.array([3.0]), z) is None

    def test_violated_cut_found(self):
        prof = profile_from([9.0, 5.0, 3.0, 1.0], k=2)
        z = {0: 0.2, 1: 0.1, 2: 0.0, 3: 0.0}
        cut = separate(prof, np.array([4.0]), z)
        assert cut is not None
        assert cut.violation(np.array([4.0]), z) > 0

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        N = int(rng.integers(4, 9))
        k = int(rng.integers(0, min(4, N - 1) + 1))
        values = rng.uniform(-5, 5, size=N)
        z = {j: float(rng.uniform(0, 1)) for j in range(N)}
        x = np.array([float(rng.uniform(-6, 6))])
        prof = profile_from(values, k)
        best = max(
            (cut.violation(x, z) for cut in enumerate_all_cuts(prof)), default=0.0
        )
        got = separate(prof, x, z, tol=1e-6)
        if got is None:
            assert best <= 1e-6 + 1e-9
        else:
            assert got.violation(x, z) == pytest.approx(best, abs=1e-9)

    def test_neg_inf_threshold_skipped(self):
        prof = profile_from([3.0, -np.inf], k=1)
        assert separate(prof, np.array([0.0]), {0: 0.0, 1: 0.0}) is None


class TestEnumerate:
    def test_k_zero_single_degenerate(self):
        prof = profile_from([4.0, 2.0], k=0)
        cuts = enumerate_all_cuts(prof)
        assert len(cuts) == 1
        assert cuts[0].J == ()
        assert cuts[0].rhs == 4.0

    def test_k_two_count(self):
        prof = profile_from([9.0, 5.0, 3.0, 1.0], k=2)
        cuts = enumerate_all_cuts(prof)
        assert len(cuts) == 2**2 - 1 + 1

    def test_guard(self):
        values = list(range(50))
        prof = profile_from(values, k=25)
        with pytest.raises(TooManySubsets):
            enumerate_all_cuts(prof)

    def test_all_enumerated_cuts_valid(self):
        inst = rand_instance(83, N=6, epsilon=0.34, theta=0.005)
        M = compute_bigM_domain(inst)
        qt = build_quantile_table(
            inst, QuantileConfig(mode=EXACT_JOINT, relaxation=JOINT)
        )
        pts = feasible_points(inst, M)
        assert pts
        for prof in profiles_from_table(inst, qt):
            for cut in enumerate_all_cuts(prof):
                for pt in pts:
                    x = np.array([pt[f"x_{j}"] for j in range(inst.L)])
                    z = {i: pt[f"z_{i}"] for i in range(inst.N)}
                    assert cut.violation(x, z) <= 1e-7


class TestCutStructure:
    def test_telescoping_and_nonnegativity(self):
        rng = np.random.default_rng(84)
        for _ in range(50):
            values = rng.uniform(-3, 3, size=7)
            prof = profile_from(values, k=3)
            for cut in enumerate_all_cuts(prof):
                assert all(c >= -1e-12 for c in cut.coefficients)
                assert sum(cut.coefficients) == pytest.approx(
                    cut.rhs - prof.threshold, abs=1e-9
                )

    def test_singleton_equals_base(self):
        prof = profile_from([9.0, 5.0, 3.0, 1.0], k=2)
        for j, v in prof.candidates():
            base = base_inequality(prof, j)
            single = [c for c in enumerate_all_cuts(prof) if c.J == (j,)]
            assert len(single) == 1
            assert single[0].coefficients == base.coefficients
            assert single[0].rhs == base.rhs

    def test_lemma_new_bigM_pointwise(self):
        inst = rand_instance(85, N=6, epsilon=0.34, theta=0.01)
        M = compute_bigM_domain(inst)
        qt = build_quantile_table(
            inst, QuantileConfig(mode=EXACT_JOINT, relaxation=JOINT)
        ).coefficient_safe(inst)
        pts = feasible_points(inst, M)
        assert pts
        for pt in pts:
            x = np.array([pt[f"x_{j}"] for j in range(inst.L)])
            t = pt["t"]
            for i in range(inst.N):
                zi = pt[f"z_{i}"]
                y = t - pt[f"r_{i}"]
                coefs = inst.safety.row_coefficient(inst.scenarios[i])
                consts = inst.safety.row_constant(inst.scenarios[i])
                for p in range(inst.P):
                    if not np.isfinite(qt.q[i, p]):
                        continue
                    s_val = float(coefs[p] @ x) + float(consts[p])
                    C = C2 = M.values[i]
                    C1 = -float(consts[p]) - float(qt.q[i, p])
                    assert C * (1 - zi) >= y - 1e-7
                    assert s_val + C1 * zi >= -1e-7
                    assert s_val + C2 * zi >= y - 1e-7
                    # the lemma's conclusion
                    assert s_val + C1 * zi >= y - 1e-6


class TestOpsCounting:
    def test_counts_track_n_log_n(self):
        rng = np.random.default_rng(86)
        ratios = []
        for N in (1000, 4000):
            values = rng.uniform(-1, 1, size=N)
            z = rng.uniform(0, 1, size=N)
            _, ops = count_separation_ops(values, z, k=N // 10)
            ratios.append(ops / (N * np.log2(N)))
        assert 0.2 <= ratios[0] <= 2.0
        assert max(ratios) / min(ratios) <= 2.0

    def test_counting_agrees_with_separate(self):
        rng = np.random.default_rng(87)
        for _ in range(20):
            N = int(rng.integers(5, 12))
            k = int(rng.integers(1, N))
            values = rng.uniform(-2, 2, size=N)
            z = rng.uniform(0, 1, size=N)
            mu_x = float(rng.uniform(-3, 3))
            prof = profile_from(values, k)
            want = separate(prof, np.array([mu_x]), dict(enumerate(z)))
            got, _ = count_separation_ops(values, z, k, x_mu_value=mu_x)
            if want is None:
                assert got is None
            else:
                assert got.J == want.J
                assert got.rhs == want.rhs


class TestCutSource:
    def test_dedupe_and_rows(self):
        inst = rand_instance(88, N=6, epsilon=0.34, theta=0.01)
        qt = build_quantile_table(
            inst, QuantileConfig(mode=EXACT_JOINT, relaxation=JOINT)
        )
        profiles = profiles_from_table(inst, qt)
        source = MixingCutSource(profiles, inst.L)
        primal = {f"x_{j}": 0.0 for j in range(inst.L)}
        primal.update({f"z_{i}": 0.0 for i in range(inst.N)})
        first = source.separate(primal)
        again = source.separate(primal)
        assert not again  # identical point, everything deduplicated
        for row in first:
            assert row.label == "cut"
            assert row.sense == ">="
