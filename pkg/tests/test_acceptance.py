"""Acceptance checks, one recorded verdict per criterion.

Each check logs a PASS/FAIL line through the ``record`` fixture; the lines are
printed in an "acceptance criteria" block at the end of the run. Checks that
are known not to reach the published figures are strict xfails: they still
run at the stated tolerance and print FAIL.
"""

import itertools
import time

import numpy as np
import pytest

from optdesign.analytic import (
    ThreePointProblem,
    solve_three_point,
    three_point_coefficients,
)
from optdesign.fisher import (
    DesignApprox,
    DesignExact,
    analyze_rank,
    build_h_stack,
    fisher_huh,
    fisher_total,
    log_u_determinant,
    subspace_intersection_dim,
    u_block_matrix,
)
from optdesign.io import read_prior_csv
from optdesign.model import LinkKind, ModelSpec
from optdesign.optimize import (
    OptimizerConfig,
    PriorSample,
    design_logdet,
    efficiency,
    equivalence_check,
    ew_lift_one,
    exchange,
    grid_search,
    lift_one,
)

from helpers import (
    LINKS,
    ODDS,
    nullspace_intersection_dim,
    random_instance,
    three_point_oracle,
)
from test_fisher import common_block_model, nested_blocks_model, equal_blocks_model
from test_io_cli import DATA

FLIES_TABLE = np.array([0.3116, 0, 0.2917, 0.1071, 0.2896, 0, 0])
FLIES_EXACT = np.array([1091, 0, 1021, 374, 1014, 0, 0])


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


class TestFliesApprox:
    def test_weights_and_runtime(self, flies_example, record):
        ex = flies_example
        res, dt = timed(lift_one, ex.model, ex.theta, ex.points)
        err = np.abs(res.design.weights - FLIES_TABLE).max()
        ok = record("1 flies lift-one weights +-0.001, <1 s", err <= 1e-3 and dt < 1,
                    f"max err {err:.5f}, {dt:.3f} s")
        assert ok


class TestFliesExact:
    def test_objective_and_runtime(self, flies_example, record):
        ex = flies_example
        res, dt = timed(exchange, ex.model, ex.theta, ex.points, 3500)
        ref = fisher_total(ex.model, ex.theta, DesignExact(ex.points, FLIES_EXACT)).logdet
        gap = res.logdet - ref
        ok = record("2 flies exchange n=3500 logdet >= reference allocation - 1e-9, <5 s",
                    gap >= -1e-9 and dt < 5,
                    f"counts {res.design.counts.tolist()}, gap {gap:.2e}, {dt:.3f} s")
        assert ok


class TestTrauma:
    def test_approximate(self, trauma_example, record):
        ex = trauma_example
        res, dt = timed(lift_one, ex.model, ex.theta, ex.points)
        err = np.abs(res.design.weights - [0.5, 0, 0, 0.5]).max()
        ok = record("3a trauma lift-one (0.5,0,0,0.5) +-0.001, <1 s", err <= 1e-3 and dt < 1,
                    f"max err {err:.2e}, {dt:.3f} s")
        assert ok

    def test_exact(self, trauma_example, record):
        ex = trauma_example
        res, dt = timed(exchange, ex.model, ex.theta, ex.points, 802)
        counts = res.design.counts.tolist()
        ok = record("3b trauma exchange n=802 -> (401,0,0,401), <1 s",
                    counts == [401, 0, 0, 401] and dt < 1, f"{counts}, {dt:.3f} s")
        assert ok


class TestEfficiencies:
    @pytest.mark.xfail(strict=True, reason="the quoted parameter estimates are rounded; "
                       "the recomputed efficiency is 0.7448")
    def test_trauma_original(self, trauma_example, record):
        ex = trauma_example
        opt = lift_one(ex.model, ex.theta, ex.points).design
        eff = efficiency(ex.model, ex.theta, DesignExact(ex.points, ex.allocation), opt)
        ok = record("4a trauma original vs optimal = 0.747 +-0.002", abs(eff - 0.747) <= 2e-3,
                    f"got {eff:.4f}")
        assert ok

    def test_flies_uniform(self, flies_example, record):
        ex = flies_example
        opt = lift_one(ex.model, ex.theta, ex.points).design
        eff = efficiency(ex.model, ex.theta, DesignApprox.uniform(ex.points), opt)
        ok = record("4b flies uniform vs optimal = 0.831 +-0.002", abs(eff - 0.831) <= 2e-3,
                    f"got {eff:.4f}")
        assert ok


GRID_CASES = {
    5: ([80, 120, 125, 155, 160], [0.3163, 0.1429, 0.2003, 0.1683, 0.1723]),
    1: ([80, 122, 123, 157, 158], [0.3163, 0.0786, 0.2636, 0.2206, 0.1209]),
}


@pytest.fixture(scope="module")
def grid_results(flies_example):
    ex = flies_example
    return {step: grid_search(ex.model, ex.theta, [(80, 200, step)]) for step in GRID_CASES}


class TestGrid:
    @pytest.mark.parametrize("step", [5, 1])
    def test_support(self, step, grid_results, record):
        res = grid_results[step]
        support = res.support.points.ravel().tolist()
        ok = record(f"5 grid step {step} support", support == GRID_CASES[step][0]
                    and res.report.optimal, f"{support}, slack {res.report.max_slack:.1e}")
        assert ok

    # the objective is nearly flat in how weight splits between neighbouring
    # grid points, so rounding in the quoted estimates moves the split
    @pytest.mark.xfail(strict=True, reason="weights of adjacent support points are "
                       "ill-determined; see the decisions ledger")
    @pytest.mark.parametrize("step", [5, 1])
    def test_weights(self, step, grid_results, record):
        w = grid_results[step].support.weights
        err = np.abs(w - GRID_CASES[step][1]).max()
        ok = record(f"5 grid step {step} weights +-0.002", err <= 2e-3,
                    f"{np.round(w, 4).tolist()}, max err {err:.4f}")
        assert ok

    @pytest.mark.xfail(strict=True, reason="the three integer doses fall 0.25-0.36 away "
                       "from the continuous optimum; efficiency is 0.99987")
    def test_three_point_efficiency(self, flies_example, grid_results, record):
        ex = flies_example
        three = DesignApprox([80.0, 123.0, 157.0], np.array([0.3163, 0.3422, 0.3415]) / 1.0)
        eff = efficiency(ex.model, ex.theta, three, grid_results[1].design)
        ok = record("5 three-point (80,123,157) efficiency >= 0.9999", eff >= 0.9999,
                    f"got {eff:.6f}")
        assert ok


class TestBayesianEW:
    def test_degenerate_prior(self, flies_example, record):
        ex = flies_example
        ew = ew_lift_one(ex.model, PriorSample(ex.theta[None, :]), ex.points)
        local = lift_one(ex.model, ex.theta, ex.points)
        err = np.abs(ew.design.weights - local.design.weights).max()
        ok = record("6a EW with single-draw prior matches lift-one 1e-6", err <= 1e-6,
                    f"max err {err:.1e}")
        assert ok

    def test_synthetic_prior(self, flies_example, record):
        ex = flies_example
        thetas, _ = read_prior_csv(DATA / "flies_prior.csv", ex.model)
        rel = np.abs(thetas / ex.theta - 1).max()
        ew = ew_lift_one(ex.model, PriorSample(thetas), ex.points)
        local = lift_one(ex.model, ex.theta, ex.points)
        eff = efficiency(ex.model, ex.theta, ew.design, local.design)
        ok = record("6b EW (200 draws, +-5%) efficiency vs local > 0.98",
                    eff > 0.98 and thetas.shape[0] == 200 and rel <= 0.05,
                    f"got {eff:.5f}")
        assert ok


def property_instances(n_total=100, seed=7):
    rng = np.random.default_rng(seed)
    combos = list(itertools.product(LINKS, ODDS))
    for k in range(n_total):
        link, odds = combos[k % len(combos)]
        yield (link, odds) + random_instance(rng, link, odds) + (rng,)


class TestProperties:
    def test_three_forms(self, record):
        worst = 0.0
        for _, _, model, theta, pts, rng in property_instances():
            design = DesignExact(pts, rng.integers(1, 50, pts.shape[0]))
            F = fisher_total(model, theta, design).F
            huh = fisher_huh(model, theta, design).F
            gw = design.n * fisher_total(model, theta, design.to_approx()).F
            scale = np.linalg.norm(F)
            worst = max(worst, np.linalg.norm(F - huh) / scale, np.linalg.norm(F - gw) / scale)
        ok = record("7 three Fisher forms agree to 1e-9 (100 instances)", worst <= 1e-9,
                    f"worst {worst:.1e}")
        assert ok

    def test_homogeneity(self, record):
        worst = 0.0
        for _, _, model, theta, pts, rng in property_instances():
            w = rng.dirichlet(np.ones(pts.shape[0]))
            base = fisher_total(model, theta, DesignApprox(pts, w)).logdet
            for c in (2.0, 10.0):
                # F is linear in unnormalized weights: F(c w) = c F(w)
                Fc = c * fisher_total(model, theta, DesignApprox(pts, w)).F
                _, ld = np.linalg.slogdet(Fc)
                rel = abs(np.expm1(ld - base - model.p * np.log(c)))
                worst = max(worst, rel)
        ok = record("7 det homogeneous of order p", worst <= 1e-8, f"worst {worst:.1e}")
        assert ok

    def test_degree_bound(self, record):
        bad = 0
        for _, _, model, theta, pts, rng in property_instances():
            k_min = analyze_rank(model, pts).k_min
            sub = pts[rng.permutation(pts.shape[0])[:k_min - 1]]
            if k_min > 1 and not fisher_total(model, theta, DesignApprox.uniform(sub)).is_singular:
                bad += 1
        ok = record("7 support below k_min gives singular F", bad == 0, f"{bad} violations")
        assert ok

    def test_u_determinant(self, record):
        worst = 0.0
        for _, _, model, theta, pts, rng in property_instances():
            design = DesignExact(pts, rng.integers(1, 9, pts.shape[0]))
            _, direct = np.linalg.slogdet(u_block_matrix(model, theta, design))
            rel = abs(np.expm1(log_u_determinant(model, theta, design) - direct))
            worst = max(worst, rel)
        ok = record("7 |U| closed form to 1e-9", worst <= 1e-9, f"worst {worst:.1e}")
        assert ok


def simplex_grid_best(model, theta, pts, step=0.02):
    best = -np.inf
    for a in np.arange(step, 1, step):
        for b in np.arange(step, 1 - a - step / 2, step):
            w = np.array([a, b, 1 - a - b])
            best = max(best, design_logdet(model, theta, DesignApprox(pts, w)))
    return best


FLIES_TRIPLES = [(80.0, 120.0, 160.0), (80.0, 140.0, 200.0), (100.0, 140.0, 180.0),
                 (80.0, 100.0, 200.0)]


class TestOracles:
    def test_lift_one_vs_simplex_grid(self, flies_example, record):
        ex = flies_example
        worst = np.inf
        for triple in FLIES_TRIPLES:
            pts = np.array(triple)
            res = lift_one(ex.model, ex.theta, pts)
            worst = min(worst, res.logdet - simplex_grid_best(ex.model, ex.theta, pts))
        ok = record("8 lift-one >= simplex grid (step 0.02) - 1e-6", worst >= -1e-6,
                    f"min margin {worst:.2e}")
        assert ok

    def test_exchange_vs_enumeration(self, flies_example, trauma_example, record):
        cases = [(flies_example, [80.0, 120.0, 160.0]), (flies_example, [80.0, 140.0, 200.0]),
                 (trauma_example, [1.0, 2.0, 4.0]), (trauma_example, [1.0, 3.0])]
        misses = 0
        for ex, pts in cases:
            pts = np.array(pts)
            m = pts.size
            for n in range(analyze_rank(ex.model, pts).k_min, 9):
                best = -np.inf
                for counts in itertools.product(range(n + 1), repeat=m):
                    if sum(counts) == n:
                        best = max(best, fisher_total(ex.model, ex.theta,
                                                      DesignExact(pts, counts)).logdet)
                got = exchange(ex.model, ex.theta, pts, n).logdet
                misses += got < best - 1e-9
        ok = record("8 exchange matches exhaustive enumeration (n<=8, m<=3)", misses == 0,
                    f"{misses} misses")
        assert ok

    def test_three_point(self, flies_example, record):
        ex = flies_example
        err_num, err_lift = 0.0, 0.0
        for triple in FLIES_TRIPLES:
            for model in (ex.model, ModelSpec(1, 3, LinkKind.CUMULATIVE, ex.model.h)):
                theta = ex.theta if model is ex.model else np.array(
                    [-3.0, 0.01, 1e-5, -1.0, 0.004])
                _, *c = three_point_coefficients(model, theta, *triple)
                problem, order = ThreePointProblem.from_unsorted(*c)
                w_sorted = solve_three_point(problem)
                err_num = max(err_num, np.abs(
                    np.array(w_sorted) - three_point_oracle(np.sort(c))).max())
                w = np.empty(3)
                w[order] = w_sorted
                lifted = lift_one(model, theta, np.array(triple)).design.weights
                err_lift = max(err_lift, np.abs(w - lifted).max())
        ok = record("8 three-point closed form vs numeric 1e-8 and lift-one 1e-6",
                    err_num <= 1e-8 and err_lift <= 1e-6,
                    f"numeric {err_num:.1e}, lift-one {err_lift:.1e}")
        assert ok

    def test_certificates(self, flies_example, trauma_example, record):
        runs = [(flies_example.model, flies_example.theta, flies_example.points),
                (trauma_example.model, trauma_example.theta, trauma_example.points)]
        rng = np.random.default_rng(3)
        for link, odds in itertools.product(LINKS, ODDS):
            runs.append(random_instance(rng, link, odds))
        uncertified = 0
        for model, theta, pts in runs:
            res = lift_one(model, theta, pts, OptimizerConfig())
            if res.converged and not equivalence_check(model, theta, res.design, 1e-8).optimal:
                uncertified += 1
            uncertified += not res.converged
        ok = record("8 equivalence check certifies converged lift-one runs", uncertified == 0,
                    f"{len(runs)} runs, {uncertified} uncertified")
        assert ok


class TestRankAnalytics:
    def test_examples(self, record):
        rng = np.random.default_rng(11)
        p_h = analyze_rank(nested_blocks_model(), rng.normal(size=(8, 4))).p_H
        k1 = analyze_rank(equal_blocks_model(), rng.normal(size=(8, 4))).k_min
        k3 = analyze_rank(common_block_model(), rng.normal(size=(8, 3))).k_min
        model = nested_blocks_model()
        hs = build_h_stack(model, rng.normal(size=(8, 4)))
        direct = subspace_intersection_dim([b for b in hs.blocks])
        ok = record("9 p_H = 2, k_min = 5, k_min = 3 on the worked examples",
                    (p_h, k1, k3, direct) == (2, 5, 3, 2), f"got {(p_h, k1, k3)}")
        assert ok

    def test_random_families(self, record):
        rng = np.random.default_rng(5)
        mismatches = 0
        for _ in range(50):
            m = int(rng.integers(3, 10))
            common = rng.normal(size=(int(rng.integers(0, 4)), m))
            mats = [np.vstack([common, rng.normal(size=(int(rng.integers(0, 4)), m))])
                    for _ in range(int(rng.integers(2, 5)))]
            mats = [M if M.shape[0] else np.zeros((1, m)) for M in mats]
            mismatches += subspace_intersection_dim(mats) != nullspace_intersection_dim(mats)
        ok = record("9 intersection dim matches null-space oracle (50 families)",
                    mismatches == 0, f"{mismatches} mismatches")
        assert ok
