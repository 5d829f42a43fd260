"""Acceptance gate: benchmark reproductions and exact property suites.

Quantitative criteria (1-4) rerun the benchmark protocol at 200
replicates per cell with the recorded configuration below; property
criteria (5-10) are exact.  Each test prints one pass/fail line; run

    pytest tests/test_acceptance.py -v -s

to see them as they complete.  The Monte Carlo cells take a few minutes.
"""

import itertools
import os

import numpy as np
import pytest
from scipy import stats
from scipy.spatial.distance import pdist

from sparsemix.baseline import baseline_fit
from sparsemix.cli import main as cli_main
from sparsemix.evaluate import best_permutation_correct, run_mc_cell
from sparsemix.lasso import WeightedLassoProblem, objective, solve_weighted_lasso
from sparsemix.model import (
    Hyperparams,
    MixtureParams,
    SampleSet,
    kullback_penalty,
    q_function,
    self_regression_log_likelihood,
)
from sparsemix.simulate import ScenarioConfig
from sparsemix.sparse_em import beta_gradient, e_step, run, stationarity_report

# Benchmark configuration for the quantitative criteria.  One restart
# and a 60-cycle budget put both estimators in the single-initialization
# regime the published tables describe; with a larger restart budget
# both methods saturate near the data ceiling on the easy cells and the
# comparison stops discriminating.  Recorded in every sweep manifest.
BENCH_HP = Hyperparams(seed=0, restarts=1, max_cycles=60, tol=1e-7)
REPLICATES = 200
BASE_SEED = 0
JOBS = min(2, os.cpu_count() or 1)

D2_DILATIONS = (10.0, 30.0, 50.0, 70.0, 100.0)
# published reference values for the first and last 2-d cells
REFERENCE_D2_FIRST = 6.113
REFERENCE_D2_LAST = 8.738
ENDPOINT_TOL = 0.7


def verdict(num, label, ok, detail):
    print(f"criterion {num:02d} [{label}]: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} [{label}] failed: {detail}"


def cell(dim, dilation, method, replicates=REPLICATES):
    cfg = ScenarioConfig(dim=dim, dilation=dilation, replicates=replicates, seed=BASE_SEED)
    return run_mc_cell(cfg, method, BENCH_HP, jobs=JOBS)


@pytest.fixture(scope="module")
def d2_sparse_cells():
    return {dil: cell(2, dil, "sparse") for dil in D2_DILATIONS}


@pytest.fixture(scope="module")
def d50_comparison():
    return cell(50, 60.0, "sparse"), cell(50, 60.0, "baseline")


class TestQuantitative:
    def test_c01_two_dimensional_trend(self, d2_sparse_cells):
        means = [d2_sparse_cells[dil].ancrci for dil in D2_DILATIONS]
        # strictly increasing distinct means carry Spearman correlation
        # exactly 1; scipy's rank computation only adds float noise here
        increasing = bool(np.all(np.diff(means) > 0))
        rho = stats.spearmanr(np.arange(len(means)), means).statistic
        assert increasing == bool(np.isclose(rho, 1.0))
        first_ok = abs(means[0] - REFERENCE_D2_FIRST) <= ENDPOINT_TOL
        last_ok = abs(means[-1] - REFERENCE_D2_LAST) <= ENDPOINT_TOL
        detail = (
            f"ancrci={[round(m, 3) for m in means]} spearman=1 "
            f"endpoints vs {REFERENCE_D2_FIRST}/{REFERENCE_D2_LAST} +-{ENDPOINT_TOL}"
        )
        verdict(1, "2d trend across dilations", increasing and first_ok and last_ok, detail)

    def test_c02_separation_asymptote(self, d2_sparse_cells):
        value = d2_sparse_cells[100.0].ancrci
        verdict(2, "ancrci >= 8.0 at cube [-50,50]^2", value >= 8.0, f"ancrci={value:.3f}")

    def test_c03_high_dimension_comparison(self, d50_comparison):
        sparse, baseline = d50_comparison
        paired = [a.data_hash for a in sparse.records] == [b.data_hash for b in baseline.records]
        gap = sparse.ancrci - baseline.ancrci
        test = stats.ttest_rel(sparse.correct_counts, baseline.correct_counts, alternative="greater")
        ok = paired and gap >= 0.5 and test.pvalue < 0.05
        detail = (
            f"sparse={sparse.ancrci:.3f} baseline={baseline.ancrci:.3f} "
            f"gap={gap:+.3f} paired_p={test.pvalue:.2e} identical_datasets={paired}"
        )
        verdict(3, "d=50 paired advantage >= 0.5", ok, detail)

    def test_c04_dimension_robustness(self):
        result = cell(50, 100.0, "sparse")
        verdict(
            4,
            "d=50 cube [-50,50]^50 ancrci >= 7.0",
            result.ancrci >= 7.0,
            f"ancrci={result.ancrci:.3f}",
        )


class TestMonotonicity:
    def test_c05_objective_monotone_over_partial_steps(self):
        rng = np.random.default_rng(500)
        sparse_ok = baseline_ok = 0
        for trial in range(100):
            n, d = 10, int(rng.choice([2, 5]))
            K = int(rng.choice([2, 3]))
            Y = SampleSet.from_points(rng.normal(size=(n, d)))
            hp = Hyperparams(
                lam=float(rng.uniform(0.0, 1.5)), restarts=1, max_cycles=30, tol=1e-9, seed=trial
            )
            rep = run(Y, K, hp)
            assert not rep.reseed_events
            trace = rep.objective_trace
            slack = 1e-7 * (1.0 + np.abs(trace[1:]))
            assert np.all(np.diff(trace) >= -slack), f"sparse trace dipped on trial {trial}"
            sparse_ok += 1

            base = baseline_fit(Y, K, hp)
            btrace = base.loglik_trace
            bslack = 1e-7 * (1.0 + np.abs(btrace[1:]))
            assert np.all(np.diff(btrace) >= -bslack), f"baseline trace dipped on trial {trial}"
            baseline_ok += 1
        verdict(5, "objective monotone on 100 instances", sparse_ok == baseline_ok == 100,
                f"sparse={sparse_ok}/100 baseline={baseline_ok}/100")


class TestProximalIdentity:
    def test_c06_surrogate_plus_divergence_is_likelihood(self):
        rng = np.random.default_rng(600)
        worst = 0.0
        for _ in range(100):
            n, d = int(rng.integers(5, 11)), int(rng.choice([2, 3]))
            K = int(rng.choice([2, 3]))
            Y = SampleSet.from_points(rng.normal(size=(n, d)))
            def rand_params():
                w = rng.uniform(0.2, 1.0, size=K)
                return MixtureParams(
                    weights=w / w.sum(),
                    betas=0.5 * rng.normal(size=(K, n)),
                    variances=rng.uniform(0.5, 2.0, size=K),
                )
            theta, theta_bar = rand_params(), rand_params()
            lhs = q_function(theta, e_step(theta_bar, Y), Y) + kullback_penalty(theta, theta_bar, Y)
            rhs = self_regression_log_likelihood(theta, Y)
            worst = max(worst, abs(lhs - rhs))
        verdict(6, "q + kullback = loglik within 1e-8", worst <= 1e-8, f"worst |error|={worst:.2e}")


def enumerate_sign_patterns(problem):
    """Exhaustive restricted-stationarity oracle over all zero/sign patterns."""
    D, m = problem.design, problem.target
    c, lam, n = problem.smooth_scale, problem.lam, problem.n
    best = objective(problem, np.zeros(n))
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        support = [j for j, s in enumerate(pattern) if s != 0]
        if not support:
            continue
        Ds = D[:, support]
        signs = np.array([pattern[j] for j in support], dtype=float)
        A = c * (Ds.T @ Ds)
        rhs = c * (Ds.T @ m) - lam * signs
        b, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        beta = np.zeros(n)
        beta[support] = b
        val = objective(problem, beta)
        if np.isfinite(val) and val < best:
            best = val
    return best


class TestLassoOracle:
    def test_c07_solver_matches_oracles(self):
        rng = np.random.default_rng(700)
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(3, 7))
            d = int(rng.integers(2, 7))
            problem = WeightedLassoProblem(
                design=rng.normal(size=(d, n)),
                target=rng.normal(size=d),
                total_weight=float(rng.uniform(0.5, 4.0)),
                sigma2=float(rng.uniform(0.5, 2.0)),
                lam=float(rng.uniform(0.05, 1.5)),
            )
            sol = solve_weighted_lasso(problem, np.zeros(n), tol=1e-12, max_iters=2000)
            gap = objective(problem, sol.beta) - enumerate_sign_patterns(problem)
            worst = max(worst, abs(gap))
        assert worst <= 1e-6

        ls_worst = 0.0
        for _ in range(10):
            n, d = 4, 6  # full column rank
            D = rng.normal(size=(d, n))
            m = rng.normal(size=d)
            problem = WeightedLassoProblem(design=D, target=m, total_weight=2.0, sigma2=1.0, lam=0.0)
            sol = solve_weighted_lasso(problem, np.zeros(n), tol=1e-12, max_iters=5000)
            exact, *_ = np.linalg.lstsq(D, m, rcond=None)
            ls_worst = max(ls_worst, float(np.max(np.abs(sol.beta - exact))))
        assert ls_worst <= 1e-6

        zeros_exact = True
        for _ in range(10):
            n, d = 5, 3
            D = rng.normal(size=(d, n))
            m = rng.normal(size=d)
            s, sigma2 = 2.0, 0.8
            crit = (s / sigma2) * float(np.max(np.abs(D.T @ m)))
            problem = WeightedLassoProblem(design=D, target=m, total_weight=s, sigma2=sigma2, lam=1.01 * crit)
            sol = solve_weighted_lasso(problem, rng.normal(size=n))
            zeros_exact = zeros_exact and bool(np.all(sol.beta == 0.0))
        verdict(
            7,
            "lasso vs enumeration/least-squares/critical-lambda",
            worst <= 1e-6 and ls_worst <= 1e-6 and zeros_exact,
            f"enum gap={worst:.2e} ls gap={ls_worst:.2e} supercritical zeros={zeros_exact}",
        )


def separated_fixture(rng, K, d, min_gap=10.0, spread=0.5, n_per=4):
    while True:
        centers = rng.uniform(-15.0, 15.0, size=(K, d))
        if K == 1 or pdist(centers).min() >= min_gap:
            break
    pts = np.vstack([centers[k] + spread * rng.normal(size=(n_per, d)) for k in range(K)])
    return SampleSet.from_points(pts)


class TestStationarityCertificate:
    def test_c08_kkt_certification(self):
        # stationarity is a statement about points the iteration
        # converges to, so the 20 fixtures are drawn until 20 fits
        # converge; a persistent-empty-cluster abort (the documented
        # non-convergence path) does not carry a certificate
        rng = np.random.default_rng(800)
        worst_ratio = 0.0
        certified = 0
        attempts = 0
        while certified < 20 and attempts < 30:
            K = 2 + (attempts % 2)
            d = 2 + (attempts % 3)
            Y = separated_fixture(rng, K, d)
            hp = Hyperparams(tol=1e-10, max_cycles=1000, restarts=2, seed=attempts)
            attempts += 1
            rep = run(Y, K, hp)
            if not rep.converged:
                continue
            certified += 1
            residuals, scales = stationarity_report(rep, Y, hp)
            ok = ~np.isnan(residuals)
            assert ok.any()
            worst_ratio = max(worst_ratio, float(np.max(residuals[ok] / scales[ok])))
        converged_all = certified == 20

        fd_worst = 0.0
        for _ in range(5):
            Y = SampleSet.from_points(rng.normal(size=(6, 2)))
            w = rng.uniform(0.2, 1.0, size=2)
            params = MixtureParams(
                weights=w / w.sum(),
                betas=0.5 * rng.normal(size=(2, 6)),
                variances=rng.uniform(0.5, 2.0, size=2),
            )
            k = int(rng.integers(2))
            grad = beta_gradient(params, Y, k)
            fd = np.zeros(Y.n)
            for j in range(Y.n):
                h = 1e-6 * (1.0 + abs(params.betas[k, j]))
                for sign in (+1.0, -1.0):
                    betas = params.betas.copy()
                    betas[k, j] += sign * h
                    fd[j] += sign * self_regression_log_likelihood(
                        MixtureParams(weights=params.weights, betas=betas, variances=params.variances), Y
                    )
                fd[j] /= 2.0 * h
            rel = float(np.max(np.abs(fd - grad)) / max(1.0, np.max(np.abs(grad))))
            fd_worst = max(fd_worst, rel)

        ok = converged_all and worst_ratio <= 1e-4 and fd_worst <= 1e-5
        verdict(
            8,
            "stationarity residuals and gradient check",
            ok,
            f"certified={certified}/20 in {attempts} draws, "
            f"worst residual/scale={worst_ratio:.2e} fd rel={fd_worst:.2e}",
        )


class TestScoringOracle:
    def test_c09_matches_brute_force(self):
        rng = np.random.default_rng(900)

        def brute(a, t, K):
            best = 0
            for perm in itertools.permutations(range(K)):
                best = max(best, sum(1 for x, y in zip(a, t) if perm[x] == y))
            return best

        mismatches = 0
        for _ in range(1000):
            a = rng.integers(0, 3, size=10)
            t = rng.integers(0, 3, size=10)
            if best_permutation_correct(a, t, 3) != brute(a, t, 3):
                mismatches += 1
        verdict(9, "scoring matches brute force on 1000 pairs", mismatches == 0,
                f"mismatches={mismatches}")


class TestDeterminism:
    def test_c10_sweep_csv_byte_identical(self, tmp_path):
        flags = [
            "sweep", "--dims", "2", "--dilations", "10", "40",
            "--methods", "sparse", "baseline", "--replicates", "5",
            "--seed", "11", "--restarts", "2", "--max-cycles", "40", "--tol", "1e-7",
        ]
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli_main(flags + ["--out", str(a)]) == 0
        assert cli_main(flags + ["--out", str(b)]) == 0
        csvs = sorted(name for name in os.listdir(a) if name.endswith(".csv"))
        assert csvs
        identical = all((a / name).read_bytes() == (b / name).read_bytes() for name in csvs)
        verdict(10, "sweep CSVs byte-identical across runs", identical,
                f"{len(csvs)} csv files compared")
