import numpy as np
import pytest

from oracles import orthonormal_design, random_problem_data, soft_threshold
from splam import Penalty, Problem, SolverConfig, fit, fit_bcd, fit_bcgd, fit_fista, fit_ista
from splam.path import lambda_max
from splam.prox import prox_block
from splam.solvers import optimality_residual, resolve_algorithm, run_active_set

SOLVERS = {"ista": fit_ista, "fista": fit_fista, "bcgd": fit_bcgd, "bcd": fit_bcd}


def problem(seed, loss="quadratic", N=150, widths=None, orthonormal=True):
    rng = np.random.default_rng(seed)
    widths = rng.integers(1, 6, 8) if widths is None else np.asarray(widths)
    X, y = random_problem_data(rng, N, widths, loss, orthonormal=orthonormal)
    return Problem(X, y, widths, loss=loss)


def solvers_for(loss):
    return ["ista", "fista", "bcgd", "bcd"] if loss == "quadratic" else ["ista", "fista", "bcgd"]


class TestConfig:
    @pytest.mark.parametrize("kw", [{"tol": 0.0}, {"shrink": 1.0}, {"shrink": 0.0},
                                    {"algorithm": "newton"}, {"max_sweeps": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_auto_choice(self):
        assert resolve_algorithm(problem(0)) == "bcd"
        assert resolve_algorithm(problem(0, loss="logistic")) == "bcgd"
        assert resolve_algorithm(problem(0, orthonormal=False)) == "bcgd"


class TestZeroAboveLambdaMax:
    @pytest.mark.parametrize("alg", ["ista", "fista", "bcgd", "bcd"])
    def test_zero(self, alg):
        p = problem(1)
        lm = lambda_max(p, 0.4)
        res = SOLVERS[alg](p, Penalty(lm * 1.001, 0.4))
        assert not np.any(res.coef)
        assert res.status == ["zero"] * p.n_blocks
        assert res.active.size == 0

    def test_ista_one_iteration_without_active_set(self):
        p = problem(2)
        lm = lambda_max(p, 0.5)
        res = fit_ista(p, Penalty(2 * lm, 0.5), SolverConfig(active_set=False))
        assert res.n_sweeps == 1 and not np.any(res.coef)

    def test_active_set_two_full_sweeps(self):
        p = problem(3)
        res = run_active_set("bcd", p, Penalty(2 * lambda_max(p, 0.5), 0.5))
        assert res.n_sweeps == 2 and res.converged


class TestClosedForms:
    @pytest.mark.parametrize("alg", ["ista", "fista", "bcgd", "bcd"])
    def test_single_linear_block_soft_threshold(self, alg):
        rng = np.random.default_rng(4)
        X = orthonormal_design(rng, 80, [1])
        y = 0.7 * X[:, 0] + rng.standard_normal(80)
        p = Problem(X, y, [1], fit_intercept=False)
        res = SOLVERS[alg](p, Penalty(0.3, 0.8), SolverConfig(tol=1e-12))
        expected = soft_threshold(X[:, 0] @ y / 80, 0.3 * 0.8)
        assert res.coef[0] == pytest.approx(expected, abs=1e-8)

    def test_bcd_one_block_one_sweep(self):
        rng = np.random.default_rng(5)
        X = orthonormal_design(rng, 60, [5])
        y = rng.standard_normal(60)
        p = Problem(X, y, [5], fit_intercept=False)
        res = fit_bcd(p, Penalty(0.2, 0.3), SolverConfig(max_sweeps=1, active_set=False))
        np.testing.assert_allclose(res.coef, prox_block(X.T @ y / 60, 0.06, 0.14), atol=1e-14)

    def test_bcd_least_squares_at_zero_lambda(self):
        rng = np.random.default_rng(6)
        widths = [3, 2, 4]
        X = orthonormal_design(rng, 50, widths)
        y = rng.standard_normal(50)
        p = Problem(X, y, widths)
        res = fit_bcd(p, Penalty(0.0, 0.5), SolverConfig(tol=1e-14))
        A = np.column_stack([np.ones(50), X])
        ls = np.linalg.lstsq(A, y, rcond=None)[0]
        assert np.linalg.norm(X @ res.coef + res.intercept - A @ ls) <= 1e-6

    def test_bcd_rejects_logistic(self):
        with pytest.raises(ValueError, match="bcd requires quadratic loss"):
            fit_bcd(problem(7, loss="logistic"), Penalty(0.1, 0.5))


class TestAgreement:
    @pytest.mark.parametrize("loss", ["quadratic", "logistic"])
    @pytest.mark.parametrize("seed", range(4))
    def test_cross_solver(self, loss, seed):
        p = problem(10 + seed, loss=loss)
        pen = Penalty(0.1 * lambda_max(p, 0.5), 0.5)
        objs = [fit(p, pen, SolverConfig(algorithm=a)).final_objective for a in solvers_for(loss)]
        assert max(objs) - min(objs) <= 1e-6 * abs(min(objs))

    def test_logistic_bcgd_vs_fista(self):
        p = problem(20, loss="logistic", N=200, widths=[5] * 10)
        pen = Penalty(0.05 * lambda_max(p, 0.6), 0.6)
        a = fit_bcgd(p, pen).final_objective
        b = fit_fista(p, pen).final_objective
        assert abs(a - b) <= 1e-6 * abs(b)

    @pytest.mark.parametrize("alg", ["ista", "fista", "bcgd", "bcd"])
    def test_active_set_equivalence(self, alg):
        p = problem(21)
        pen = Penalty(0.2 * lambda_max(p, 0.5), 0.5)
        with_as = fit(p, pen, SolverConfig(algorithm=alg, tol=1e-12))
        without = fit(p, pen, SolverConfig(algorithm=alg, tol=1e-12, active_set=False))
        assert abs(with_as.final_objective - without.final_objective) <= 1e-8
        np.testing.assert_array_equal(with_as.active, without.active)

    def test_late_entering_block(self):
        # block 2 is uncorrelated with y at zero but needed once block 0 is fitted
        rng = np.random.default_rng(22)
        N = 200
        X = orthonormal_design(rng, N, [2, 2, 2, 1])
        u = X[:, 6]
        X = np.asfortranarray(X[:, :6])
        X[:, 4] = 0.6 * X[:, 0] + 0.8 * u
        y = 3.0 * X[:, 0] - 5.0 * X[:, 4] + 0.05 * rng.standard_normal(N)
        p = Problem(X, y, [2, 2, 2])
        pen = Penalty(0.2 * lambda_max(p, 0.7), 0.7)
        direct = fit_bcgd(p, pen, SolverConfig(tol=1e-12, active_set=False))
        staged = run_active_set("bcgd", p, pen, SolverConfig(tol=1e-12))
        assert 2 in direct.active
        np.testing.assert_array_equal(staged.active, direct.active)
        assert abs(staged.final_objective - direct.final_objective) <= 1e-8


class TestFista:
    def test_fewer_sweeps_than_ista(self):
        rng = np.random.default_rng(30)
        wins = 0
        for _ in range(50):
            widths = rng.integers(2, 6, 10)
            X, y = random_problem_data(rng, 100, widths, "quadratic", orthonormal=False)
            X = X + 0.8 * rng.standard_normal((100, 1))
            p = Problem(X, y, widths)
            pen = Penalty(0.05 * lambda_max(p, 0.5), 0.5)
            cfg = dict(tol=1e-13, active_set=False)
            ista = fit_ista(p, pen, SolverConfig(**cfg))
            fista = fit_fista(p, pen, SolverConfig(**cfg))
            target = min(ista.final_objective, fista.final_objective) * (1 + 1e-6)
            wins += np.argmax(fista.objective <= target) < np.argmax(ista.objective <= target)
        assert wins >= 45

    def test_not_worse_on_equal_budget(self):
        for seed in range(5):
            p = problem(31 + seed, orthonormal=False)
            pen = Penalty(0.1 * lambda_max(p, 0.5), 0.5)
            cfg = SolverConfig(max_sweeps=50, active_set=False, tol=1e-15)
            assert fit_fista(p, pen, cfg).final_objective <= \
                fit_ista(p, pen, cfg).final_objective + 1e-8

    def test_warm_start_at_optimum(self):
        p = problem(32)
        pen = Penalty(0.1 * lambda_max(p, 0.5), 0.5)
        opt = fit_bcd(p, pen, SolverConfig(tol=1e-14))
        again = fit_fista(p, pen, warm_start=opt)
        assert np.max(np.abs(again.coef - opt.coef)) <= 1e-10


class TestBcgd:
    def test_safe_steps_never_backtrack(self):
        p = problem(40, loss="logistic", orthonormal=False)
        C = p.block_lipschitz_all
        cfg = SolverConfig(initial_steps=1.0 / C)
        res = fit_bcgd(p, Penalty(0.05 * lambda_max(p, 0.5), 0.5), cfg)
        assert res.n_backtracks == 0

    def test_large_steps_backtrack_to_floor(self):
        p = problem(41, orthonormal=False)
        res = fit_bcgd(p, Penalty(0.05 * lambda_max(p, 0.5), 0.5),
                       SolverConfig(step_scale=1e4))
        assert res.n_backtracks > 0
        assert np.all(res.steps >= 1.0 / p.block_lipschitz_all - 1e-15)


class TestInvariants:
    @pytest.mark.parametrize("loss", ["quadratic", "logistic"])
    def test_monotone_descent(self, loss):
        for seed in range(5):
            p = problem(50 + seed, loss=loss)
            pen = Penalty(0.05 * lambda_max(p, 0.3), 0.3)
            for alg in [a for a in solvers_for(loss) if a != "fista"]:
                trace = fit(p, pen, SolverConfig(algorithm=alg)).objective
                assert np.all(np.diff(trace) <= 1e-12), alg

    @pytest.mark.parametrize("loss", ["quadratic", "logistic"])
    def test_fixed_point_at_exit(self, loss):
        for seed in range(5):
            p = problem(60 + seed, loss=loss)
            pen = Penalty(0.1 * lambda_max(p, 0.5), 0.5)
            for alg in solvers_for(loss):
                cfg = SolverConfig(algorithm=alg)
                res = fit(p, pen, cfg)
                assert res.converged
                assert optimality_residual(p, res) <= 10 * cfg.tol, alg

    def test_budget_exhaustion_reported(self):
        p = problem(70, orthonormal=False)
        res = fit_ista(p, Penalty(0.01 * lambda_max(p, 0.5), 0.5),
                       SolverConfig(max_sweeps=3, active_set=False))
        assert not res.converged and res.n_sweeps == 3

    def test_status_matches_coefficients(self):
        p = problem(71)
        res = fit(p, Penalty(0.1 * lambda_max(p, 0.3), 0.3))
        for j, s in enumerate(res.status):
            block = res.coef[p.starts[j]:p.stops[j]]
            assert s == ("zero" if not np.any(block) else
                         "linear" if not np.any(block[1:]) else "nonlinear")

    def test_warm_start_dimension(self):
        p = problem(72)
        with pytest.raises(ValueError, match="wrong dimension"):
            fit(p, Penalty(0.1, 0.5), warm_start=np.zeros(p.n_coef + 1))

    def test_logistic_intercept_unpenalized(self):
        rng = np.random.default_rng(73)
        N = 400
        X = orthonormal_design(rng, N, [3, 3])
        y = np.where(rng.uniform(size=N) < 0.85, 1.0, -1.0)
        p = Problem(X, y, [3, 3], loss="logistic")
        res = fit_bcgd(p, Penalty(10.0, 0.5))
        assert not np.any(res.coef)
        assert res.intercept == pytest.approx(np.log(np.sum(y > 0) / np.sum(y < 0)), abs=1e-8)
