import numpy as np
import pytest

from oracles import central_gradient, extended_loss, power_iteration
from splam.objective import Penalty, Problem, feature_status, log1pexp, penalty
from splam.spline_basis import build_design


def make(rng, N=40, widths=(3, 2, 4), loss="quadratic", fit_intercept=True):
    X = rng.standard_normal((N, sum(widths)))
    if loss == "quadratic":
        y = rng.standard_normal(N) + 1.5
    else:
        y = np.where(rng.uniform(size=N) < 0.6, 1.0, -1.0)
    return Problem(X, y, widths, loss=loss, fit_intercept=fit_intercept)


class TestPenaltyParams:
    def test_split(self):
        pen = Penalty(2.0, 0.25)
        assert pen.lam1 == 0.5 and pen.lam2 == 1.5
        assert pen.lam1 + pen.lam2 == pen.lam

    @pytest.mark.parametrize("lam,alpha", [(-1.0, 0.5), (1.0, 1.5), (1.0, -0.1)])
    def test_invalid(self, lam, alpha):
        with pytest.raises(ValueError):
            Penalty(lam, alpha)


class TestLoss:
    def test_quadratic_at_zero(self):
        rng = np.random.default_rng(0)
        p = make(rng, fit_intercept=False)
        assert p.loss(np.zeros(p.n_coef)) == pytest.approx(0.5 * p.y @ p.y / p.n_samples)

    def test_logistic_at_zero(self):
        p = make(np.random.default_rng(1), loss="logistic", fit_intercept=False)
        assert p.loss(np.zeros(p.n_coef)) == pytest.approx(np.log(2.0), abs=1e-15)

    @pytest.mark.parametrize("kind", ["quadratic", "logistic"])
    def test_extended_precision(self, kind):
        rng = np.random.default_rng(2)
        p = make(rng, N=25, loss=kind, fit_intercept=False)
        beta = rng.standard_normal(p.n_coef)
        ref = extended_loss(p.X, p.y, beta, 0.0, kind)
        assert abs(p.loss(beta) - ref) <= 1e-12 * max(1.0, abs(ref))

    def test_logistic_extreme_margins(self):
        vals = log1pexp(np.array([-800.0, -40.0, 0.0, 40.0, 800.0]))
        assert np.all(np.isfinite(vals))
        assert vals[-1] == 800.0 and vals[2] == pytest.approx(np.log(2))
        assert vals[0] == 0.0

    def test_logistic_labels_validated(self):
        with pytest.raises(ValueError, match="-1 or \\+1"):
            Problem(np.ones((3, 1)), [0.0, 1.0, 1.0], [1], loss="logistic")

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            Problem(np.ones((3, 2)), np.ones(4), [2])
        with pytest.raises(ValueError, match="widths"):
            Problem(np.ones((3, 2)), np.ones(3), [3])

    def test_unknown_loss(self):
        with pytest.raises(ValueError, match="unknown loss"):
            Problem(np.ones((3, 1)), np.ones(3), [1], loss="hinge")


class TestGradient:
    def test_quadratic_at_zero(self):
        p = make(np.random.default_rng(3), fit_intercept=False)
        for j in range(p.n_blocks):
            np.testing.assert_allclose(p.block_gradient(np.zeros(p.n_coef), j),
                                       -p.block(j).T @ p.y / p.n_samples)

    @pytest.mark.parametrize("kind", ["quadratic", "logistic"])
    def test_finite_differences(self, kind):
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(100):
            p = make(rng, N=30, widths=(2, 3), loss=kind)
            beta = rng.standard_normal(p.n_coef)
            b0 = rng.standard_normal() if p.has_free_intercept else 0.0
            grad, gb = p.gradient(beta, b0)
            fd = central_gradient(lambda b: p.loss(b, b0), beta)
            worst = max(worst, np.linalg.norm(grad - fd) / np.linalg.norm(fd))
            if p.has_free_intercept:
                fd0 = central_gradient(lambda c: p.loss(beta, c[0]), np.array([b0]))[0]
                assert gb == pytest.approx(fd0, rel=1e-5, abs=1e-9)
        assert worst <= 1e-6

    def test_block_gradient_matches_full(self):
        rng = np.random.default_rng(5)
        p = make(rng, loss="logistic")
        beta = rng.standard_normal(p.n_coef)
        full, _ = p.gradient(beta, 0.3)
        for j in range(p.n_blocks):
            np.testing.assert_allclose(p.block_gradient(beta, j, 0.3),
                                       full[p.starts[j]:p.stops[j]], atol=1e-15)


class TestLipschitz:
    def test_orthonormal_design(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(-1, 1, (200, 3))
        d = build_design(X)
        q = Problem.from_design(d, rng.standard_normal(200))
        np.testing.assert_allclose(q.block_lipschitz_all, 1.0, atol=1e-10)
        lg = Problem.from_design(d, np.where(X[:, 0] > 0, 1.0, -1.0), loss="logistic")
        np.testing.assert_allclose(lg.block_lipschitz_all, 0.25, atol=1e-10)

    def test_power_iteration(self):
        rng = np.random.default_rng(7)
        p = make(rng, N=50, fit_intercept=False)
        for j in range(p.n_blocks):
            B = p.block(j)
            ref = power_iteration(B.T @ B / 50)
            assert p.block_lipschitz(j) == pytest.approx(ref, rel=1e-8)
        ref = power_iteration(p.X.T @ p.X / 50)
        assert p.lipschitz == pytest.approx(ref, rel=1e-8)

    def test_global_includes_intercept(self):
        p = make(np.random.default_rng(8), loss="logistic")
        Xa = np.hstack([p.X, np.ones((p.n_samples, 1))])
        ref = 0.25 * power_iteration(Xa.T @ Xa / p.n_samples)
        assert p.lipschitz == pytest.approx(ref, rel=1e-8)


class TestPenalty:
    def test_zero(self):
        assert penalty(np.zeros(6), [0, 3], [3, 6], 2.0, 0.3) == 0.0

    def test_group_only(self):
        assert penalty(np.array([3.0, 4.0, 0.0]), [0], [3], 1.0, 1.0) == pytest.approx(5.0)

    def test_mixed(self):
        assert penalty(np.array([3.0, 4.0, 0.0]), [0], [3], 2.0, 0.5) == pytest.approx(9.0)

    def test_extremes(self):
        rng = np.random.default_rng(9)
        beta = rng.standard_normal(7)
        starts, stops = [0, 3], [3, 7]
        group = sum(np.linalg.norm(beta[a:b]) for a, b in zip(starts, stops))
        tails = sum(np.linalg.norm(beta[a + 1:b]) for a, b in zip(starts, stops))
        assert penalty(beta, starts, stops, 1.3, 1.0) == pytest.approx(1.3 * group)
        assert penalty(beta, starts, stops, 1.3, 0.0) == pytest.approx(1.3 * tails)

    @pytest.mark.parametrize("kind", ["quadratic", "logistic"])
    def test_objective_convex(self, kind):
        rng = np.random.default_rng(10)
        p = make(rng, loss=kind)
        pen = Penalty(0.4, 0.6)
        for _ in range(200):
            b1, b2 = rng.standard_normal((2, p.n_coef))
            t = rng.uniform()
            mid = p.objective(t * b1 + (1 - t) * b2, pen)
            assert mid <= t * p.objective(b1, pen) + (1 - t) * p.objective(b2, pen) + 1e-10


class TestStatus:
    def test_labels(self):
        beta = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 2.0])
        assert feature_status(beta, [0, 2, 4], [2, 4, 7]) == ["zero", "linear", "nonlinear"]

    def test_nonlinear_without_linear(self):
        assert feature_status(np.array([0.0, 1.0]), [0], [2]) == ["nonlinear"]


class TestIntercept:
    def test_quadratic_profiled(self):
        rng = np.random.default_rng(11)
        p = make(rng)
        beta = rng.standard_normal(p.n_coef)
        b0 = p.model_intercept(beta)
        raw_X = p.X + p.x_mean
        raw_y = p.y + p.y_mean
        # centred loss equals the raw loss at the profiled intercept
        resid = raw_y - raw_X @ beta - b0
        assert p.loss(beta) == pytest.approx(0.5 * resid @ resid / p.n_samples)

    def test_logistic_null_intercept(self):
        y = np.array([1.0, 1.0, 1.0, -1.0])
        p = Problem(np.zeros((4, 1)) + np.arange(4)[:, None], y, [1], loss="logistic")
        assert p.null_intercept() == pytest.approx(np.log(3.0))
        _, gb = p.gradient(np.zeros(1), p.null_intercept())
        assert gb == pytest.approx(0.0, abs=1e-15)

    def test_single_class_rejected(self):
        p = Problem(np.ones((3, 1)), np.ones(3), [1], loss="logistic")
        with pytest.raises(ValueError, match="single class"):
            p.null_intercept()
