"""Regularization paths over (lambda, alpha) and validation-based selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .objective import Penalty
from .prox import _prox_blocks
from .solvers import SolverConfig, fit

THEORY_ALPHA = (1.0 + np.sqrt(6.0)) / (1.0 + 2.0 * np.sqrt(6.0))
DEFAULT_ALPHAS = tuple(np.round(np.arange(1, 21) * 0.05, 2))
DEFAULT_N_LAMBDA = 100
DEFAULT_RATIO = 1e-3


def theory_lambda(sigma, n_features, n_samples):
    """Smallest lambda covered by the slow-rate bound: 2(1 + 2 sqrt 6) sigma sqrt(log p / N)."""
    return 2.0 * (1.0 + 2.0 * np.sqrt(6.0)) * sigma * np.sqrt(np.log(n_features) / n_samples)


def _null_gradient(problem):
    beta = np.zeros(problem.n_coef)
    grad, _ = problem.gradient(beta, problem.null_intercept())
    return grad


def lambda_init(problem, alpha):
    """``max_j ||grad_j L(0)|| / alpha``, above which zero is always optimal."""
    if alpha <= 0:
        raise ValueError("no finite lambda zeroes all blocks when alpha is 0")
    grad = _null_gradient(problem)
    norms = [np.linalg.norm(grad[a:b]) for a, b in zip(problem.starts, problem.stops)]
    return float(max(norms, default=0.0)) / alpha


def zero_is_fixed_point(problem, lam, alpha, grad=None):
    """True when one prox-gradient step from zero (step ``1/C``) stays at zero."""
    if grad is None:
        grad = _null_gradient(problem)
    C = problem.lipschitz
    t = 1.0 / C if C > 0 else 1.0
    out = np.empty_like(grad)
    blocks = np.arange(problem.n_blocks, dtype=np.int64)
    _prox_blocks(-t * grad, problem.starts, problem.stops, blocks,
                 t * lam * alpha, t * lam * (1.0 - alpha), out)
    return not np.any(out)


def lambda_max(problem, alpha, eps=None):
    """Bisection for the smallest lambda whose solution is identically zero.

    ``eps`` defaults to ``1e-4 * lambda_init``; the upper end of the final
    bracket is returned, so the zero solution is guaranteed at the result.
    """
    hi = lambda_init(problem, alpha)
    if eps is None:
        eps = 1e-4 * hi
    if eps <= 0:
        if hi == 0.0:
            return 0.0
        raise ValueError("eps must be positive")
    grad = _null_gradient(problem)
    lo = 0.0
    while hi - lo >= eps:
        mid = 0.5 * (hi + lo)
        if zero_is_fixed_point(problem, mid, alpha, grad):
            hi = mid
        else:
            lo = mid
    # a few ulps of slack: when a width-1 block attains the maximum the zero
    # test holds with equality at lambda_init, and other step sizes round differently
    return hi * (1.0 + 64 * np.finfo(float).eps)


def lambda_sequence(lam_max, n_lambda=DEFAULT_N_LAMBDA, ratio=DEFAULT_RATIO):
    if n_lambda < 2:
        raise ValueError("n_lambda must be at least 2")
    return lam_max * ratio ** (np.arange(n_lambda) / (n_lambda - 1))


@dataclass
class RegularizationPath:
    alpha: float
    lambdas: np.ndarray
    fits: list

    def __len__(self):
        return len(self.fits)


def fit_path(problem, alpha, n_lambda=DEFAULT_N_LAMBDA, ratio=DEFAULT_RATIO,
             config=None, warm_start=True):
    """Solutions on a log-spaced decreasing lambda grid starting at ``lambda_max``.

    Each fit is warm-started from the previous one unless ``warm_start`` is
    False.
    """
    config = config or SolverConfig()
    lambdas = lambda_sequence(lambda_max(problem, alpha), n_lambda, ratio)
    fits = []
    prev = None
    for lam in lambdas:
        res = fit(problem, Penalty(float(lam), float(alpha)), config,
                  warm_start=prev if warm_start else None)
        fits.append(res)
        prev = res
    return RegularizationPath(float(alpha), lambdas, fits)


@dataclass
class PathGrid:
    """Paths over an alpha grid plus validation scores.

    ``scores[a, l]`` belongs to ``paths[a].fits[l]``; ``selected`` is the
    ``(alpha_index, lambda_index)`` of the chosen model once scored.
    """

    alphas: np.ndarray
    paths: list
    loss: str = "quadratic"
    scores: np.ndarray | None = None
    selected: tuple | None = field(default=None)

    def fit_at(self, a, l):
        return self.paths[a].fits[l]

    @property
    def best(self):
        if self.selected is None:
            raise ValueError("grid has not been scored")
        return self.fit_at(*self.selected)

    def rows(self):
        """Tidy rows for CSV export."""
        for a, path in enumerate(self.paths):
            for l, res in enumerate(path.fits):
                yield {
                    "alpha": path.alpha,
                    "lambda": float(path.lambdas[l]),
                    "objective": res.final_objective,
                    "support": res.support_size,
                    "linear": res.n_linear,
                    "nonlinear": res.n_nonlinear,
                    "validation_score": (float(self.scores[a, l])
                                         if self.scores is not None else float("nan")),
                }


def fit_grid(problem, alphas=DEFAULT_ALPHAS, n_lambda=DEFAULT_N_LAMBDA,
             ratio=DEFAULT_RATIO, config=None):
    paths = [fit_path(problem, a, n_lambda, ratio, config) for a in alphas]
    return PathGrid(np.asarray(alphas, dtype=float), paths, loss=problem.loss_kind)


def rmse(predictions, truth):
    predictions = np.asarray(predictions, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if predictions.shape != truth.shape:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.mean((predictions - truth) ** 2)))


def misclass(predictions, labels):
    """Error rate of ``sign(predictions)`` (zero counts as +1) against +-1 labels."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    labels = np.asarray(labels, dtype=float).ravel()
    if predictions.shape != labels.shape:
        raise ValueError("length mismatch")
    return float(np.mean(np.where(predictions >= 0, 1.0, -1.0) != labels))


def score(loss, predictions, truth):
    return rmse(predictions, truth) if loss == "quadratic" else misclass(predictions, truth)


def score_grid(grid, Q_valid, y_valid):
    Q_valid = np.asarray(Q_valid, dtype=float)
    y_valid = np.asarray(y_valid, dtype=float).ravel()
    if y_valid.size == 0:
        raise ValueError("empty validation set")
    scores = np.empty((len(grid.paths), max(len(p) for p in grid.paths)))
    scores.fill(np.inf)
    for a, path in enumerate(grid.paths):
        coefs = np.column_stack([f.coef for f in path.fits])
        intercepts = np.array([f.intercept for f in path.fits])
        preds = Q_valid @ coefs + intercepts
        for l in range(len(path.fits)):
            scores[a, l] = score(grid.loss, preds[:, l], y_valid)
    grid.scores = scores
    return scores


def argmin_with_ties(scores, alphas, lambdas_by_alpha, rtol=1e-12):
    """Index of the minimum; ties go to the larger lambda, then the larger alpha."""
    best = np.min(scores)
    tied = np.argwhere(scores <= best + rtol * max(abs(best), 1e-300))
    return max(((int(a), int(l)) for a, l in tied),
               key=lambda al: (lambdas_by_alpha[al[0]][al[1]], alphas[al[0]]))


def select_model(grid, Q_valid, y_valid):
    """Score every fit on validation data and pick the best cell.

    Returns ``(lam, alpha, FitResult)``.
    """
    scores = score_grid(grid, Q_valid, y_valid)
    a, l = argmin_with_ties(scores, grid.alphas, [p.lambdas for p in grid.paths])
    grid.selected = (a, l)
    best = grid.fit_at(a, l)
    return float(grid.paths[a].lambdas[l]), float(grid.paths[a].alpha), best
