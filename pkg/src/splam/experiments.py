"""Synthetic data generators, method comparisons and theory checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .objective import Penalty, Problem
from .path import (
    DEFAULT_ALPHAS,
    DEFAULT_N_LAMBDA,
    DEFAULT_RATIO,
    THEORY_ALPHA,
    argmin_with_ties,
    fit_grid,
    misclass,
    rmse,
    score,
    score_grid,
    theory_lambda,
)
from .solvers import SolverConfig, fit
from .spline_basis import DEFAULT_KNOTS, build_design, orthonormalize_block

__all__ = [
    "GroundTruth", "Dataset", "gen_synth1", "gen_winnermap", "gen_appendixC",
    "rmse", "misclass", "evaluate_methods", "cross_validate", "run_synth1",
    "winner_map", "check_oracle_bound", "check_spam_lb", "fold_indices",
]

METHODS = ("lasso", "splam", "spam")
SYNTH1_LINEAR = {3: 1.0, 4: -3.0, 5: 2.5, 6: 10.0, 7: 2.0, 8: -7.0, 9: 5.0}
WINNER_SPLITS = ((200, 100, 100), (500, 100, 100), (1000, 200, 200))
TIE_TOL = 1e-6


@dataclass
class GroundTruth:
    """Zero-based support sets of a generating model."""

    support: frozenset
    nonlinear: frozenset
    sigma2: float
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.nonlinear <= self.support:
            raise ValueError("nonlinear set must be inside the support")

    @property
    def linear(self):
        return self.support - self.nonlinear

    def status(self, p):
        return ["nonlinear" if j in self.nonlinear else "linear" if j in self.support
                else "zero" for j in range(p)]


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    truth: GroundTruth
    mean: np.ndarray | None = None
    coef: np.ndarray | None = None

    def subset(self, idx):
        return Dataset(self.X[idx], self.y[idx], self.truth,
                       None if self.mean is None else self.mean[idx], self.coef)


# -- generators ------------------------------------------------------------------

def synth1_mean(X):
    """Noise-free response of the 10-term synthetic model (needs >= 10 columns)."""
    X = np.asarray(X, dtype=float)
    out = 2.0 * np.sin(2.0 * X[:, 0]) + X[:, 1] ** 2 + np.exp(-X[:, 2])
    for j, w in SYNTH1_LINEAR.items():
        out = out + w * X[:, j]
    return out


def gen_synth1(N, sigma2, seed, p=100):
    """Three nonlinear, seven linear and ``p - 10`` irrelevant features."""
    if N < 1:
        raise ValueError("N must be positive")
    if p < 10:
        raise ValueError("the model needs at least 10 features")
    rng = np.random.default_rng(seed)
    X = np.empty((N, p))
    X[:, :3] = rng.uniform(-2.5, 2.5, size=(N, 3))
    X[:, 3:] = rng.uniform(0.0, 1.0, size=(N, p - 3))
    mean = synth1_mean(X)
    y = mean + np.sqrt(sigma2) * rng.standard_normal(N)
    truth = GroundTruth(frozenset(range(10)), frozenset(range(3)), float(sigma2),
                        {"linear_weights": dict(SYNTH1_LINEAR)})
    return Dataset(X, y, truth, mean)


def gen_winnermap(p, gamma, delta, N, seed, low=-2.5, high=2.5):
    """``y = sum_L x_j + sum_N sin(x_j) + eps`` with ``|L| = round(gamma p)``, ``|N| = round(delta p)``."""
    n_lin, n_non = int(round(gamma * p)), int(round(delta * p))
    if gamma < 0 or delta < 0 or n_lin + n_non > p:
        raise ValueError("infeasible linear/nonlinear sizes")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(p)
    lin, non = perm[:n_lin], perm[n_lin:n_lin + n_non]
    X = rng.uniform(low, high, size=(N, p))
    mean = X[:, lin].sum(axis=1) + np.sin(X[:, non]).sum(axis=1)
    y = mean + rng.standard_normal(N)
    truth = GroundTruth(frozenset(int(j) for j in perm[:n_lin + n_non]),
                        frozenset(int(j) for j in non), 1.0)
    return Dataset(X, y, truth, mean)


def gen_appendixC(p, M, b, sigma, seed):
    """Exactly orthogonal ``N = pM`` design with every feature linear, ``beta_j = b e_1``."""
    N = p * M
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((N, N)))
    X = np.sqrt(N) * Q * np.sign(np.diag(R))
    coef = np.zeros(N)
    coef[::M] = b
    mean = X @ coef
    y = mean + sigma * rng.standard_normal(N)
    truth = GroundTruth(frozenset(range(p)), frozenset(), float(sigma) ** 2, {"b": b, "M": M})
    return Dataset(X, y, truth, mean, coef)


def fold_indices(n, folds, seed):
    """Deterministic assignment of ``range(n)`` to ``folds`` groups."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > n:
        raise ValueError("more folds than samples")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, folds)]


# -- method comparison ---------------------------------------------------------------

def _select_row(grid, a):
    s = grid.scores[a:a + 1]
    _, l = argmin_with_ties(s, grid.alphas[a:a + 1], [grid.paths[a].lambdas])
    return l


def evaluate_methods(train, valid, test, methods=METHODS, loss="quadratic",
                     alphas=DEFAULT_ALPHAS, n_lambda=DEFAULT_N_LAMBDA, ratio=DEFAULT_RATIO,
                     n_knots=DEFAULT_KNOTS, config=None):
    """Fit each method on ``train``, select on ``valid``, score on ``test``.

    ``train``/``valid``/``test`` are ``(X, y)`` pairs. The Lasso is SPLAM on
    linear-only blocks; SpAM is SPLAM at ``alpha = 1``. Returns
    ``{method: dict(score, lam, alpha, status, fit)}``.
    """
    config = config or SolverConfig()
    (Xtr, ytr), (Xva, yva), (Xte, yte) = train, valid, test
    out = {}
    if "splam" in methods or "spam" in methods:
        design = build_design(Xtr, n_knots=n_knots)
        problem = Problem.from_design(design, ytr, loss=loss)
        grid_alphas = tuple(alphas) if "splam" in methods else ()
        if "spam" in methods and 1.0 not in grid_alphas:
            grid_alphas = grid_alphas + (1.0,)
        grid = fit_grid(problem, grid_alphas, n_lambda, ratio, config)
        score_grid(grid, design.transform(Xva), yva)
        Qte = design.transform(Xte)
        rise = max_rise(f for path in grid.paths for f in path.fits)
        if "splam" in methods:
            rows = [i for i, a in enumerate(grid.alphas) if a in tuple(alphas)]
            sub = grid.scores[rows]
            a, l = argmin_with_ties(sub, grid.alphas[rows], [grid.paths[i].lambdas for i in rows])
            out["splam"] = _summary(grid.fit_at(rows[a], l), Qte, yte, loss, rise)
        if "spam" in methods:
            a = int(np.flatnonzero(grid.alphas == 1.0)[0])
            out["spam"] = _summary(grid.fit_at(a, _select_row(grid, a)), Qte, yte, loss, rise)
    if "lasso" in methods:
        design = build_design(Xtr, linear_only=True)
        problem = Problem.from_design(design, ytr, loss=loss)
        grid = fit_grid(problem, (1.0,), n_lambda, ratio, config)
        score_grid(grid, design.transform(Xva), yva)
        out["lasso"] = _summary(grid.fit_at(0, _select_row(grid, 0)),
                                design.transform(Xte), yte, loss,
                                max_rise(grid.paths[0].fits))
    return out


def max_rise(fits):
    """Largest single-step increase over the objective traces of ``fits``."""
    rise = -np.inf
    for f in fits:
        if f.objective.size > 1:
            rise = max(rise, float(np.max(np.diff(f.objective))))
    return rise


def _summary(res, Qte, yte, loss, rise):
    return {"score": score(loss, res.predict(Qte), yte), "lam": res.lam, "alpha": res.alpha,
            "status": list(res.status), "max_rise": rise, "fit": res}


def _cv_fold(X, y, folds, k, kwargs):
    K = len(folds)
    test, valid = folds[k], folds[(k + 1) % K]
    train = np.sort(np.concatenate([folds[i] for i in range(K) if i not in (k, (k + 1) % K)]))
    res = evaluate_methods((X[train], y[train]), (X[valid], y[valid]), (X[test], y[test]),
                           **kwargs)
    for r in res.values():
        r.pop("fit")
    return res


def cross_validate(X, y, folds=5, seed=0, n_jobs=1, **kwargs):
    """K-fold comparison: fold k is the test set, fold k+1 the validation set.

    Returns one ``evaluate_methods`` dict per fold (fits dropped).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    idx = fold_indices(len(y), folds, seed)
    return Parallel(n_jobs=n_jobs)(
        delayed(_cv_fold)(X, y, idx, k, kwargs) for k in range(folds))


def run_synth1(N=10_000, sigma2_list=(1.0, 2.0, 4.0, 8.0), folds=5, seed=0, n_jobs=1, p=100,
                **kwargs):
    """Mean and standard deviation of test RMSE per method and noise level.

    Returns ``(rows, details)``: one row per noise level, and the raw fold
    results keyed by noise level.
    """
    rows, details = [], {}
    for i, s2 in enumerate(sigma2_list):
        data = gen_synth1(N, s2, seed=[seed, i], p=p)
        res = cross_validate(data.X, data.y, folds, seed=[seed, i, 1], n_jobs=n_jobs, **kwargs)
        details[s2] = res
        row = {"sigma2": s2}
        for m in res[0]:
            vals = np.array([r[m]["score"] for r in res])
            row[f"{m}_mean"] = float(vals.mean())
            row[f"{m}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows, details


# -- winner map --------------------------------------------------------------------

@dataclass
class WinnerCell:
    gamma: float
    delta: float
    mean_rmse: dict
    winners: tuple

    @property
    def label(self):
        return self.winners[0] if len(self.winners) == 1 else "tie"


def winner_cells(step=0.1):
    n = int(round(1.0 / step))
    return [(g / n, d / n) for g in range(n + 1) for d in range(n + 1 - g)]


def _winner_rep(p, gamma, delta, split, seed, kwargs):
    n_tr, n_va, n_te = split
    data = gen_winnermap(p, gamma, delta, n_tr + n_va + n_te, seed)
    tr, va, te = np.split(np.arange(n_tr + n_va + n_te), [n_tr, n_tr + n_va])
    res = evaluate_methods((data.X[tr], data.y[tr]), (data.X[va], data.y[va]),
                           (data.X[te], data.y[te]), **kwargs)
    return {m: r["score"] for m, r in res.items()}


def winner_map(p=100, split=(1000, 200, 200), reps=10, seed=0, step=0.1, n_jobs=1,
               cells=None, **kwargs):
    """Mean test RMSE per method over ``reps`` model draws on each (gamma, delta) cell."""
    cells = winner_cells(step) if cells is None else cells
    jobs = [(c, r) for c in range(len(cells)) for r in range(reps)]
    scores = Parallel(n_jobs=n_jobs)(
        delayed(_winner_rep)(p, *cells[c], split,
                             [seed, int(round(cells[c][0] * 100)), int(round(cells[c][1] * 100)), r],
                             kwargs)
        for c, r in jobs)
    out = []
    for c, (g, d) in enumerate(cells):
        reps_c = [s for (cc, _), s in zip(jobs, scores) if cc == c]
        means = {m: float(np.mean([s[m] for s in reps_c])) for m in reps_c[0]}
        best = min(means.values())
        winners = tuple(m for m in means if means[m] <= best + TIE_TOL)
        out.append(WinnerCell(g, d, means, winners))
    return out


# -- theory checks -----------------------------------------------------------------

@dataclass
class OracleBoundResult:
    coverage: float
    lhs: np.ndarray
    rhs: np.ndarray
    lam: float
    alpha: float
    max_rise: float


def _orthonormal_blocks(N, p, M, rng):
    X = np.empty((N, p * M))
    for j in range(p):
        Q, _, keep = orthonormalize_block(rng.standard_normal((N, M)))
        if not keep.all():
            raise RuntimeError("random block lost rank")
        X[:, j * M:(j + 1) * M] = Q
    return X


def check_oracle_bound(p=64, M=4, N=512, reps=200, seed=0, sigma=1.0, n_linear=4,
                       n_nonlinear=2, lam_scale=1.0, config=None):
    """Monte-Carlo coverage of the slow-rate prediction bound.

    Each replicate draws a design with ``(1/N) X_j^T X_j = I``, a sparse truth
    with ``n_linear`` linear and ``n_nonlinear`` nonlinear blocks, solves at
    ``lam = lam_scale * 2(1 + 2 sqrt 6) sigma sqrt(log p / N)`` and
    ``alpha = (1 + sqrt 6)/(1 + 2 sqrt 6)``, and checks
    ``(1/N)||X(b - b0)||^2 <= 3 lam [alpha sum_L |b0_j1| + sum_N ||b0_j||]``.
    """
    if np.log(p) < M / 8.0:
        raise ValueError("requires log p >= M / 8")
    config = config or SolverConfig(tol=1e-10)
    lam = lam_scale * theory_lambda(sigma, p, N)
    alpha = THEORY_ALPHA
    rng = np.random.default_rng(seed)
    lhs, rhs = np.empty(reps), np.empty(reps)
    fits = []
    for r in range(reps):
        X = _orthonormal_blocks(N, p, M, rng)
        chosen = rng.permutation(p)[:n_linear + n_nonlinear]
        coef = np.zeros(p * M)
        bound = 0.0
        for j in chosen[:n_linear]:
            w = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
            coef[j * M] = w
            bound += alpha * abs(w)
        for j in chosen[n_linear:]:
            blk = rng.standard_normal(M)
            coef[j * M:(j + 1) * M] = blk
            bound += np.linalg.norm(blk)
        y = X @ coef + sigma * rng.standard_normal(N)
        problem = Problem(X, y, np.full(p, M), fit_intercept=False)
        res = fit(problem, Penalty(lam, alpha), config)
        fits.append(res)
        diff = X @ (res.coef - coef)
        lhs[r] = diff @ diff / N
        rhs[r] = 3.0 * lam * bound
    return OracleBoundResult(float(np.mean(lhs <= rhs)), lhs, rhs, lam, alpha, max_rise(fits))


def spam_best_error(u, truth):
    """Smallest ``sum_j ||(1 - lam/||u_j||)_+ u_j - truth_j||^2`` over ``lam >= 0``.

    ``u`` and ``truth`` are ``(p, M)``; the error is piecewise quadratic in
    lambda between the sorted block norms, so each piece is minimized exactly.
    """
    u = np.asarray(u, dtype=float)
    truth = np.asarray(truth, dtype=float)
    norms = np.linalg.norm(u, axis=1)
    order = np.argsort(-norms)
    cut = np.concatenate([norms[order], [0.0]])
    safe = np.where(norms > 0, norms, 1.0)

    def err(lam):
        shrink = np.clip(1.0 - lam / safe, 0.0, None)[:, None]
        return float(np.sum((shrink * u - truth) ** 2))

    best = err(0.0)
    for k in range(len(order)):
        hi, lo = cut[k], cut[k + 1]
        act = order[:k + 1]
        lam = np.sum(np.sum((u[act] - truth[act]) * u[act], axis=1) / safe[act]) / len(act)
        for cand in (np.clip(lam, lo, hi), lo, hi):
            best = min(best, err(cand))
    return best


def check_spam_lb(p=4, b=1.0, sigma=1.0, M_list=(8, 32, 128), seed=0, reps=20):
    """SpAM best-lambda error and the linear-only SPLAM limit on the orthogonal design.

    Returns one row per ``M`` with replicate means and the reference values
    ``sigma^2 p / N`` (expected limit error) and ``b^2 / (1/b^2 + p/sigma^2)``.
    """
    rows = []
    for i, M in enumerate(M_list):
        spam, lin = [], []
        for r in range(reps):
            data = gen_appendixC(p, M, b, sigma, seed=[seed, i, r])
            N = p * M
            u = (data.X.T @ data.y / N).reshape(p, M)
            truth = data.coef.reshape(p, M)
            spam.append(spam_best_error(u, truth))
            lin.append(float(np.sum((u[:, 0] - truth[:, 0]) ** 2)))
        N = p * M
        rows.append({
            "M": M, "N": N,
            "spam_best_error": float(np.mean(spam)),
            "splam_limit_error": float(np.mean(lin)),
            "chi2_expectation": sigma ** 2 * p / N,
            "spam_lower_bound": (b ** 2 / (1.0 / b ** 2 + p / sigma ** 2)
                                 if sigma > 0 else 0.0),
        })
    return rows
