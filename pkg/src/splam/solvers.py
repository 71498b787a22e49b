"""Optimizers for the SPLAM objective: ISTA, FISTA, BCGD and BCD.

All four share a convergence rule (relative objective change over one sweep
below ``tol``) and an optional active-set strategy: one full sweep, iterate on
the nonzero blocks until converged, then a confirming full sweep; stop when
the confirming sweep leaves the active set unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import expit

from .objective import Penalty, feature_status
from .prox import _prox_block_inplace, _prox_blocks, prox_full

ALGORITHMS = ("ista", "fista", "bcgd", "bcd")
# Gram-form BCD is used while X^T X stays below this many entries
_GRAM_MAX_ENTRIES = 4000 ** 2


@dataclass
class SolverConfig:
    """Solver settings.

    ``step_scale`` sets the BCGD initial steps ``t_j = step_scale / C_j``
    unless ``initial_steps`` is given explicitly.
    """

    algorithm: str = "auto"
    tol: float = 1e-7
    max_sweeps: int = 10_000
    shrink: float = 0.5
    step_scale: float = 10.0
    initial_steps: np.ndarray | None = None
    active_set: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS + ("auto",):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")


@dataclass
class FitResult:
    coef: np.ndarray
    intercept: float
    objective: np.ndarray
    n_sweeps: int
    converged: bool
    status: list
    active: np.ndarray
    lam: float
    alpha: float
    algorithm: str
    n_backtracks: int = 0
    steps: np.ndarray | None = field(default=None, repr=False)

    @property
    def final_objective(self):
        return float(self.objective[-1])

    @property
    def support_size(self):
        return sum(s != "zero" for s in self.status)

    @property
    def n_linear(self):
        return self.status.count("linear")

    @property
    def n_nonlinear(self):
        return self.status.count("nonlinear")

    def predict(self, Q):
        """Linear predictor on an already-transformed design."""
        return np.asarray(Q) @ self.coef + self.intercept


class _State:
    def __init__(self, problem, warm_start):
        if warm_start is None:
            self.beta = np.zeros(problem.n_coef)
            self.b0 = problem.null_intercept()
        elif isinstance(warm_start, FitResult):
            self.beta = np.array(warm_start.coef, dtype=float)
            self.b0 = warm_start.intercept if problem.has_free_intercept else 0.0
        else:
            self.beta = np.array(warm_start, dtype=float).ravel()
            self.b0 = problem.null_intercept()
        if self.beta.shape != (problem.n_coef,):
            raise ValueError("warm start has the wrong dimension")
        self.steps = None
        self.n_backtracks = 0


def _close(old, new, tol):
    return abs(old - new) <= tol * max(abs(old), abs(new))


def _nonzero_blocks(beta, starts, stops):
    return np.array([j for j, (a, b) in enumerate(zip(starts, stops))
                     if b > a and np.any(beta[a:b])], dtype=np.int64)


@njit(cache=True)
def _penalty_nb(beta, starts, stops, lam1, lam2):
    total = 0.0
    for j in range(starts.shape[0]):
        a = starts[j]
        b = stops[j]
        if b == a:
            continue
        tail = 0.0
        for i in range(a + 1, b):
            tail += beta[i] * beta[i]
        total += lam1 * np.sqrt(beta[a] * beta[a] + tail) + lam2 * np.sqrt(tail)
    return total


def _stationarity(problem, pen, beta, b0, blocks):
    """``max |beta - prox(beta - grad / C)|`` over ``blocks`` (and the free intercept)."""
    C = problem.lipschitz
    if C == 0.0:
        return 0.0
    t = 1.0 / C
    grad, gb = problem.gradient(beta, b0)
    moved = beta.copy()
    _prox_blocks(beta - t * grad, problem.starts, problem.stops, blocks,
                 t * pen.lam1, t * pen.lam2, moved)
    res = float(np.max(np.abs(moved - beta), initial=0.0))
    if problem.has_free_intercept:
        res = max(res, abs(t * gb))
    return res


def _objective(problem, pen, beta, b0):
    return problem.loss(beta, b0) + _penalty_nb(beta, problem.starts, problem.stops,
                                                pen.lam1, pen.lam2)


# -- ISTA / FISTA ----------------------------------------------------------------

def _prox_grad_core(problem, pen, cfg, state, blocks, max_sweeps, f_prev, accelerate):
    C = problem.lipschitz
    if C == 0.0 or (blocks.size == 0 and not problem.has_free_intercept):
        return [], True
    t = 1.0 / C
    r1, r2 = t * pen.lam1, t * pen.lam2
    free_b0 = problem.has_free_intercept
    x, xb = state.beta, state.b0
    y, yb = x.copy(), xb
    tk = 1.0
    trace = []
    converged = False
    for _ in range(max_sweeps):
        grad, gb = problem.gradient(y, yb)
        x_new = x.copy()
        _prox_blocks(y - t * grad, problem.starts, problem.stops, blocks, r1, r2, x_new)
        xb_new = yb - t * gb if free_b0 else xb
        f = _objective(problem, pen, x_new, xb_new)
        restarted = False
        if accelerate:
            if f > f_prev:
                tk, y, yb = 1.0, x_new.copy(), xb_new
                restarted = True
            else:
                t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
                mom = (tk - 1.0) / t_next
                y = x_new + mom * (x_new - x)
                yb = xb_new + mom * (xb_new - xb)
                tk = t_next
        else:
            y, yb = x_new, xb_new
        x, xb = x_new, xb_new
        trace.append(f)
        done = _close(f_prev, f, cfg.tol) and not restarted
        f_prev = f
        if done:
            converged = True
            break
    state.beta, state.b0 = x, xb
    return trace, converged


# -- BCGD ------------------------------------------------------------------------

def _newton_intercept(problem, eta, b0):
    """One safeguarded Newton step on the unpenalized logistic intercept."""
    y = problem.y
    p = expit(-y * eta)
    g = -float(np.mean(y * p))
    h = float(np.mean(p * (1.0 - p)))
    if h <= 0.0 or g == 0.0:
        return b0, eta
    step = g / h
    base = problem.loss_at(eta)
    for _ in range(50):
        trial = eta - step
        if problem.loss_at(trial) <= base:
            return b0 - step, trial
        step *= 0.5
    return b0, eta


def _bcgd_core(problem, pen, cfg, state, blocks, max_sweeps, f_prev):
    N = problem.n_samples
    X = problem.X
    floors = np.zeros(problem.n_blocks)
    C = problem.block_lipschitz_all
    nz = C > 0
    floors[nz] = 1.0 / C[nz]
    if state.steps is None:
        if cfg.initial_steps is not None:
            state.steps = np.array(cfg.initial_steps, dtype=float)
        else:
            state.steps = cfg.step_scale * floors
    steps = state.steps
    beta, b0 = state.beta, state.b0
    eta = problem.eta(beta, b0)
    trace = []
    converged = False
    eps = np.finfo(float).eps
    out = np.empty(int(problem.widths.max(initial=0)))
    for _ in range(max_sweeps):
        if problem.has_free_intercept:
            b0, eta = _newton_intercept(problem, eta, b0)
        for j in blocks:
            a, b = problem.starts[j], problem.stops[j]
            if b == a:
                continue
            Xj = X[:, a:b]
            w = problem.weights_at(eta)
            base = problem.loss_at(eta)
            grad = -(Xj.T @ w) / N
            bj = beta[a:b]
            t = steps[j]
            z = out[:b - a]
            while True:
                _prox_block_inplace(bj - t * grad, t * pen.lam1, t * pen.lam2, z)
                d = z - bj
                if not np.any(d):
                    break
                eta_new = eta + Xj @ d
                bound = base + grad @ d + (d @ d) / (2.0 * t)
                ok = problem.loss_at(eta_new) <= bound + 4 * eps * abs(base)
                if not ok:
                    state.n_backtracks += 1
                if ok or t <= floors[j]:
                    beta[a:b] = z
                    eta = eta_new
                    break
                t = max(cfg.shrink * t, floors[j])
            steps[j] = t
        f = problem.loss_at(eta) + _penalty_nb(beta, problem.starts, problem.stops,
                                               pen.lam1, pen.lam2)
        trace.append(f)
        done = _close(f_prev, f, cfg.tol)
        f_prev = f
        if done:
            converged = True
            break
    state.beta, state.b0 = beta, b0
    return trace, converged


# -- BCD (quadratic loss, orthonormal blocks) -----------------------------------------

@njit(cache=True)
def _bcd_gram_sweep(G, grad, beta, starts, stops, blocks, r1, r2, g, z):
    """Exact block updates with ``grad = c - G beta`` maintained in place."""
    P = grad.shape[0]
    for jj in range(blocks.shape[0]):
        j = blocks[jj]
        a = starts[j]
        m = stops[j] - a
        if m == 0:
            continue
        for i in range(m):
            g[i] = beta[a + i] + grad[a + i]
        _prox_block_inplace(g[:m], r1, r2, z[:m])
        for i in range(m):
            d = z[i] - beta[a + i]
            if d != 0.0:
                beta[a + i] = z[i]
                row = G[a + i]
                for k in range(P):
                    grad[k] -= d * row[k]


@njit(cache=True)
def _bcd_resid_sweep(X, r, beta, starts, stops, blocks, r1, r2, g, z):
    """Exact block updates with the residual ``r = y - X beta`` maintained in place."""
    N = r.shape[0]
    for jj in range(blocks.shape[0]):
        j = blocks[jj]
        a = starts[j]
        m = stops[j] - a
        if m == 0:
            continue
        for i in range(m):
            s = 0.0
            for n in range(N):
                s += X[n, a + i] * r[n]
            g[i] = beta[a + i] + s / N
        _prox_block_inplace(g[:m], r1, r2, z[:m])
        for i in range(m):
            d = z[i] - beta[a + i]
            if d != 0.0:
                beta[a + i] = z[i]
                for n in range(N):
                    r[n] -= d * X[n, a + i]


def _check_orthonormal(problem, atol=1e-6):
    if getattr(problem, "_orthonormal", None) is None:
        ok = True
        for j in range(problem.n_blocks):
            Xj = problem.block(j)
            if Xj.shape[1] and not np.allclose(Xj.T @ Xj / problem.n_samples,
                                               np.eye(Xj.shape[1]), atol=atol):
                ok = False
                break
        problem._orthonormal = ok
    return problem._orthonormal


def _bcd_core(problem, pen, cfg, state, blocks, max_sweeps, f_prev):
    if problem.loss_kind != "quadratic":
        raise ValueError("bcd requires quadratic loss")
    if not _check_orthonormal(problem):
        raise ValueError("bcd requires blocks with (1/N) X_j^T X_j = I")
    beta = state.beta
    width = int(problem.widths.max(initial=0))
    g, z = np.empty(width), np.empty(width)
    starts, stops = problem.starts, problem.stops
    r1, r2 = pen.lam1, pen.lam2
    use_gram = problem.n_coef ** 2 <= _GRAM_MAX_ENTRIES
    if use_gram:
        G, c, yy = problem.gram
        grad = c - G @ beta
    else:
        resid = problem.y - problem.X @ beta
    trace = []
    converged = False
    for _ in range(max_sweeps):
        if use_gram:
            _bcd_gram_sweep(G, grad, beta, starts, stops, blocks, r1, r2, g, z)
            loss = 0.5 * yy - 0.5 * float(c @ beta) - 0.5 * float(beta @ grad)
        else:
            _bcd_resid_sweep(problem.X, resid, beta, starts, stops, blocks, r1, r2, g, z)
            loss = 0.5 * float(resid @ resid) / problem.n_samples
        f = loss + _penalty_nb(beta, starts, stops, r1, r2)
        trace.append(f)
        done = _close(f_prev, f, cfg.tol)
        f_prev = f
        if done:
            converged = True
            break
    state.beta = beta
    return trace, converged


# -- drivers ---------------------------------------------------------------------

def _core_for(algorithm):
    if algorithm == "ista":
        return lambda *a: _prox_grad_core(*a, accelerate=False)
    if algorithm == "fista":
        return lambda *a: _prox_grad_core(*a, accelerate=True)
    if algorithm == "bcgd":
        return _bcgd_core
    if algorithm == "bcd":
        return _bcd_core
    raise ValueError(f"unknown algorithm {algorithm!r}")


def resolve_algorithm(problem, algorithm="auto"):
    if algorithm != "auto":
        return algorithm
    if problem.loss_kind == "quadratic" and _check_orthonormal(problem):
        return "bcd"
    return "bcgd"


def _run(problem, pen, config, warm_start, algorithm, active_set):
    if not isinstance(pen, Penalty):
        pen = Penalty(*pen)
    config = config or SolverConfig()
    algorithm = resolve_algorithm(problem, algorithm)
    if algorithm == "bcd" and problem.loss_kind != "quadratic":
        raise ValueError("bcd requires quadratic loss")
    core = _core_for(algorithm)
    state = _State(problem, warm_start)
    all_blocks = np.arange(problem.n_blocks, dtype=np.int64)
    trace = [_objective(problem, pen, state.beta, state.b0)]
    budget = config.max_sweeps

    def call(blocks, sweeps):
        # objective-change convergence is only accepted once the iterate is
        # also a prox-gradient fixed point to within tol
        nonlocal budget
        while True:
            part, conv = core(problem, pen, config, state, blocks, sweeps, trace[-1])
            trace.extend(part)
            budget -= len(part)
            sweeps -= len(part)
            if not conv or sweeps <= 0:
                return conv
            limit = config.tol * max(1.0, float(np.max(np.abs(state.beta), initial=0.0)))
            if _stationarity(problem, pen, state.beta, state.b0, blocks) <= limit:
                return True

    if not active_set:
        converged = call(all_blocks, budget)
    else:
        converged = False
        call(all_blocks, 1)
        while budget > 0:
            active = _nonzero_blocks(state.beta, problem.starts, problem.stops)
            inner = True
            if active.size or problem.has_free_intercept:
                inner = call(active, budget)
            if budget <= 0:
                break
            call(all_blocks, 1)
            after = _nonzero_blocks(state.beta, problem.starts, problem.stops)
            if inner and np.array_equal(active, after):
                converged = True
                break

    beta = state.beta
    return FitResult(
        coef=beta,
        intercept=problem.model_intercept(beta, state.b0),
        objective=np.asarray(trace),
        n_sweeps=len(trace) - 1,
        converged=converged,
        status=feature_status(beta, problem.starts, problem.stops),
        active=_nonzero_blocks(beta, problem.starts, problem.stops),
        lam=pen.lam,
        alpha=pen.alpha,
        algorithm=algorithm,
        n_backtracks=state.n_backtracks,
        steps=state.steps,
    )


def fit_ista(problem, penalty, config=None, warm_start=None):
    """Proximal gradient descent with the fixed step ``1/C``."""
    config = config or SolverConfig()
    return _run(problem, penalty, config, warm_start, "ista", config.active_set)


def fit_fista(problem, penalty, config=None, warm_start=None):
    """Accelerated proximal gradient with function-value momentum restart."""
    config = config or SolverConfig()
    return _run(problem, penalty, config, warm_start, "fista", config.active_set)


def fit_bcgd(problem, penalty, config=None, warm_start=None):
    """Block coordinate proximal gradient with per-block backtracking steps."""
    config = config or SolverConfig()
    return _run(problem, penalty, config, warm_start, "bcgd", config.active_set)


def fit_bcd(problem, penalty, config=None, warm_start=None):
    """Exact block coordinate descent; quadratic loss and orthonormal blocks only."""
    config = config or SolverConfig()
    return _run(problem, penalty, config, warm_start, "bcd", config.active_set)


def run_active_set(algorithm, problem, penalty, config=None, warm_start=None):
    """Run ``algorithm`` under the active-set strategy regardless of ``config``."""
    return _run(problem, penalty, config, warm_start, algorithm, True)


def fit(problem, penalty, config=None, warm_start=None):
    """Solve with ``config.algorithm`` (``"auto"`` picks BCD when it applies)."""
    config = config or SolverConfig()
    return _run(problem, penalty, config, warm_start, config.algorithm, config.active_set)


def optimality_residual(problem, result):
    """``max |beta - prox(beta - t grad)|`` at ``t = 1/C`` (intercept included)."""
    C = problem.lipschitz
    if C == 0.0:
        return 0.0
    t = 1.0 / C
    b0 = result.intercept if problem.has_free_intercept else 0.0
    grad, gb = problem.gradient(result.coef, b0)
    moved = prox_full(result.coef - t * grad, problem.starts, problem.stops,
                      result.lam, result.alpha, step=t)
    res = float(np.max(np.abs(result.coef - moved), initial=0.0))
    if problem.has_free_intercept:
        res = max(res, abs(t * gb))
    return res
