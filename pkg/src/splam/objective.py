"""Losses, gradients, Lipschitz constants and the SPLAM penalty."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

LOSSES = ("quadratic", "logistic")
# log(1 + exp(z)) is replaced by z past this point
_ASYMPTOTE = 30.0


@dataclass(frozen=True)
class Penalty:
    """Regularization pair ``(lam, alpha)``."""

    lam: float
    alpha: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def lam1(self):
        return self.lam * self.alpha

    @property
    def lam2(self):
        return self.lam * (1.0 - self.alpha)


def log1pexp(z):
    """Overflow-safe ``log(1 + exp(z))``."""
    z = np.asarray(z, dtype=float)
    return np.where(z > _ASYMPTOTE, z, np.log1p(np.exp(np.minimum(z, _ASYMPTOTE))))


def block_bounds(widths):
    widths = np.asarray(widths, dtype=np.int64)
    stops = np.cumsum(widths).astype(np.int64)
    return stops - widths, stops


def penalty(beta, starts, stops, lam, alpha):
    """``lam * sum_j [alpha ||beta_j|| + (1 - alpha) ||beta_{j,-1}||]``."""
    beta = np.asarray(beta, dtype=float)
    total = 0.0
    for a, b in zip(starts, stops):
        if b > a:
            block = beta[a:b]
            total += alpha * np.linalg.norm(block) + (1.0 - alpha) * np.linalg.norm(block[1:])
    return lam * total


def feature_status(beta, starts, stops):
    """Per-block label: ``"zero"``, ``"linear"`` or ``"nonlinear"``."""
    beta = np.asarray(beta, dtype=float)
    out = []
    for a, b in zip(starts, stops):
        block = beta[a:b]
        if not np.any(block):
            out.append("zero")
        elif not np.any(block[1:]):
            out.append("linear")
        else:
            out.append("nonlinear")
    return out


class Problem:
    """A SPLAM fitting problem: block design, response and loss.

    Parameters
    ----------
    X : array-like, shape (n_samples, n_coef)
        Design, typically ``BlockDesign.Q``.
    y : array-like, shape (n_samples,)
        Real response (quadratic) or labels in {-1, +1} (logistic).
    widths : sequence of int
        Block widths; must sum to ``n_coef``.
    loss : {"quadratic", "logistic"}
    fit_intercept : bool
        Quadratic loss profiles the intercept out by centering ``y`` (and
        ``X`` when its columns are not already centered). Logistic loss
        carries an explicit unpenalized intercept.
    """

    def __init__(self, X, y, widths, loss="quadratic", fit_intercept=True):
        if loss not in LOSSES:
            raise ValueError(f"unknown loss {loss!r}")
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("dimension mismatch between X and y")
        self.widths = np.asarray(widths, dtype=np.int64)
        if self.widths.sum() != X.shape[1]:
            raise ValueError("block widths do not match the number of columns")
        if loss == "logistic" and not np.all(np.abs(y) == 1.0):
            raise ValueError("logistic responses must be exactly -1 or +1")
        self.loss_kind = loss
        self.fit_intercept = fit_intercept
        self.starts, self.stops = block_bounds(self.widths)
        self.y_mean = 0.0
        self.x_mean = np.zeros(X.shape[1])
        if loss == "quadratic" and fit_intercept:
            self.y_mean = float(y.mean())
            y = y - self.y_mean
            col_mean = X.mean(axis=0)
            scale = max(1.0, float(np.abs(X).max(initial=0.0)))
            if np.abs(col_mean).max(initial=0.0) > 1e-12 * scale:
                self.x_mean = col_mean
                X = X - col_mean
        self.X = np.asfortranarray(X)
        self.y = y

    @classmethod
    def from_design(cls, design, y, loss="quadratic", fit_intercept=True):
        return cls(design.Q, y, design.widths, loss=loss, fit_intercept=fit_intercept)

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_coef(self):
        return self.X.shape[1]

    @property
    def n_blocks(self):
        return self.widths.shape[0]

    @property
    def has_free_intercept(self):
        """True when the intercept is an optimization variable (logistic)."""
        return self.loss_kind == "logistic" and self.fit_intercept

    def block(self, j):
        return self.X[:, self.starts[j]:self.stops[j]]

    # -- loss and gradient -------------------------------------------------

    def eta(self, beta, b0=0.0):
        return self.X @ beta + b0

    def loss_at(self, eta):
        if self.loss_kind == "quadratic":
            r = self.y - eta
            return 0.5 * float(r @ r) / self.n_samples
        return float(np.mean(log1pexp(-self.y * eta)))

    def loss(self, beta, b0=0.0):
        return self.loss_at(self.eta(beta, b0))

    def weights_at(self, eta):
        """``w`` with ``grad = -X^T w / N``."""
        if self.loss_kind == "quadratic":
            return self.y - eta
        return self.y * expit(-self.y * eta)

    def gradient(self, beta, b0=0.0):
        """Full gradient; returns ``(grad_beta, grad_intercept)``."""
        w = self.weights_at(self.eta(beta, b0))
        return -(self.X.T @ w) / self.n_samples, -float(w.mean())

    def block_gradient(self, beta, j, b0=0.0):
        w = self.weights_at(self.eta(beta, b0))
        return -(self.block(j).T @ w) / self.n_samples

    def curvature_scale(self):
        return 1.0 if self.loss_kind == "quadratic" else 0.25

    def block_lipschitz(self, j):
        """Largest eigenvalue of ``(1/N) X_j^T X_j``, times 1/4 for logistic."""
        Xj = self.block(j)
        if Xj.shape[1] == 0:
            return 0.0
        top = np.linalg.eigvalsh(Xj.T @ Xj / self.n_samples)[-1]
        return self.curvature_scale() * float(top)

    @cached_property
    def block_lipschitz_all(self):
        return np.array([self.block_lipschitz(j) for j in range(self.n_blocks)])

    @cached_property
    def lipschitz(self):
        """Global constant for the full gradient (intercept column included)."""
        X = self.X
        if self.has_free_intercept:
            X = np.hstack([X, np.ones((self.n_samples, 1))])
        if X.shape[1] == 0:
            return 0.0
        if X.shape[1] <= X.shape[0]:
            top = np.linalg.eigvalsh(X.T @ X)[-1]
        else:
            top = np.linalg.eigvalsh(X @ X.T)[-1]
        return self.curvature_scale() * float(top) / self.n_samples

    @cached_property
    def gram(self):
        """``(X^T X / N, X^T y / N, y^T y / N)`` for covariance-form updates."""
        N = self.n_samples
        return (np.ascontiguousarray(self.X.T @ self.X) / N,
                self.X.T @ self.y / N, float(self.y @ self.y) / N)

    # -- objective ---------------------------------------------------------

    def penalty(self, beta, pen):
        return penalty(beta, self.starts, self.stops, pen.lam, pen.alpha)

    def objective(self, beta, pen, b0=0.0):
        return self.loss(beta, b0) + self.penalty(beta, pen)

    def null_intercept(self):
        """Optimal intercept when every block is zero."""
        if not self.has_free_intercept:
            return 0.0
        pos = np.count_nonzero(self.y > 0)
        neg = self.y.size - pos
        if pos == 0 or neg == 0:
            raise ValueError("logistic response has a single class")
        return float(np.log(pos / neg))

    def model_intercept(self, beta, b0=0.0):
        """Intercept on the caller's scale (undoing any centering)."""
        if self.has_free_intercept:
            return float(b0)
        return self.y_mean - float(self.x_mean @ beta)
