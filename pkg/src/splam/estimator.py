"""scikit-learn style estimators wrapping the basis, solvers and path selection."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .experiments import fold_indices
from .io import ModelBundle
from .objective import Penalty, Problem
from .path import (
    DEFAULT_ALPHAS,
    DEFAULT_N_LAMBDA,
    DEFAULT_RATIO,
    THEORY_ALPHA,
    fit_grid,
    lambda_max,
    select_model,
)
from .solvers import SolverConfig, fit
from .spline_basis import DEFAULT_KNOTS, build_design

DEFAULT_LAMBDA_FRACTION = 0.1


class SplineBasis(TransformerMixin, BaseEstimator):
    """Per-feature cubic spline expansion with orthonormalized blocks.

    Parameters
    ----------
    n_knots : int, default=10
        Interior quantile knots per feature.
    linear_only : bool, default=False
        Keep only the standardized linear column of each feature.

    Attributes
    ----------
    design_ : BlockDesign
        Training-time transform; ``design_.Q`` is the transformed training data.
    """

    def __init__(self, n_knots=DEFAULT_KNOTS, linear_only=False):
        self.n_knots = n_knots
        self.linear_only = linear_only

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.design_ = build_design(X, n_knots=self.n_knots, linear_only=self.linear_only)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "design_")
        return self.design_.transform(check_array(X, dtype=float))

    def fit_transform(self, X, y=None):
        return np.asarray(self.fit(X).design_.Q)


class _SPLAMBase(BaseEstimator):
    _loss = "quadratic"

    def __init__(self, lam=None, alpha=THEORY_ALPHA, n_knots=DEFAULT_KNOTS, solver="auto",
                 tol=1e-7, max_sweeps=10_000, active_set=True, fit_intercept=True):
        self.lam = lam
        self.alpha = alpha
        self.n_knots = n_knots
        self.solver = solver
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.active_set = active_set
        self.fit_intercept = fit_intercept

    def _config(self):
        return SolverConfig(algorithm=self.solver, tol=self.tol, max_sweeps=self.max_sweeps,
                            active_set=self.active_set)

    def _resolve_lambda(self, problem):
        lam = self.lam
        if lam is None:
            return DEFAULT_LAMBDA_FRACTION * lambda_max(problem, self.alpha)
        if isinstance(lam, str):
            if lam != "max":
                raise ValueError(f"lam must be a number or 'max', got {lam!r}")
            return lambda_max(problem, self.alpha)
        return float(lam)

    def _fit_signed(self, X, y):
        self.design_ = build_design(X, n_knots=self.n_knots)
        problem = Problem.from_design(self.design_, y, loss=self._loss,
                                      fit_intercept=self.fit_intercept)
        self.lam_ = self._resolve_lambda(problem)
        self.result_ = fit(problem, Penalty(self.lam_, float(self.alpha)), self._config())
        self.coef_ = self.result_.coef
        self.intercept_ = self.result_.intercept
        self.status_ = list(self.result_.status)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return self.design_.linear_predictor(X, self.coef_, self.intercept_)

    def to_bundle(self, feature_names=None):
        check_is_fitted(self, "coef_")
        names = feature_names or [f"x{j + 1}" for j in range(self.n_features_in_)]
        labels = getattr(self, "classes_", None)
        return ModelBundle(self.design_, self.coef_, self.intercept_, self._loss,
                           self.lam_, float(self.alpha), self.status_, list(names),
                           None if labels is None else [_plain(c) for c in labels])


def _plain(v):
    return v.item() if hasattr(v, "item") else v


class SPLAMRegressor(RegressorMixin, _SPLAMBase):
    """Sparse partially linear additive regression (quadratic loss).

    Parameters
    ----------
    lam : float, "max" or None, default=None
        Overall penalty level. ``None`` uses ``0.1 * lambda_max``.
    alpha : float, default=(1 + sqrt 6)/(1 + 2 sqrt 6)
        Mix between the whole-block and the nonlinear-part group penalties.
    n_knots : int, default=10
    solver : {"auto", "ista", "fista", "bcgd", "bcd"}, default="auto"
    tol : float, default=1e-7
        Relative objective change per sweep at which iteration stops.
    max_sweeps : int, default=10000
    active_set : bool, default=True
    fit_intercept : bool, default=True

    Attributes
    ----------
    coef_ : ndarray
        Coefficients on the orthonormal blocks of ``design_``.
    intercept_ : float
    status_ : list of {"zero", "linear", "nonlinear"}
    lam_ : float
        The penalty level actually used.
    result_ : FitResult
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        return self._fit_signed(X, y)

    def predict(self, X):
        return self.decision_function(X)


class SPLAMClassifier(ClassifierMixin, _SPLAMBase):
    """Binary SPLAM classifier (logistic loss).

    Same parameters as :class:`SPLAMRegressor`. ``classes_[1]`` is coded +1.
    """

    _loss = "logistic"

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"need exactly two classes, got {self.classes_.size}")
        return self._fit_signed(X, np.where(y == self.classes_[1], 1.0, -1.0))

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) >= 0).astype(int)]


class SPLAMPath(BaseEstimator):
    """Warm-started (lambda, alpha) grid with validation-set selection.

    Parameters
    ----------
    loss : {"quadratic", "logistic"}, default="quadratic"
    alphas : sequence of float, default=0.05, 0.10, ..., 1.0
    n_lambda : int, default=100
    ratio : float, default=1e-3
        Smallest lambda as a fraction of ``lambda_max``.
    validation_fraction : float, default=0.2
        Share of the rows held out for selection when ``fit`` gets no
        explicit validation data.
    random_state : int, default=0
    n_knots, solver, tol, max_sweeps, active_set
        As in :class:`SPLAMRegressor`.

    Attributes
    ----------
    grid_ : PathGrid
    lam_, alpha_ : float
        Selected penalty.
    best_ : FitResult
    """

    def __init__(self, loss="quadratic", alphas=DEFAULT_ALPHAS, n_lambda=DEFAULT_N_LAMBDA,
                 ratio=DEFAULT_RATIO, validation_fraction=0.2, random_state=0,
                 n_knots=DEFAULT_KNOTS, solver="auto", tol=1e-7, max_sweeps=10_000,
                 active_set=True):
        self.loss = loss
        self.alphas = alphas
        self.n_lambda = n_lambda
        self.ratio = ratio
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.n_knots = n_knots
        self.solver = solver
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.active_set = active_set

    def _signed(self, y):
        if self.loss == "quadratic":
            return np.asarray(y, dtype=float)
        return np.where(y == self.classes_[1], 1.0, -1.0)

    def fit(self, X, y, X_valid=None, y_valid=None):
        X, y = check_X_y(X, y, dtype=float, y_numeric=self.loss == "quadratic")
        if self.loss == "logistic":
            self.classes_ = np.unique(y)
            if self.classes_.size != 2:
                raise ValueError(f"need exactly two classes, got {self.classes_.size}")
        if X_valid is None:
            if not 0.0 < self.validation_fraction < 1.0:
                raise ValueError("validation_fraction must lie in (0, 1)")
            folds = max(2, int(round(1.0 / self.validation_fraction)))
            valid = fold_indices(len(y), folds, self.random_state)[0]
            train = np.setdiff1d(np.arange(len(y)), valid)
            X, X_valid, y, y_valid = X[train], X[valid], y[train], y[valid]
        else:
            X_valid = check_array(X_valid, dtype=float)
            y_valid = np.asarray(y_valid)
        self.design_ = build_design(X, n_knots=self.n_knots)
        problem = Problem.from_design(self.design_, self._signed(y), loss=self.loss)
        config = SolverConfig(algorithm=self.solver, tol=self.tol,
                              max_sweeps=self.max_sweeps, active_set=self.active_set)
        self.grid_ = fit_grid(problem, tuple(self.alphas), self.n_lambda, self.ratio, config)
        self.lam_, self.alpha_, self.best_ = select_model(
            self.grid_, self.design_.transform(X_valid), self._signed(y_valid))
        self.coef_ = self.best_.coef
        self.intercept_ = self.best_.intercept
        self.status_ = list(self.best_.status)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return self.design_.linear_predictor(check_array(X, dtype=float), self.coef_,
                                             self.intercept_)

    def predict(self, X):
        eta = self.decision_function(X)
        if self.loss == "quadratic":
            return eta
        return self.classes_[(eta >= 0).astype(int)]

    def to_bundle(self, feature_names=None):
        check_is_fitted(self, "coef_")
        names = feature_names or [f"x{j + 1}" for j in range(self.n_features_in_)]
        labels = getattr(self, "classes_", None)
        return ModelBundle(self.design_, self.coef_, self.intercept_, self.loss, self.lam_,
                           self.alpha_, self.status_, list(names),
                           None if labels is None else [_plain(c) for c in labels])
