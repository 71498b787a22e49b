"""Truncated-power cubic spline expansion with per-feature orthonormalization.

Each raw feature ``x_j`` is standardized, expanded into

    [x, x^2, x^3, (x - k_1)_+^3, ..., (x - k_m)_+^3]

with knots ``k`` at sample quantiles, centered, and then orthonormalized by
modified Gram-Schmidt so that the first column of every block stays the
(standardized) linear feature. Blocks are scaled so that ``(1/N) Q_j^T Q_j = I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

DEFAULT_KNOTS = 10
DROP_RTOL = 1e-10


def choose_knots(column, n_knots=DEFAULT_KNOTS):
    """Interior quantile knots of ``column`` at levels k/(m+1), k = 1..m.

    Exact duplicates are removed, so fewer than ``n_knots`` values may come
    back. A constant column yields no knots.
    """
    column = np.asarray(column, dtype=float).ravel()
    if column.size == 0:
        raise ValueError("empty feature")
    if n_knots < 0:
        raise ValueError("n_knots must be non-negative")
    if n_knots == 0 or np.ptp(column) == 0:
        return np.empty(0)
    levels = np.arange(1, n_knots + 1) / (n_knots + 1)
    return np.unique(np.quantile(column, levels))


def expand(x, knots):
    """Cubic truncated-power basis; returns shape ``x.shape + (3 + len(knots),)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input to spline expansion")
    knots = np.asarray(knots, dtype=float).ravel()
    out = np.empty(x.shape + (3 + knots.size,))
    out[..., 0] = x
    out[..., 1] = x * x
    out[..., 2] = x * x * x
    if knots.size:
        out[..., 3:] = np.maximum(x[..., None] - knots, 0.0) ** 3
    return out


def orthonormalize_block(block, rtol=DROP_RTOL):
    """Modified Gram-Schmidt QR of one block under the ``(1/N) Q^T Q = I`` scaling.

    Parameters
    ----------
    block : array-like, shape (n_samples, n_columns)
    rtol : float
        A column whose residual norm after projection falls below
        ``rtol * ||column||`` is treated as linearly dependent and dropped.

    Returns
    -------
    Q : ndarray, shape (n_samples, n_kept)
        Columns with squared norm ``n_samples``, mutually orthogonal.
    R : ndarray, shape (n_kept, n_kept)
        Upper triangular with positive diagonal, ``Q @ R == block[:, keep]``.
    keep : ndarray of bool, shape (n_columns,)

    Notes
    -----
    Every projection is applied twice (re-orthogonalization), which keeps
    ``(1/N) Q^T Q`` at machine precision for the mildly ill-conditioned
    spline blocks.
    """
    X = np.array(block, dtype=float, copy=True)
    if X.ndim != 2:
        raise ValueError("block must be two-dimensional")
    n, m = X.shape
    sqrt_n = np.sqrt(n)
    Q = np.empty((n, m))
    R = np.zeros((m, m))
    keep = np.zeros(m, dtype=bool)
    n_kept = 0
    for k in range(m):
        v = X[:, k].copy()
        norm0 = np.linalg.norm(v)
        coeffs = np.zeros(n_kept)
        for _ in range(2):
            for i in range(n_kept):
                r = Q[:, i] @ v / n
                v -= r * Q[:, i]
                coeffs[i] += r
        resid = np.linalg.norm(v)
        if norm0 == 0.0 or resid <= rtol * norm0:
            if k == 0:
                raise ValueError("linear column is rank deficient (constant feature)")
            continue
        R[:n_kept, k] = coeffs
        R[n_kept, k] = resid / sqrt_n
        Q[:, n_kept] = v / R[n_kept, k]
        keep[k] = True
        n_kept += 1
    R = R[:n_kept][:, keep]
    return Q[:, :n_kept], R, keep


@dataclass
class FeatureBasis:
    """Training-time transform of one raw feature into its orthonormal block."""

    mean: float
    scale: float
    knots: np.ndarray
    col_mean: np.ndarray
    keep: np.ndarray
    R: np.ndarray
    constant: bool = False
    linear_only: bool = False

    @property
    def width(self):
        return 0 if self.constant else int(self.R.shape[0])

    def centered_expansion(self, column):
        z = (np.asarray(column, dtype=float) - self.mean) / self.scale
        raw = z[:, None] if self.linear_only else expand(z, self.knots)
        return (raw - self.col_mean)[:, self.keep]

    def transform(self, column):
        if self.constant:
            return np.zeros((np.asarray(column).shape[0], 0))
        Xc = self.centered_expansion(column)
        return solve_triangular(self.R, Xc.T, trans="T", lower=False).T

    def raw_coef(self, coef):
        """Coefficients on the centered spline columns, ``R^{-1} coef``."""
        if self.constant:
            return np.zeros(0)
        return solve_triangular(self.R, np.asarray(coef, dtype=float), lower=False)

    def to_dict(self):
        return {
            "mean": float(self.mean),
            "scale": float(self.scale),
            "knots": self.knots.tolist(),
            "col_mean": self.col_mean.tolist(),
            "keep": self.keep.astype(int).tolist(),
            "R": self.R.tolist(),
            "constant": bool(self.constant),
            "linear_only": bool(self.linear_only),
        }

    @classmethod
    def from_dict(cls, d):
        R = np.asarray(d["R"], dtype=float)
        if R.size == 0:
            R = np.zeros((0, 0))
        return cls(
            mean=float(d["mean"]),
            scale=float(d["scale"]),
            knots=np.asarray(d["knots"], dtype=float),
            col_mean=np.asarray(d["col_mean"], dtype=float),
            keep=np.asarray(d["keep"], dtype=bool),
            R=R,
            constant=bool(d["constant"]),
            linear_only=bool(d.get("linear_only", False)),
        )


def fit_feature(column, n_knots=DEFAULT_KNOTS, linear_only=False):
    """Fit the transform of a single raw column; returns ``(FeatureBasis, Q_j)``."""
    column = np.asarray(column, dtype=float).ravel()
    if column.size == 0:
        raise ValueError("empty feature")
    mean = float(column.mean())
    std = float(column.std())
    if std == 0.0 or np.ptp(column) == 0:
        basis = FeatureBasis(mean, 1.0, np.empty(0), np.zeros(1), np.ones(1, dtype=bool),
                             np.zeros((0, 0)), constant=True)
        return basis, np.zeros((column.size, 0))
    z = (column - mean) / std
    if linear_only:
        knots = np.empty(0)
        raw = z[:, None]
    else:
        knots = choose_knots(z, n_knots)
        raw = expand(z, knots)
    col_mean = raw.mean(axis=0)
    col_mean[0] = 0.0
    Q, R, keep = orthonormalize_block(raw - col_mean)
    return FeatureBasis(mean, std, knots, col_mean, keep, R, linear_only=linear_only), Q


@dataclass
class BlockDesign:
    """Expanded, per-feature orthonormalized design matrix.

    ``Q`` is stored column-major so each block ``Q[:, start:stop]`` is contiguous.
    """

    Q: np.ndarray
    features: list = field(default_factory=list)

    @property
    def n_samples(self):
        return self.Q.shape[0]

    @property
    def n_features(self):
        return len(self.features)

    @property
    def widths(self):
        return np.array([f.width for f in self.features], dtype=np.int64)

    @property
    def starts(self):
        return np.concatenate([[0], np.cumsum(self.widths)[:-1]]).astype(np.int64)

    @property
    def stops(self):
        return np.cumsum(self.widths).astype(np.int64)

    def block(self, j):
        return self.Q[:, self.starts[j]:self.stops[j]]

    def transform(self, X):
        """Map raw rows through the stored training-time transform."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        blocks = [f.transform(X[:, j]) for j, f in enumerate(self.features)]
        return np.asfortranarray(np.hstack(blocks)) if blocks else np.zeros((X.shape[0], 0))

    def linear_predictor(self, X, coef, intercept=0.0):
        """``intercept + sum_j Xc_j R_j^{-1} coef_j`` computed row by row.

        Each row's value depends only on that row, so identical inputs give
        identical outputs whatever the batch.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        coef = np.asarray(coef, dtype=float)
        out = np.full(X.shape[0], float(intercept))
        for j, (f, a, b) in enumerate(zip(self.features, self.starts, self.stops)):
            if b == a or not np.any(coef[a:b]):
                continue
            theta = f.raw_coef(coef[a:b])
            cols = f.centered_expansion(X[:, j])
            # column-by-column so the summation order never depends on the batch
            for k in range(theta.size):
                out += cols[:, k] * theta[k]
        return out

    def to_dict(self):
        return {"features": [f.to_dict() for f in self.features]}

    @classmethod
    def from_dict(cls, d, n_samples=0):
        features = [FeatureBasis.from_dict(f) for f in d["features"]]
        width = sum(f.width for f in features)
        return cls(np.zeros((n_samples, width), order="F"), features)


def build_design(X, n_knots=DEFAULT_KNOTS, linear_only=False):
    """Standardize, expand and orthonormalize every column of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    if X.shape[0] == 0:
        raise ValueError("empty feature")
    features, blocks = [], []
    for j in range(X.shape[1]):
        basis, Q = fit_feature(X[:, j], n_knots=n_knots, linear_only=linear_only)
        features.append(basis)
        blocks.append(Q)
    Q = np.asfortranarray(np.hstack(blocks)) if blocks else np.zeros((X.shape[0], 0))
    return BlockDesign(Q, features)
