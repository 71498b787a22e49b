"""CSV / svmlight readers and versioned JSON model bundles."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .spline_basis import BlockDesign

SCHEMA_VERSION = 1


class DataError(ValueError):
    """Malformed input data."""


def read_csv(path):
    """Header row required; the last column is the response.

    Returns ``(X, y, names)`` where ``names`` are the feature column names.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataError(f"{path}: line 1: need at least one feature and a response")
        rows = []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, "
                                f"got {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise DataError(f"{path}: line {lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(rows)
    return data[:, :-1], data[:, -1], header[:-1]


def read_csv_features(path, n_features):
    """Read a CSV for prediction; a trailing response column is dropped if present."""
    X, y, names = read_csv(path)
    if X.shape[1] == n_features:
        return X
    full = np.column_stack([X, y])
    if full.shape[1] == n_features:
        return full
    raise DataError(f"{path}: expected {n_features} features, got {X.shape[1]}")


def parse_svmlight_lines(lines, n_features=None, source="<input>"):
    labels, entries = [], []
    max_index = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise DataError(f"{source}: line {lineno}: bad label {tokens[0]!r}") from None
        row = {}
        for tok in tokens[1:]:
            if tok.startswith("qid:"):
                continue
            idx, sep, val = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                k, v = int(idx), float(val)
            except ValueError:
                raise DataError(f"{source}: line {lineno}: bad pair {tok!r}") from None
            if k < 1:
                raise DataError(f"{source}: line {lineno}: indices are 1-based, got {k}")
            if k in row:
                raise DataError(f"{source}: line {lineno}: duplicate index {k}")
            if not np.isfinite(v):
                raise DataError(f"{source}: line {lineno}: non-finite value")
            row[k] = v
            max_index = max(max_index, k)
        labels.append(label)
        entries.append(row)
    if not labels:
        raise DataError(f"{source}: no data rows")
    p = max_index if n_features is None else n_features
    if max_index > p:
        raise DataError(f"{source}: feature index {max_index} exceeds {p} features")
    X = np.zeros((len(labels), p))
    for i, row in enumerate(entries):
        for k, v in row.items():
            X[i, k - 1] = v
    return X, np.asarray(labels)


def read_svmlight(path, n_features=None):
    """``label idx:val ...`` rows with 1-based, possibly unsorted indices."""
    with open(path) as fh:
        return parse_svmlight_lines(fh, n_features, source=str(path))


def read_data(path, fmt="csv", n_features=None):
    """Returns ``(X, y, names)``."""
    if fmt == "csv":
        return read_csv(path)
    if fmt == "svmlight":
        X, y = read_svmlight(path, n_features)
        return X, y, [f"x{j + 1}" for j in range(X.shape[1])]
    raise DataError(f"unknown format {fmt!r}")


def write_csv(path_or_fh, rows, fields=None):
    rows = list(rows)
    fields = fields or (list(rows[0]) if rows else [])
    own = isinstance(path_or_fh, str)
    fh = open(path_or_fh, "w", newline="") if own else path_or_fh
    try:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in fields})
    finally:
        if own:
            fh.close()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


@dataclass
class ModelBundle:
    """Everything needed to reproduce predictions of a fitted model."""

    design: BlockDesign
    coef: np.ndarray
    intercept: float
    loss: str
    lam: float
    alpha: float
    status: list
    feature_names: list
    labels: list | None = None

    def decision_function(self, X):
        return self.design.linear_predictor(X, self.coef, self.intercept)

    def predict(self, X):
        """Quadratic: fitted values. Logistic: ``(probability, label)`` of the +1 class."""
        eta = self.decision_function(X)
        if self.loss == "quadratic":
            return eta
        prob = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        return prob, np.where(eta >= 0, 1.0, -1.0)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "loss": self.loss,
            "lambda": float(self.lam),
            "alpha": float(self.alpha),
            "intercept": float(self.intercept),
            "feature_names": list(self.feature_names),
            "status": list(self.status),
            "labels": self.labels,
            "coef": np.asarray(self.coef, dtype=float).tolist(),
            "design": self.design.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported bundle schema version {version!r}")
        design = BlockDesign.from_dict(d["design"])
        coef = np.asarray(d["coef"], dtype=float)
        if coef.size != int(design.widths.sum()):
            raise DataError("bundle coefficients do not match its design")
        return cls(design, coef, float(d["intercept"]), d["loss"], float(d["lambda"]),
                   float(d["alpha"]), list(d["status"]), list(d["feature_names"]),
                   d.get("labels"))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: not a JSON bundle ({exc})") from None
        return cls.from_dict(d)
