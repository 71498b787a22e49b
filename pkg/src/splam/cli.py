"""Command-line interface: ``splam {fit,path,cv,predict,simulate}``.

Every command prints one JSON metrics line on stdout. Exit codes: 0 on
success, 1 on data or convergence errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments as ex
from .estimator import SPLAMClassifier, SPLAMPath, SPLAMRegressor
from .io import DataError, ModelBundle, read_csv_features, read_data, read_svmlight, write_csv
from .path import DEFAULT_ALPHAS, DEFAULT_N_LAMBDA, THEORY_ALPHA, score
from .solvers import ALGORITHMS, SolverConfig
from .spline_basis import DEFAULT_KNOTS

STUDIES = ("synth1", "winnermap", "spamlb", "oraclebound")


class ConvergenceError(RuntimeError):
    pass


def _lambda_arg(text):
    if text == "max":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'max', got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError("lambda must be non-negative")
    return value


def _float_list(text):
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _int_list(text):
    return tuple(int(v) for v in _float_list(text))


def _alpha_arg(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("alpha must lie in [0, 1]")
    return value


def _common(p, data=True):
    if data:
        p.add_argument("input", help="training data file")
        p.add_argument("--format", choices=("csv", "svmlight"), default="csv")
        p.add_argument("--loss", choices=("quadratic", "logistic"), default="quadratic")
        p.add_argument("--knots", type=int, default=DEFAULT_KNOTS, help="knots per feature")
    p.add_argument("--solver", choices=("auto",) + ALGORITHMS, default="auto")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-sweeps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-csv", help="write the table here instead of stdout")


def _grid_flags(p):
    p.add_argument("--alpha-grid", type=_float_list, default=DEFAULT_ALPHAS,
                   help="comma-separated alpha values")
    p.add_argument("--nlambda", type=int, default=DEFAULT_N_LAMBDA)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)


def build_parser():
    parser = argparse.ArgumentParser(prog="splam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit at one (lambda, alpha)")
    _common(p)
    p.add_argument("--lambda", dest="lam", type=_lambda_arg, required=True,
                   help="penalty level, or 'max'")
    p.add_argument("--alpha", type=_alpha_arg, default=THEORY_ALPHA)
    p.add_argument("--out", required=True, help="model bundle (JSON)")

    p = sub.add_parser("path", help="(lambda, alpha) grid with a held-out validation fold")
    _common(p)
    _grid_flags(p)
    p.add_argument("--folds", type=int, default=5,
                   help="one fold of this many is held out for selection")
    p.add_argument("--out", help="bundle of the selected model")

    p = sub.add_parser("cv", help="K-fold comparison of SPLAM, SpAM and the Lasso")
    _common(p)
    _grid_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", help="also select on the full data and save that bundle")

    p = sub.add_parser("predict", help="apply a saved bundle")
    p.add_argument("model", help="bundle written by fit, path or cv")
    p.add_argument("input")
    p.add_argument("--format", choices=("csv", "svmlight"), default="csv")
    p.add_argument("--out-csv")

    p = sub.add_parser("simulate", help="run a synthetic study")
    p.add_argument("study", choices=STUDIES)
    _common(p, data=False)
    _grid_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--N", type=int, help="sample size (synth1, oraclebound)")
    p.add_argument("--p", type=int, help="feature count")
    p.add_argument("--sigma2", type=_float_list, default=(1.0, 2.0, 4.0, 8.0))
    p.add_argument("--reps", type=int)
    p.add_argument("--split", type=_int_list, default=(1000, 200, 200),
                   help="train,validation,test sizes (winnermap)")
    p.add_argument("--step", type=float, default=0.1, help="(gamma, delta) grid step")
    p.add_argument("--M", type=int, default=4, help="block width (oraclebound)")
    p.add_argument("--M-list", type=_int_list, default=(8, 32, 128))
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    return parser


def _config(args):
    return SolverConfig(algorithm=args.solver, tol=args.tol, max_sweeps=args.max_sweeps)


def _emit(metrics):
    print(json.dumps(metrics, sort_keys=True))


def _write_table(args, rows, fields=None):
    write_csv(args.out_csv or sys.stdout, rows, fields)


def _signed_labels(y):
    classes = np.unique(y)
    if classes.size != 2:
        raise DataError(f"logistic loss needs two classes, got {classes.size}")
    return np.where(y == classes[1], 1.0, -1.0), classes


def cmd_fit(args):
    X, y, names = read_data(args.input, args.format)
    cls = SPLAMClassifier if args.loss == "logistic" else SPLAMRegressor
    est = cls(lam=args.lam, alpha=args.alpha, n_knots=args.knots, solver=args.solver,
              tol=args.tol, max_sweeps=args.max_sweeps)
    est.fit(X, y)
    est.to_bundle(names).save(args.out)
    res = est.result_
    fitted = res.predict(est.design_.Q)
    target = y if args.loss == "quadratic" else _signed_labels(y)[0]
    _emit({
        "command": "fit", "n_samples": int(X.shape[0]), "n_features": int(X.shape[1]),
        "loss": args.loss, "lambda": est.lam_, "alpha": float(args.alpha),
        "algorithm": res.algorithm, "objective": res.final_objective,
        "n_sweeps": res.n_sweeps, "converged": bool(res.converged),
        "support": res.support_size, "linear": res.n_linear, "nonlinear": res.n_nonlinear,
        "train_score": score(args.loss, fitted, target), "bundle": args.out,
    })
    if not res.converged:
        raise ConvergenceError(f"no convergence within {args.max_sweeps} sweeps")


def _path_estimator(args, folds):
    if folds < 2:
        raise DataError("need at least 2 folds")
    return SPLAMPath(loss=args.loss, alphas=args.alpha_grid, n_lambda=args.nlambda,
                     validation_fraction=1.0 / folds, random_state=args.seed,
                     n_knots=args.knots, solver=args.solver, tol=args.tol,
                     max_sweeps=args.max_sweeps)


def cmd_path(args):
    X, y, names = read_data(args.input, args.format)
    est = _path_estimator(args, args.folds).fit(X, y)
    _write_table(args, est.grid_.rows())
    if args.out:
        est.to_bundle(names).save(args.out)
    if args.out_csv:
        a, l = est.grid_.selected
        _emit({"command": "path", "lambda": est.lam_, "alpha": est.alpha_,
               "validation_score": float(est.grid_.scores[a, l]),
               "support": est.best_.support_size, "linear": est.best_.n_linear,
               "nonlinear": est.best_.n_nonlinear, "bundle": args.out})


def cmd_cv(args):
    X, y, names = read_data(args.input, args.format)
    target = y if args.loss == "quadratic" else _signed_labels(y)[0]
    if not 2 <= args.folds <= len(y):
        raise DataError(f"folds must lie in [2, {len(y)}]")
    folds = ex.cross_validate(X, target, args.folds, seed=args.seed, n_jobs=args.workers,
                              loss=args.loss, alphas=args.alpha_grid, n_lambda=args.nlambda,
                              n_knots=args.knots, config=_config(args))
    rows = []
    for k, res in enumerate(folds):
        for method, r in res.items():
            rows.append({"fold": k, "method": method, "score": r["score"],
                         "lambda": float(r["lam"]), "alpha": float(r["alpha"]),
                         "support": sum(s != "zero" for s in r["status"]),
                         "linear": r["status"].count("linear"),
                         "nonlinear": r["status"].count("nonlinear")})
    _write_table(args, rows)
    if args.out:
        _path_estimator(args, args.folds).fit(X, y).to_bundle(names).save(args.out)
    if args.out_csv:
        summary = {"command": "cv", "folds": args.folds, "loss": args.loss}
        for method in folds[0]:
            vals = np.array([f[method]["score"] for f in folds])
            summary[f"{method}_mean"] = float(vals.mean())
            summary[f"{method}_std"] = float(vals.std(ddof=1))
        _emit(summary)


def cmd_predict(args):
    bundle = ModelBundle.load(args.model)
    p = bundle.design.n_features
    if args.format == "csv":
        X = read_csv_features(args.input, p)
    else:
        X, _ = read_svmlight(args.input, n_features=p)
    if bundle.loss == "quadratic":
        rows = [{"prediction": float(v)} for v in bundle.predict(X)]
    else:
        prob, label = bundle.predict(X)
        rows = [{"probability": float(a), "label": int(b)} for a, b in zip(prob, label)]
    fields = ["prediction"] if bundle.loss == "quadratic" else ["probability", "label"]
    _write_table(args, rows, fields)
    if args.out_csv:
        _emit({"command": "predict", "n_samples": int(X.shape[0]), "output": args.out_csv})


def cmd_simulate(args):
    kw = {"alphas": args.alpha_grid, "n_lambda": args.nlambda, "config": _config(args)}
    if args.study == "synth1":
        rows, _ = ex.run_synth1(N=args.N or 10_000, sigma2_list=args.sigma2, folds=args.folds,
                                seed=args.seed, n_jobs=args.workers, p=args.p or 100, **kw)
        metrics = {"rows": len(rows)}
    elif args.study == "winnermap":
        if len(args.split) != 3:
            raise DataError("--split needs three sizes")
        cells = ex.winner_map(p=args.p or 20, split=args.split, reps=args.reps or 5,
                              seed=args.seed, step=args.step, n_jobs=args.workers, **kw)
        rows = [{"gamma": c.gamma, "delta": c.delta, "winner": c.label,
                 "winners": c.winners,
                 **{f"{m}_rmse": v for m, v in c.mean_rmse.items()}} for c in cells]
        metrics = {"rows": len(rows)}
    elif args.study == "spamlb":
        rows = ex.check_spam_lb(p=args.p or 4, b=args.b, sigma=args.sigma, M_list=args.M_list,
                                seed=args.seed, reps=args.reps or 20)
        metrics = {"rows": len(rows)}
    else:
        res = ex.check_oracle_bound(p=args.p or 64, M=args.M, N=args.N or 512,
                                    reps=args.reps or 200, seed=args.seed, sigma=args.sigma)
        rows = [{"replicate": r, "lhs": float(a), "rhs": float(b), "holds": bool(a <= b)}
                for r, (a, b) in enumerate(zip(res.lhs, res.rhs))]
        metrics = {"coverage": res.coverage, "lambda": res.lam, "alpha": res.alpha}
    _write_table(args, rows)
    if args.out_csv:
        _emit({"command": "simulate", "study": args.study, **metrics})


COMMANDS = {"fit": cmd_fit, "path": cmd_path, "cv": cmd_cv, "predict": cmd_predict,
            "simulate": cmd_simulate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (DataError, ConvergenceError, OSError, ValueError) as exc:
        print(f"splam {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
