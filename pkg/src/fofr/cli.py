"""Command-line interface.

One binary with subcommands: fit, confband, test-classical, test-relevant,
predict-band, eigensystem, simulate, loo-eval. A JSON config file can supply
any long flag (dashes as underscores); explicit flags win. Exit codes: 0
success, 2 usage, 3 data error, 4 numeric failure. Every stochastic run
records (seed, v, Q, lambda, Dhat, ahat) in its JSON output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .core import FunctionalSample, center_sample, empirical_covariance, make_grid
from .eigensystem import diagonalization_residual, solve_eigensystem
from .estimator import fit
from .exceptions import DataError, FitFailedError, FofrError, InsufficientSampleError, NumericError
from .inference import (
    bootstrap_ensemble,
    classical_test_bt,
    extremal_sets,
    plrt,
    prediction_band,
    relevant_test,
    simultaneous_region,
)
from .io import (
    emit_results,
    load_curve,
    load_functional_sample,
    read_curve_matrix,
    write_band_csv,
    write_curve_matrix_csv,
    write_surface_csv,
)
from .simulation import (
    DgpSpec,
    default_truncation,
    run_coverage_study,
    run_estimation_study,
    run_power_study,
)

__all__ = ["RunConfig", "parse_config", "loo_prediction_metrics", "main"]

STOCHASTIC_COMMANDS = {"confband", "test-relevant", "predict-band", "simulate"}


class UsageError(Exception):
    """Bad flag combination or out-of-range value (exit code 2)."""


@dataclasses.dataclass
class RunConfig:
    """Validated options of one CLI invocation."""

    command: str
    x: str | None = None
    y: str | None = None
    x0: str | None = None
    beta_star: str = "zero"
    v: int | None = None
    Q: int = 300
    alpha: float = 0.05
    delta: float | None = None
    c: str = "auto"
    seed: int | None = None
    lambda_mode: str = "gcv"
    lambda_: float | None = None
    out: str = "."
    method: str = "bt"
    dgp: int | None = None
    error: str = "i"
    n: int | None = None
    G: int = 100
    reps: int | None = None
    study: str = "estimation"
    threads: int | None = None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fofr",
        description="Function-on-function linear regression with sup-norm inference.",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p, data=True):
        p.add_argument("--config", help="JSON file supplying defaults for any flag")
        p.add_argument("--threads", type=int, help="worker processes (env FOFR_THREADS)")
        p.add_argument("--out", help="output directory (default: current)")
        p.add_argument("--seed", type=int, help="master seed for stochastic steps")
        p.add_argument("--v", type=int, help="basis truncation (default ceil(n^{2/5}))")
        if data:
            p.add_argument("--x", help="predictor curve matrix CSV")
            p.add_argument("--y", help="response curve matrix CSV")

    p = sub.add_parser("fit", help="fit the slope surface")
    common(p)
    p.add_argument("--lambda", dest="lambda_", type=float, help="fixed smoothing parameter")
    p.add_argument("--gcv", action="store_true", help="select lambda by GCV (default)")

    p = sub.add_parser("confband", help="simultaneous confidence band")
    common(p)
    p.add_argument("--alpha", type=float, help="level (default 0.05)")
    p.add_argument("--Q", type=int, help="bootstrap replicates (default 300)")

    p = sub.add_parser("test-classical", help="test equality with a surface")
    common(p)
    p.add_argument("--method", choices=["bt", "plrt"], help="decision rule (default bt)")
    p.add_argument("--beta-star", dest="beta_star", help="surface CSV or 'zero'")
    p.add_argument("--alpha", type=float)
    p.add_argument("--Q", type=int)
    p.add_argument("--lambda", dest="lambda_", type=float, help="PLRT smoothing (default 0)")

    p = sub.add_parser("test-relevant", help="test a sup-norm margin")
    common(p)
    p.add_argument("--delta", type=float, help="margin Delta >= 0")
    p.add_argument("--c", help="extremal-set constant: 'auto' or float")
    p.add_argument("--beta-star", dest="beta_star", help="surface CSV or 'zero'")
    p.add_argument("--alpha", type=float)
    p.add_argument("--Q", type=int)

    p = sub.add_parser("predict-band", help="prediction band at a new predictor")
    common(p)
    p.add_argument("--x0", help="new predictor curve CSV")
    p.add_argument("--alpha", type=float)
    p.add_argument("--Q", type=int)

    p = sub.add_parser("eigensystem", help="solve and export the basis")
    common(p)

    p = sub.add_parser("simulate", help="Monte Carlo studies")
    common(p, data=False)
    p.add_argument("--dgp", type=int, choices=[1, 2, 3])
    p.add_argument("--error", choices=["i", "ii", "iii"])
    p.add_argument("--n", type=int, help="sample size per replicate")
    p.add_argument("--G", type=int, help="grid size (default 100)")
    p.add_argument("--reps", type=int, help="Monte Carlo replicates")
    p.add_argument("--Q", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--study", choices=["estimation", "coverage", "power"])

    p = sub.add_parser("loo-eval", help="leave-one-out prediction metrics")
    common(p)

    return parser


_DEFAULTS = {
    "beta_star": "zero",
    "Q": 300,
    "alpha": 0.05,
    "c": "auto",
    "lambda_mode": "gcv",
    "out": ".",
    "method": "bt",
    "error": "i",
    "G": 100,
    "study": "estimation",
}


def parse_config(argv) -> RunConfig:
    """Parse flags, merge an optional JSON config (flags win), validate."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a subcommand is required")

    merged = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            merged.update(json.loads(Path(config_path).read_text()))
        except OSError as exc:
            raise DataError(f"cannot read config {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {config_path}: invalid JSON ({exc})") from exc
    for key, value in vars(args).items():
        if key in ("config", "gcv"):
            continue
        if value is not None:
            merged[key] = value
    if getattr(args, "lambda_", None) is not None:
        merged["lambda_mode"] = "fixed"

    fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(merged) - fields
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**{**_DEFAULTS, **merged})

    if cfg.Q < 1:
        raise UsageError(f"--Q must be >= 1, got {cfg.Q}")
    if not 0 < cfg.alpha < 1:
        raise UsageError(f"--alpha must be in (0, 1), got {cfg.alpha}")
    if cfg.v is not None and cfg.v < 1:
        raise UsageError(f"--v must be >= 1, got {cfg.v}")
    if cfg.delta is not None and cfg.delta < 0:
        raise UsageError(f"--delta must be >= 0, got {cfg.delta}")
    if cfg.lambda_ is not None and cfg.lambda_ < 0:
        raise UsageError(f"--lambda must be >= 0, got {cfg.lambda_}")
    if cfg.c != "auto":
        try:
            cvalue = float(cfg.c)
        except (TypeError, ValueError):
            raise UsageError(f"--c must be 'auto' or a float, got {cfg.c!r}") from None
        if cvalue <= 0:
            raise UsageError(f"--c must be > 0, got {cvalue}")
    needs_seed = cfg.command in STOCHASTIC_COMMANDS or (
        cfg.command == "test-classical" and cfg.method == "bt"
    )
    if needs_seed and cfg.seed is None:
        raise UsageError(f"--seed is required for stochastic command {cfg.command!r}")
    if cfg.command == "test-relevant" and cfg.delta is None:
        raise UsageError("test-relevant requires --delta")
    if cfg.command == "simulate":
        if cfg.dgp is None or cfg.n is None or cfg.reps is None:
            raise UsageError("simulate requires --dgp, --n and --reps")
        if cfg.reps < 1:
            raise UsageError(f"--reps must be >= 1, got {cfg.reps}")
    return cfg


def _load_xy(cfg) -> tuple[FunctionalSample, FunctionalSample]:
    if not cfg.x or not cfg.y:
        raise UsageError(f"{cfg.command} requires --x and --y")
    X = load_functional_sample(cfg.x)
    Y = load_functional_sample(cfg.y)
    if X.grid != Y.grid or X.n != Y.n:
        raise DataError("predictor and response files must match in shape")
    return X, Y


def _read_beta_star(cfg, grid):
    if cfg.beta_star == "zero":
        return grid.surface(np.zeros((grid.size, grid.size)))
    data, _ = read_curve_matrix(cfg.beta_star)
    if data.shape == (grid.size, grid.size):
        return grid.surface(data)
    if data.shape == (grid.size * grid.size, 3):
        return grid.surface(data[:, 2].reshape(grid.size, grid.size))
    raise DataError(
        f"{cfg.beta_star}: expected a {grid.size}x{grid.size} matrix or s,t,value triples"
    )


def _prepare(cfg):
    X, Y = _load_xy(cfg)
    v = cfg.v if cfg.v is not None else default_truncation(X.n)
    cov = empirical_covariance(X)
    es = solve_eigensystem(cov, v, X.grid)
    grid_arg = [cfg.lambda_] if cfg.lambda_mode == "fixed" and cfg.lambda_ else None
    model = fit(X, Y, es, grid_arg)
    return X, Y, cov, es, model


def _audit(cfg, es, model=None) -> dict:
    return {
        "seed": cfg.seed,
        "v": es.v,
        "Q": cfg.Q,
        "lambda": model.lambda_ if model is not None else None,
        "Dhat": es.Dhat,
        "ahat": es.ahat,
    }


def _outdir(cfg) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def loo_prediction_metrics(
    X: FunctionalSample,
    Y: FunctionalSample,
    v: int | None = None,
    lambda_grid=None,
) -> list[tuple[float, float]]:
    """Leave-one-out integrated squared prediction error and max deviation.

    Each subject is dropped in turn, the model refit (same truncation, GCV
    per fit), and the held-out response predicted with the refit means
    restored.
    """
    if X.n < 3:
        raise InsufficientSampleError(f"need n >= 3 for leave-one-out, got {X.n}")
    if X.n != Y.n or X.grid != Y.grid:
        raise DataError("predictor and response samples must match")
    v = v if v is not None else default_truncation(X.n)
    grid = X.grid
    w = grid.weight
    raw_x = X.data + X.mean.values
    raw_y = Y.data + Y.mean.values
    results = []
    for i in range(X.n):
        keep = np.arange(X.n) != i
        try:
            Xi = center_sample(raw_x[keep], grid)
            Yi = center_sample(raw_y[keep], grid)
            es = solve_eigensystem(empirical_covariance(Xi), v, grid)
            model = fit(Xi, Yi, es, lambda_grid)
        except FofrError as exc:
            raise FitFailedError(i, exc) from exc
        pred = Yi.mean.values + w * (raw_x[i] - Xi.mean.values) @ model.beta_hat.values
        resid = raw_y[i] - pred
        results.append((float(w * (resid**2).sum()), float(np.abs(resid).max())))
    return results


def _run_fit(cfg) -> int:
    X, Y, cov, es, model = _prepare(cfg)
    out = _outdir(cfg)
    write_surface_csv(out / "beta_hat.csv", model.beta_hat)
    emit_results(
        {
            "command": "fit",
            "coefficients": model.coeffs,
            "lambda": model.lambda_,
            "gcv": model.gcv,
            "n": model.n,
            "audit": _audit(cfg, es, model),
        },
        out / "result.json",
    )
    return 0


def _run_confband(cfg) -> int:
    X, Y, cov, es, model = _prepare(cfg)
    ens = bootstrap_ensemble(X, Y, model, cfg.Q, cfg.seed)
    band = simultaneous_region(ens, model, cfg.alpha)
    out = _outdir(cfg)
    write_band_csv(out / "band.csv", model.beta_hat.values, band.lower, band.upper)
    emit_results(
        {
            "command": "confband",
            "alpha": band.alpha,
            "halfwidth": band.halfwidth,
            "quantile_scaled": band.quantile,
            "scale": ens.scale,
            "audit": _audit(cfg, es, model),
        },
        out / "result.json",
    )
    return 0


def _run_test_classical(cfg) -> int:
    X, Y, cov, es, model = _prepare(cfg)
    beta_star = _read_beta_star(cfg, X.grid)
    if cfg.method == "bt":
        ens = bootstrap_ensemble(X, Y, model, cfg.Q, cfg.seed)
        band = simultaneous_region(ens, model, cfg.alpha)
        result = classical_test_bt(beta_star, band)
    else:
        lam = cfg.lambda_ if cfg.lambda_mode == "fixed" and cfg.lambda_ is not None else 0.0
        result = plrt(beta_star, X, Y, es, lam, cfg.alpha)
    out = _outdir(cfg)
    emit_results(
        {
            "command": "test-classical",
            "method": cfg.method,
            "statistic": result.statistic,
            "threshold": result.threshold,
            "reject": result.reject,
            "diagnostics": result.diagnostics,
            "audit": _audit(cfg, es, model),
        },
        out / "result.json",
    )
    return 0


def _run_test_relevant(cfg) -> int:
    X, Y, cov, es, model = _prepare(cfg)
    beta_star = _read_beta_star(cfg, X.grid)
    c = None if cfg.c == "auto" else float(cfg.c)
    masks = extremal_sets(model, beta_star, c)
    ens = bootstrap_ensemble(X, Y, model, cfg.Q, cfg.seed)
    result = relevant_test(beta_star, cfg.delta, cfg.alpha, ens, masks)
    out = _outdir(cfg)
    emit_results(
        {
            "command": "test-relevant",
            "delta": cfg.delta,
            "statistic": result.statistic,
            "threshold": result.threshold,
            "reject": result.reject,
            "diagnostics": result.diagnostics,
            "audit": _audit(cfg, es, model),
        },
        out / "result.json",
    )
    return 0


def _run_predict_band(cfg) -> int:
    if not cfg.x0:
        raise UsageError("predict-band requires --x0")
    X, Y, cov, es, model = _prepare(cfg)
    x0 = load_curve(cfg.x0, X.grid)
    centered = X.grid.curve(x0.values - X.mean.values)
    ens = bootstrap_ensemble(X, Y, model, cfg.Q, cfg.seed)
    band = prediction_band(centered, model, ens, cfg.alpha)
    shift = Y.mean.values
    lower = X.grid.curve(band.lower.values + shift)
    upper = X.grid.curve(band.upper.values + shift)
    out = _outdir(cfg)
    write_band_csv(out / "band.csv", (lower.values + upper.values) / 2, lower, upper)
    emit_results(
        {
            "command": "predict-band",
            "alpha": band.alpha,
            "halfwidth": band.halfwidth,
            "quantile_scaled": band.quantile,
            "audit": _audit(cfg, es, model),
        },
        out / "result.json",
    )
    return 0


def _run_eigensystem(cfg) -> int:
    if not cfg.x:
        raise UsageError("eigensystem requires --x")
    X = load_functional_sample(cfg.x)
    v = cfg.v if cfg.v is not None else default_truncation(X.n)
    cov = empirical_covariance(X)
    es = solve_eigensystem(cov, v, X.grid)
    residual = diagonalization_residual(es, cov)
    out = _outdir(cfg)
    modes = np.vstack(
        [X.grid.points]
        + [es.xfun[k, l] for l in range(v) for k in range(v)]
    ).T
    write_curve_matrix_csv(out / "modes.csv", modes)
    emit_results(
        {
            "command": "eigensystem",
            "rho": es.rho,
            "Dhat": es.Dhat,
            "ahat": es.ahat,
            "rank": es.rank,
            "diagonalization_residual_max": float(np.abs(residual).max()),
            "exponent_points_dropped": es.exponent_points_dropped,
            "audit": {"seed": cfg.seed, "v": es.v, "Q": None, "lambda": None,
                      "Dhat": es.Dhat, "ahat": es.ahat},
        },
        out / "result.json",
    )
    return 0


def _run_simulate(cfg) -> int:
    spec = DgpSpec(dgp=cfg.dgp, n=cfg.n, G=cfg.G, error=cfg.error, seed=cfg.seed)
    out = _outdir(cfg)
    if cfg.study == "estimation":
        report = run_estimation_study(spec, cfg.reps, cfg.Q, v=cfg.v, threads=cfg.threads)
        rows = ["metric,q1,median,q3"] + [
            f"{m},{q[0]!r},{q[1]!r},{q[2]!r}" for m, q in report.quartiles.items()
        ]
        (out / "quartiles.csv").write_text("\n".join(rows) + "\n")
    elif cfg.study == "coverage":
        report = run_coverage_study(
            spec, cfg.reps, cfg.Q, cfg.alpha, v=cfg.v, threads=cfg.threads
        )
        (out / "coverage.csv").write_text(
            "alpha,ucp\n" + f"{cfg.alpha!r},{report.ucp!r}\n"
        )
    else:
        report = run_power_study(
            spec, None, cfg.reps, cfg.Q, cfg.alpha, v=cfg.v, threads=cfg.threads
        )
        rows = ["delta,rejection_rate"] + [
            f"{d!r},{r!r}" for d, r in sorted(report.rejection.items())
        ]
        (out / "power.csv").write_text("\n".join(rows) + "\n")
    payload = {
        "command": "simulate",
        "study": cfg.study,
        "replicates": report.replicates,
        "quartiles": report.quartiles,
        "ucp": report.ucp,
        "rejection": {repr(k): v for k, v in report.rejection.items()},
        "wall_time": report.wall_time,
        "audit": {"seed": cfg.seed, "v": report.config.get("v"), "Q": cfg.Q,
                  "lambda": None, "Dhat": None, "ahat": None},
    }
    emit_results(payload, out / "result.json")
    return 0


def _run_loo_eval(cfg) -> int:
    X, Y = _load_xy(cfg)
    rows = loo_prediction_metrics(X, Y, cfg.v)
    out = _outdir(cfg)
    lines = ["subject,ispe,mpd"] + [
        f"{i},{ispe!r},{mpd!r}" for i, (ispe, mpd) in enumerate(rows)
    ]
    (out / "loo.csv").write_text("\n".join(lines) + "\n")
    emit_results(
        {
            "command": "loo-eval",
            "ispe": [r[0] for r in rows],
            "mpd": [r[1] for r in rows],
            "audit": {"seed": cfg.seed, "v": cfg.v or default_truncation(X.n),
                      "Q": None, "lambda": None, "Dhat": None, "ahat": None},
        },
        out / "result.json",
    )
    return 0


_RUNNERS = {
    "fit": _run_fit,
    "confband": _run_confband,
    "test-classical": _run_test_classical,
    "test-relevant": _run_test_relevant,
    "predict-band": _run_predict_band,
    "eigensystem": _run_eigensystem,
    "simulate": _run_simulate,
    "loo-eval": _run_loo_eval,
}


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv if argv is not None else sys.argv[1:])
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    try:
        return _RUNNERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, FofrError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
