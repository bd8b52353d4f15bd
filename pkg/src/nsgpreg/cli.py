"""Command line interface for the regression library.

Three subcommands are provided.  ``experiment`` runs the Monte Carlo
benchmark on the synthetic rectangular signal and writes summary and
trace CSV files.  ``fit`` fits a single method to a user supplied time
series.  ``diagnose`` runs one ADMM solve and dumps its per-iteration
convergence record.

Exit codes: 0 on success, 1 on user error (bad flags, malformed config
or data), 2 on runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .batch import RegConfig, TimeSeriesDataset, admm_fit, nsgp_objective, subgradient_fit
from .experiment import (
    METHOD_IDS,
    ExperimentConfig,
    _admm_stop,
    _subgrad_stop,
    make_rectangular_dataset,
    run_experiment,
    emit_results,
)
from .inference import batch_marginal_uq, gp_mle_fit, gp_regression, ss_marginal_uq
from .kernels import stationary_matern
from .sssolver import ss_admm_fit, ss_objective, ss_subgradient_fit


class CliError(Exception):
    """User-facing error that maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract here is 1.
    def error(self, message):
        raise CliError(message)


_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_COUNT = {"type": "integer", "minimum": 1}

_REG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lambda_f": _NONNEG,
        "lambda_ell": _NONNEG,
        "lambda_sigma": _NONNEG,
        "rho": _POSITIVE,
        "rho_f": _POSITIVE,
        "rho_ell": _POSITIVE,
        "rho_sigma": _POSITIVE,
        "phi": {"enum": ["identity", "first-difference"]},
        "phi_f": {"enum": ["identity", "first-difference"]},
        "phi_ell": {"enum": ["identity", "first-difference"]},
        "phi_sigma": {"enum": ["identity", "first-difference"]},
    },
}

_SOLVER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "max_iters": _COUNT,
        "step_scale": _POSITIVE,
        "max_outer": _COUNT,
        "inner_max_iters": _COUNT,
        "inner_tol_grad": _POSITIVE,
        "tol_primal": _POSITIVE,
        "tol_dual": _POSITIVE,
    },
}

_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "methods": {
            "type": "array",
            "items": {"enum": list(METHOD_IDS)},
            "minItems": 1,
        },
        "method": {"enum": list(METHOD_IDS)},
        "runs": _COUNT,
        "seed": {"type": "integer", "minimum": 0},
        "uq": {"type": "boolean"},
        "threads": _COUNT,
        "num_points": {"type": "integer", "minimum": 2},
        "noise_var": _POSITIVE,
        "nu": {"enum": [0.5, 1.5]},
        "b_ell": {"type": "number"},
        "b_sigma": {"type": "number"},
        "link_kind": {"enum": ["exp", "logistic", "softplus-like"]},
        "u_lengthscale": _POSITIVE,
        "u_magnitude": _POSITIVE,
        "batch_reg": _REG_SCHEMA,
        "ss_reg": _REG_SCHEMA,
        "solvers": {
            "type": "object",
            "additionalProperties": False,
            "properties": {mid: _SOLVER_SCHEMA for mid in METHOD_IDS},
        },
    },
}


def load_config(path=None):
    """Load and validate a JSON config, or the bundled benchmark config.

    Parameters
    ----------
    path : str or None
        Path to a JSON file.  ``None`` selects the packaged
        ``configs/table1.json``.

    Returns
    -------
    dict
        The validated raw config mapping.
    """
    if path is None:
        text = resources.files("nsgpreg").joinpath("configs/table1.json").read_text()
        source = "<bundled>"
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        source = path
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{source} is not valid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(_CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<top level>"
        raise CliError(f"invalid config {source}: at {where}: {err.message}")
    return raw


def _reg_from_dict(raw):
    """Resolve a reg mapping, expanding the ``rho``/``phi`` shorthands."""
    kwargs = {}
    for field in ("lambda_f", "lambda_ell", "lambda_sigma"):
        if field in raw:
            kwargs[field] = raw[field]
    for stem in ("rho", "phi"):
        shared = raw.get(stem)
        for block in ("f", "ell", "sigma"):
            key = f"{stem}_{block}"
            if key in raw:
                kwargs[key] = raw[key]
            elif shared is not None:
                kwargs[key] = shared
    return kwargs


def build_experiment_config(raw, overrides=None):
    """Turn a validated config dict into an :class:`ExperimentConfig`.

    ``overrides`` maps config keys to values that win over the file
    (used for the --runs/--seed/--threads flags).
    """
    merged = dict(raw)
    merged.pop("method", None)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    defaults = ExperimentConfig()
    kwargs = {}
    for key in (
        "methods",
        "runs",
        "seed",
        "uq",
        "threads",
        "num_points",
        "noise_var",
        "nu",
        "b_ell",
        "b_sigma",
        "link_kind",
        "u_lengthscale",
        "u_magnitude",
        "solvers",
    ):
        if key in merged:
            kwargs[key] = merged[key]
    if "methods" in kwargs:
        kwargs["methods"] = tuple(kwargs["methods"])
    for key in ("batch_reg", "ss_reg"):
        if key in merged:
            base = getattr(defaults, key)
            kwargs[key] = dataclasses.replace(base, **_reg_from_dict(merged[key]))
    return ExperimentConfig(**kwargs)


def read_series_csv(path, default_noise_var):
    """Read a ``t,y[,r]`` CSV into a :class:`TimeSeriesDataset`.

    The optional third column holds per-sample noise variances; when it
    is absent ``default_noise_var`` is used for every sample.
    """
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise CliError(f"cannot read data {path}: {exc}") from exc
    rows = [row for row in rows if row and any(cell.strip() for cell in row)]
    if not rows:
        raise CliError(f"{path}: no rows found")
    header = [cell.strip().lower() for cell in rows[0]]
    if header not in (["t", "y"], ["t", "y", "r"]):
        raise CliError(f"{path}: expected header 't,y' or 't,y,r', got {','.join(header)}")
    parsed = []
    for number, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise CliError(f"{path}: row {number} has {len(row)} fields, expected {len(header)}")
        try:
            parsed.append([float(cell) for cell in row])
        except ValueError as exc:
            raise CliError(f"{path}: row {number}: {exc}") from exc
    data = np.asarray(parsed, dtype=float)
    noise = data[:, 2] if len(header) == 3 else default_noise_var
    try:
        return TimeSeriesDataset(data[:, 0], data[:, 1], noise)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _resolve_method(args, raw, allowed):
    method = args.method or raw.get("method")
    if method is None:
        raise CliError("no method given; pass --method or set \"method\" in the config")
    if method not in allowed:
        raise CliError(f"method {method!r} is not one of {', '.join(allowed)}")
    return method


def _write_trace(path, dataset, f_hat, u_ell, u_sigma, marginal):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "y", "f_hat", "u_ell_hat", "u_sigma_hat", "mean", "lower95", "upper95"])
        for k in range(len(dataset)):
            row = [dataset.times[k], dataset.values[k], f_hat[k]]
            row += [u_ell[k], u_sigma[k]] if u_ell is not None else ["", ""]
            if marginal is not None:
                half = 1.959963984540054 * np.sqrt(marginal.var[k])
                row += [marginal.mean[k], marginal.mean[k] - half, marginal.mean[k] + half]
            else:
                row += ["", "", ""]
            writer.writerow(row)


def _cmd_experiment(args):
    raw = load_config(args.config)
    config = build_experiment_config(
        raw, {"runs": args.runs, "seed": args.seed, "threads": args.threads}
    )
    table = run_experiment(config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    emit_results(table, outdir)
    print(f"{'method':<16} {'uq':<4} {'rmse_mean':>12} {'nlpd_mean':>12}")
    for row in table.rows:
        nlpd = f"{row.nlpd_mean:.4f}" if row.nlpd_mean is not None else "-"
        print(f"{row.method:<16} {'on' if row.uq else 'off':<4} {row.rmse_mean:>12.6f} {nlpd:>12}")
    print(f"wrote {outdir / 'results.csv'}")
    return 0


def _cmd_fit(args):
    raw = load_config(args.config)
    method = _resolve_method(args, raw, METHOD_IDS)
    config = build_experiment_config(raw, {"seed": args.seed})
    if args.data is not None:
        data = read_series_csv(args.data, config.noise_var)
    else:
        data, _ = make_rectangular_dataset(config.num_points, config.noise_var, config.seed)
    settings = config.solver_settings(method)

    u_ell = u_sigma = None
    if method == "gp":
        result = gp_mle_fit(data, nu=config.nu)
        tau = data.times[:, None] - data.times[None, :]
        marginal = gp_regression(data, stationary_matern(tau, result.params))
        f_hat = marginal.mean
        print(f"method: gp  nlml: {result.nlml:.6f}  converged: {result.converged}")
        print(
            f"lengthscale: {result.params.lengthscale:.6g}  magnitude: {result.params.magnitude:.6g}"
        )
    elif method in ("nsgp", "r-nsgp-gd", "r-nsgp-admm"):
        spec = config.batch_spec()
        reg = config.reg_for(method)
        if method == "r-nsgp-admm":
            latent, state = admm_fit(data, spec, reg, stop=_admm_stop(settings, len(data)))
            value, _ = nsgp_objective(latent, data, spec)
            primal, dual = state.history[-1, 1], state.history[-1, 2]
            print(
                f"method: {method}  objective: {value:.6f}  outer_iterations: {state.iterations}"
            )
            print(
                f"primal_residual: {primal:.3e}  dual_residual: {dual:.3e}  "
                f"converged: {state.converged}"
            )
        else:
            latent = subgradient_fit(data, spec, reg, stop=_subgrad_stop(settings))
            value, _ = nsgp_objective(latent, data, spec)
            print(
                f"method: {method}  objective: {value:.6f}  "
                f"iterations: {_subgrad_stop(settings).max_iters}"
            )
        f_hat, u_ell, u_sigma = latent.f, latent.u_ell, latent.u_sigma
        marginal = batch_marginal_uq(latent, data, spec)
    else:
        model = config.ss_model()
        reg = config.reg_for(method)
        if method == "r-ss-nsgp-admm":
            latent, state = ss_admm_fit(data, model, reg, stop=_admm_stop(settings, len(data)))
            value, _ = ss_objective(latent, data, model)
            primal, dual = state.history[-1, 1], state.history[-1, 2]
            print(
                f"method: {method}  objective: {value:.6f}  outer_iterations: {state.iterations}"
            )
            print(
                f"primal_residual: {primal:.3e}  dual_residual: {dual:.3e}  "
                f"converged: {state.converged}"
            )
        else:
            latent = ss_subgradient_fit(data, model, reg, stop=_subgrad_stop(settings))
            value, _ = ss_objective(latent, data, model)
            print(
                f"method: {method}  objective: {value:.6f}  "
                f"iterations: {_subgrad_stop(settings).max_iters}"
            )
        f_hat, u_ell, u_sigma = latent.f, latent.u_ell, latent.u_sigma
        marginal = ss_marginal_uq(latent, data, model)

    if args.out is not None:
        _write_trace(args.out, data, f_hat, u_ell, u_sigma, marginal)
        print(f"wrote {args.out}")
    return 0


def _cmd_diagnose(args):
    raw = load_config(args.config)
    method = _resolve_method(args, raw, ("r-nsgp-admm", "r-ss-nsgp-admm"))
    config = build_experiment_config(raw, {"seed": args.seed})
    if args.data is not None:
        data = read_series_csv(args.data, config.noise_var)
    else:
        data, _ = make_rectangular_dataset(config.num_points, config.noise_var, config.seed)
    settings = config.solver_settings(method)
    stop = _admm_stop(settings, len(data))
    if method == "r-nsgp-admm":
        _, state = admm_fit(data, config.batch_spec(), config.reg_for(method), stop=stop)
    else:
        _, state = ss_admm_fit(data, config.ss_model(), config.reg_for(method), stop=stop)
    with open(args.out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "lagrangian", "primal_residual", "dual_residual"])
        for k, (lagrangian, primal, dual) in enumerate(state.history, start=1):
            writer.writerow([k, f"{lagrangian:.12g}", f"{primal:.12g}", f"{dual:.12g}"])
    print(
        f"method: {method}  outer_iterations: {state.iterations}  converged: {state.converged}"
    )
    print(f"lagrangian_monotone: {state.monotone}")
    if not state.monotone:
        print("warning: augmented Lagrangian increased between outer iterations", file=sys.stderr)
    print(f"wrote {args.out}")
    return 0


def build_parser():
    parser = _Parser(prog="nsgpreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    exp = sub.add_parser("experiment", help="run the Monte Carlo benchmark")
    exp.add_argument("--config", help="JSON config path (default: bundled benchmark config)")
    exp.add_argument("--out", default="results", help="output directory (default: results)")
    exp.add_argument("--runs", type=int, help="override the number of replicates")
    exp.add_argument("--seed", type=int, help="override the base seed")
    exp.add_argument("--threads", type=int, help="override the worker process count")
    exp.set_defaults(func=_cmd_experiment)

    fit = sub.add_parser("fit", help="fit one method to a time series")
    fit.add_argument("--config", help="JSON config path (default: bundled benchmark config)")
    fit.add_argument("--data", help="CSV with header t,y or t,y,r (default: synthetic signal)")
    fit.add_argument("--method", choices=METHOD_IDS, help="method to fit")
    fit.add_argument("--out", help="write a fit trace CSV here")
    fit.add_argument("--seed", type=int, help="override the base seed")
    fit.set_defaults(func=_cmd_fit)

    diag = sub.add_parser("diagnose", help="dump ADMM convergence diagnostics")
    diag.add_argument("--config", help="JSON config path (default: bundled benchmark config)")
    diag.add_argument("--data", help="CSV with header t,y or t,y,r (default: synthetic signal)")
    diag.add_argument(
        "--method", choices=("r-nsgp-admm", "r-ss-nsgp-admm"), help="ADMM method to run"
    )
    diag.add_argument("--out", default="diagnostics.csv", help="per-iteration CSV path")
    diag.add_argument("--seed", type=int, help="override the base seed")
    diag.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
