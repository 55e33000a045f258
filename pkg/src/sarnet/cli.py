"""Command-line surface: simulate, estimate, diagnose, select.

Results go to standard output (or --out); warnings and notes go to standard
error.  Exit status: 0 success, 1 usage error, 2 data error (missing or
malformed input files), 3 numerical failure.  A config file of ``key =
value`` lines supplies defaults for any long flag; explicit flags win.
Identical flags and seed produce byte-identical output.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import montecarlo
from .estimation import (preliminary_delta, preliminary_rho, regularized_2sls)
from .graphs import load_network
from .identification import AsymmetricMatrixError, build_report, distinct_eigenvalues
from .instruments import build_instruments, normalize_columns, q1_roster
from .montecarlo import McConfig, run_study, summarize
from .selection import SelectionConfig, curve_to_csv, select_alpha
from .transforms import j_projector

__all__ = ["main"]

_STDERR_SE_NOTE = ("note: reported standard errors do not account for the "
                   "data-driven regularization choice")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with status 2
        raise UsageError(message)


def _read_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _build_parser(defaults: dict[str, str]) -> _Parser:
    parser = _Parser(prog="sarnet", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo cell and print the summary table")
    sim.add_argument("--groups", type=int, default=30)
    sim.add_argument("--size", type=int, default=10)
    sim.add_argument("--max-links", type=int, default=3)
    sim.add_argument("--reps", type=int, default=500)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--criterion", choices=("cp", "gcv", "loo"), default="cp")
    sim.add_argument("--transform-rho", action="store_true",
                     help="whiten every estimator with the estimated rho")
    sim.add_argument("--format", choices=("text", "csv"), default="text")
    sim.add_argument("--workers", type=int, default=None,
                     help=f"process count (default ${montecarlo.THREADS_ENV_VAR} or 1)")
    sim.add_argument("--out")

    def add_data_flags(p, need_data: bool):
        p.add_argument("--edges", required=True, help="edge CSV: group_id,src,dst,weight")
        p.add_argument("--data", required=need_data,
                       help="node CSV: group_id,node_id,x1...,x2...,y")
        p.add_argument("--m-edges", help="separate edge CSV for the disturbance matrix M")

    diag = sub.add_parser("diagnose", help="spectral identification report")
    add_data_flags(diag, need_data=False)
    diag.add_argument("--tol", type=float, default=1e-8,
                      help="relative eigenvalue clustering tolerance")
    diag.add_argument("--weak-threshold", type=float, default=1e6)
    diag.add_argument("--correlated", action="store_true",
                      help="use the correlated-disturbance stack (centrality columns and M copy)")
    diag.add_argument("--out")

    def add_estimation_flags(p):
        add_data_flags(p, need_data=True)
        p.add_argument("--scheme", choices=("T", "LF", "PC"), default="T")
        p.add_argument("--criterion", choices=("cp", "gcv", "loo"), default="cp")
        p.add_argument("--order", type=int, default=None,
                       help="highest network-lag power (default: distinct eigenvalues - 1)")
        p.add_argument("--no-bonacich", action="store_true",
                       help="drop the centrality instrument columns")
        p.add_argument("--no-m-lags", action="store_true",
                       help="drop the M-premultiplied instrument copy")
        p.add_argument("--normalize", choices=("none", "unit-variance", "standardized"),
                       default="unit-variance")
        p.add_argument("--out")

    est = sub.add_parser("estimate", help="regularized 2SLS on CSV data")
    add_estimation_flags(est)

    sel = sub.add_parser("select", help="export the regularization-selection curve as CSV")
    add_estimation_flags(sel)

    if defaults:
        known = {a.dest for a in parser._actions}
        for p in sub.choices.values():
            known |= {a.dest for a in p._actions}
        unknown = set(defaults) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        parser.set_defaults(**defaults)
        for p in sub.choices.values():
            p.set_defaults(**{k: v for k, v in defaults.items()
                              if k in {a.dest for a in p._actions}})
    return parser


def _coerce_config(defaults: dict[str, str]) -> dict[str, object]:
    coerced: dict[str, object] = {}
    int_keys = {"groups", "size", "max_links", "reps", "seed", "order", "workers"}
    float_keys = {"tol", "weak_threshold"}
    bool_keys = {"transform_rho", "no_bonacich", "no_m_lags", "correlated"}
    for k, v in defaults.items():
        if k in int_keys:
            coerced[k] = int(v)
        elif k in float_keys:
            coerced[k] = float(v)
        elif k in bool_keys:
            coerced[k] = v.strip().lower() in ("1", "true", "yes", "on")
        else:
            coerced[k] = v
    return coerced


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    config = McConfig(group_count=args.groups, group_size=args.size,
                      max_links=args.max_links, replications=args.reps,
                      seed=args.seed, criterion=args.criterion,
                      transform_with_rho=args.transform_rho)
    results = run_study(config, workers=args.workers)
    summary = summarize(results, config)
    text = summary.to_csv() if args.format == "csv" else summary.to_text()
    _emit(text, args.out)
    return 0


def _load(args, need_data: bool):
    try:
        net, data = load_network(args.edges, getattr(args, "data", None), args.m_edges)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if need_data and data is None:
        raise DataError("this command needs --data (node CSV)")
    return net, data


def _cmd_diagnose(args) -> int:
    net, data = _load(args, need_data=False)
    X = data.regressors(net) if data is not None else None
    report = build_report(net, X, rho_zero=not args.correlated,
                          tol=args.tol, weak_threshold=args.weak_threshold)
    lines = [f"{report.verdict} ({report.distinct_eigenvalue_count} distinct eigenvalues)"]
    lines += report.lines()
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _prepare_estimation(args):
    net, data = _load(args, need_data=True)
    X = data.regressors(net)
    J = j_projector(net.group_sizes, net.M)
    q1 = q1_roster(net, X, J)
    delta_tilde = preliminary_delta(data, net, q1)
    rho_tilde = preliminary_rho(data, net, delta_tilde, J=J)
    inst = build_instruments(net, X, order=args.order,
                             include_bonacich=not args.no_bonacich,
                             include_M_lags=not args.no_m_lags, J=J)
    inst = normalize_columns(inst, args.normalize)
    sel_config = SelectionConfig(criterion=args.criterion)
    sel = select_alpha(data, net, inst, args.scheme, sel_config,
                       rho_tilde=rho_tilde, delta_tilde=delta_tilde)
    return net, data, inst, delta_tilde, rho_tilde, sel


def _cmd_estimate(args) -> int:
    net, data, inst, _, rho_tilde, sel = _prepare_estimation(args)
    result = regularized_2sls(data, net, inst, sel.scheme, rho_tilde)
    try:
        count, _ = distinct_eigenvalues(net.W)
    except AsymmetricMatrixError:
        count = None
    lines = [
        f"n = {net.n}",
        f"groups = {net.group_count}",
        f"instruments = {inst.n_columns}",
        f"scheme = {sel.kind}",
        f"criterion = {sel.criterion}",
        f"alpha_star = {sel.alpha_star:.6g}",
        f"lambda_hat = {result.lambda_hat:.6g}",
        f"lambda_se = {result.std_errors[0]:.6g}",
    ]
    for i, (b, se) in enumerate(zip(result.beta1_hat,
                                    result.std_errors[1:1 + result.k1])):
        lines.append(f"beta1_hat[{i}] = {b:.6g}")
        lines.append(f"beta1_se[{i}] = {se:.6g}")
    for i, (b, se) in enumerate(zip(result.beta2_hat,
                                    result.std_errors[1 + result.k1:])):
        lines.append(f"beta2_hat[{i}] = {b:.6g}")
        lines.append(f"beta2_se[{i}] = {se:.6g}")
    lines += [
        f"rho_tilde = {result.rho_tilde:.6g}",
        f"sigma2_hat = {result.sigma2_hat:.6g}",
        f"tr_P = {result.tr_P:.6g}",
        f"condition_number = {result.condition_number:.6g}",
        f"distinct_eigenvalues = {count if count is not None else '-'}",
    ]
    _emit("\n".join(lines) + "\n", args.out)
    print(_STDERR_SE_NOTE, file=sys.stderr)
    return 0


def _cmd_select(args) -> int:
    _, _, _, _, _, sel = _prepare_estimation(args)
    if args.out:
        curve_to_csv(sel, args.out)
    else:
        curve_to_csv(sel, sys.stdout)
    print(f"alpha_star = {sel.alpha_star:.6g}", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        defaults: dict[str, str] = {}
        if "--config" in argv:
            idx = argv.index("--config")
            if idx + 1 >= len(argv):
                raise UsageError("--config needs a path")
            defaults = _coerce_config(_read_config_file(argv[idx + 1]))
        parser = _build_parser(defaults)
        args = parser.parse_args(argv)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "diagnose":
            return _cmd_diagnose(args)
        if args.command == "estimate":
            return _cmd_estimate(args)
        return _cmd_select(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:  # argparse -h
        code = exc.code
        return int(code) if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
