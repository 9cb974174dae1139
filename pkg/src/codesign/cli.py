"""Command-line interface: ``codesign design|evaluate|simulate|bounds``.

Exit codes: 0 ok, 2 bad flags or input, 3 I/O error, 4 solver error,
5 oracle disagreement, 6 some simulation rows failed.
"""
import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import __version__
from .designs import DesignRequest, design
from .errors import CodesignError, IncompatibleDimensions, RankDeficient
from .model import (
    AllocationSet,
    NoiseSpec,
    closed_form_benchmarks,
    d_efficiency,
    hadamard_upper_bound,
    precision_matrix,
    precision_oracle,
    projection_complement,
    treatment_variances,
)
from .sim import SimulationConfig, run_study, summarize

EXIT_USAGE, EXIT_IO, EXIT_SOLVER, EXIT_ORACLE, EXIT_PARTIAL = 2, 3, 4, 5, 6
ORACLE_TOL = 1e-6
SEED_ENV = "CODESIGN_SEED"
CLI_METHODS = ("rand", "pb", "sdr", "greedy-sdp", "greedy-ls")
RESULT_HEADER = ("method", "cov_index", "k", "tau", "p", "replication", "d_eff",
                 "var_first", "var_last", "wall_time", "hadamard_upper", "variance_floor")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def fmt(value):
    return f"{value:.6f}"


def _sigmas(text, k):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"--sigma: not a number list: {text!r}", EXIT_USAGE) from None
    if len(vals) == 1 and k is not None:
        vals = vals * k
    if k is not None and len(vals) != k:
        raise CliError(f"--sigma needs 1 or {k} values, got {len(vals)}", EXIT_USAGE)
    if any(not v > 0 for v in vals):
        raise CliError("--sigma values must be positive", EXIT_USAGE)
    return vals


def _noise(args, k):
    if args.tau < 0:
        raise CliError("--tau must be >= 0", EXIT_USAGE)
    return NoiseSpec.from_sd(args.tau, _sigmas(args.sigma, k), k)


def _read_matrix(path, skip_header=False):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
    header = None
    if skip_header and rows:
        header, rows = rows[0], rows[1:]
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    try:
        data = np.array([[float(cell) for cell in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise CliError(f"{path}: malformed CSV ({exc})", EXIT_IO) from None
    if data.ndim != 2 or data.size == 0 or len({len(r) for r in rows}) != 1:
        raise CliError(f"{path}: expected a non-empty rectangular table", EXIT_IO)
    return header, data


def _read_covariates(path, add_intercept):
    _, z = _read_matrix(path)
    if add_intercept and not np.all(z[:, 0] == 1.0):
        z = np.column_stack([np.ones(z.shape[0]), z])
    if not np.all(z[:, 0] == 1.0):
        raise CliError("first covariate column must be all ones (or pass --add-intercept)",
                       EXIT_USAGE)
    try:
        return projection_complement(z)
    except RankDeficient as exc:
        raise CliError(f"covariates: {exc}", EXIT_USAGE) from None


def _read_allocation(path):
    header, x = _read_matrix(path, skip_header=True)
    k = x.shape[1]
    if header is None or [h.strip() for h in header] != [f"x{j + 1}" for j in range(k)]:
        raise CliError(f"{path}: header must be x1,...,x{k}", EXIT_IO)
    if not np.all((x == 1) | (x == -1)):
        raise CliError(f"{path}: entries must be -1 or 1", EXIT_IO)
    return AllocationSet(x.astype(np.int64))


def _write_text(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def allocation_csv(alloc):
    lines = [",".join(f"x{j + 1}" for j in range(alloc.k))]
    lines += [",".join(str(int(v)) for v in row) for row in alloc.x]
    return "\n".join(lines) + "\n"


def summary_items(cov, alloc, noise):
    prec = precision_matrix(cov, alloc, noise)
    items = [("d_efficiency", fmt(d_efficiency(prec)))]
    try:
        var = treatment_variances(prec)
        items += [(f"var_{j + 1}", fmt(v)) for j, v in enumerate(var)]
    except CodesignError:
        items += [(f"var_{j + 1}", "inf") for j in range(alloc.k)]
    items.append(("hadamard_upper", fmt(hadamard_upper_bound(cov, noise))))
    return items


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"{SEED_ENV} must be an integer", EXIT_USAGE) from None
    return None


def cmd_design(args):
    cov = _read_covariates(args.covariates, args.add_intercept)
    if args.experiments < 1:
        raise CliError("--experiments must be >= 1", EXIT_USAGE)
    if not args.time_limit > 0:
        raise CliError("--time-limit must be positive", EXIT_USAGE)
    if args.rounding_draws < 1:
        raise CliError("--rounding-draws must be >= 1", EXIT_USAGE)
    noise = _noise(args, args.experiments)
    seed = _seed(args)
    req = DesignRequest(cov, noise, args.method, seed=0 if seed is None else seed,
                        time_limit_per_sdp=args.time_limit,
                        rounding_draws=args.rounding_draws)
    try:
        alloc = design(req)
    except IncompatibleDimensions as exc:
        raise CliError(f"designs: {exc}", EXIT_USAGE) from None
    except CodesignError as exc:
        raise CliError(f"designs: {type(exc).__name__}: {exc}", EXIT_SOLVER) from None
    _write_text(args.out, allocation_csv(alloc))
    print(" ".join(f"{k}={v}" for k, v in summary_items(cov, alloc, noise)))
    return 0


def cmd_evaluate(args):
    cov = _read_covariates(args.covariates, args.add_intercept)
    alloc = _read_allocation(args.alloc)
    if alloc.n != cov.n:
        raise CliError(f"allocation has {alloc.n} rows, covariates {cov.n}", EXIT_USAGE)
    noise = _noise(args, alloc.k)
    for key, val in summary_items(cov, alloc, noise):
        print(f"{key}={val}")
    if args.oracle:
        try:
            oracle = precision_oracle(cov, alloc, noise)
        except CodesignError as exc:
            raise CliError(f"model: {type(exc).__name__}: {exc}", EXIT_SOLVER) from None
        prec = precision_matrix(cov, alloc, noise)
        scale = max(float(np.max(np.abs(oracle))), np.finfo(float).tiny)
        disc = float(np.max(np.abs(prec - oracle))) / scale
        print(f"oracle_discrepancy={disc:.6e}")
        if disc > ORACLE_TOL:
            return EXIT_ORACLE
    return 0


def _int_list(text):
    return tuple(int(s) for s in str(text).split(",") if s.strip())


def _float_list(text):
    return tuple(float(s) for s in str(text).split(",") if s.strip())


def _method_list(text):
    return tuple(s.strip().replace("-", "_") for s in str(text).split(",") if s.strip())


CONFIG_KEYS = {
    "n": int,
    "p_values": _int_list,
    "k_values": _int_list,
    "tau_values": _float_list,
    "covariate_matrices": int,
    "replications": int,
    "methods": _method_list,
    "seed": int,
    "time_limit": float,
}


def read_config(path):
    """Flat ``key=value`` file; ``#`` starts a comment, lists are comma-separated."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value", EXIT_USAGE)
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}", EXIT_USAGE)
        try:
            out[key] = CONFIG_KEYS[key](val)
        except ValueError:
            raise CliError(f"{path}:{lineno}: bad value for {key}", EXIT_USAGE) from None
    return out


def simulation_config(args):
    settings = {}
    env_seed = _seed(argparse.Namespace(seed=None))
    if env_seed is not None:
        settings["seed"] = env_seed
    if args.config:
        settings.update(read_config(args.config))
    flag_map = {
        "n": args.n, "p_values": args.p, "k_values": args.k, "tau_values": args.tau,
        "covariate_matrices": args.covariate_matrices, "replications": args.replications,
        "methods": args.methods, "seed": args.seed, "time_limit": args.time_limit,
    }
    for key, val in flag_map.items():
        if val is not None:
            settings[key] = CONFIG_KEYS[key](val) if isinstance(val, str) else val
    base = SimulationConfig() if args.full else SimulationConfig.desk()
    names = {f.name for f in fields(SimulationConfig)}
    merged = {f: getattr(base, f) for f in names}
    merged.update(settings)
    try:
        return SimulationConfig(**merged)
    except ValueError as exc:
        raise CliError(f"simulate: {exc}", EXIT_USAGE) from None


def results_csv(records, timing=False):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_HEADER)
    for r in records:
        row = [r.method.replace("_", "-"), r.cov_index, r.k, fmt(r.tau), r.p, r.replication,
               fmt(r.d_eff), fmt(r.var_first), fmt(r.var_last),
               fmt(r.wall_time if timing else 0.0), fmt(r.hadamard_upper),
               fmt(r.variance_floor)]
        if r.error:
            row.append(f"error={r.error}")
        writer.writerow(row)
    return buf.getvalue()


def summary_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    stat_keys = list(rows[0].stats)
    writer.writerow(["method", "cov_index", "k", "tau", "p", "count"] + stat_keys)
    for r in rows:
        writer.writerow([r.method.replace("_", "-"), r.cov_index, r.k, fmt(r.tau), r.p,
                         r.count] + [fmt(r.stats[s]) for s in stat_keys])
    return buf.getvalue()


def cmd_simulate(args):
    config = simulation_config(args)
    if args.jobs < 1:
        raise CliError("--jobs must be >= 1", EXIT_USAGE)
    records = run_study(config, jobs=args.jobs)
    method_rows = [r for r in records if r.method != "bound"]
    _write_text(args.out, results_csv(method_rows, timing=args.timing))
    if args.summary:
        _write_text(args.summary, summary_csv(summarize(records)))
    failed = sum(r.error is not None for r in method_rows)
    print(f"rows={len(method_rows)} failed={failed} out={args.out}")
    return EXIT_PARTIAL if failed else 0


def cmd_bounds(args):
    if args.n < 2 or args.k < 1:
        raise CliError("need --n >= 2 and --k >= 1", EXIT_USAGE)
    if args.tau < 0:
        raise CliError("--tau must be >= 0", EXIT_USAGE)
    sigma = _sigmas(args.sigma, None)
    if len(sigma) != 1:
        raise CliError("bounds assume equal sigmas; pass a single --sigma", EXIT_USAGE)
    sigma_sq = sigma[0] ** 2
    bench = closed_form_benchmarks(args.n, args.k, args.tau**2 / sigma_sq, sigma_sq)
    for f in fields(bench):
        print(f"{f.name}={fmt(getattr(bench, f.name))}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="codesign", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def noise_flags(p, sigma_help):
        p.add_argument("--tau", type=float, required=True, help="random-effect standard deviation")
        p.add_argument("--sigma", default="1", help=sigma_help)

    def cov_flags(p):
        p.add_argument("--covariates", required=True, help="N x p CSV, no header")
        p.add_argument("--add-intercept", action="store_true",
                       help="prepend an all-ones column if the first column is not one")

    d = sub.add_parser("design", help="build an allocation")
    cov_flags(d)
    d.add_argument("--experiments", type=int, required=True)
    noise_flags(d, "error standard deviation: one value or a comma list of K")
    d.add_argument("--method", choices=CLI_METHODS, required=True)
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--time-limit", type=float, default=50.0, help="seconds per SDP or subproblem")
    d.add_argument("--rounding-draws", type=int, default=1,
                   help="greedy-sdp: keep the best of this many roundings")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_design)

    e = sub.add_parser("evaluate", help="score an allocation")
    cov_flags(e)
    e.add_argument("--alloc", required=True, help="allocation CSV with header x1,...,xK")
    noise_flags(e, "error standard deviation: one value or a comma list of K")
    e.add_argument("--oracle", action="store_true", help="cross-check against the dense GLS path")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", help="run the simulation study")
    s.add_argument("--config", help="key=value file mirroring the study settings")
    s.add_argument("--n", type=int)
    s.add_argument("--p", help="comma list of covariate counts")
    s.add_argument("--k", help="comma list of experiment counts")
    s.add_argument("--tau", help="comma list of random-effect standard deviations")
    s.add_argument("--covariate-matrices", type=int)
    s.add_argument("--replications", type=int)
    s.add_argument("--methods", help="comma list from " + ",".join(CLI_METHODS))
    s.add_argument("--seed", type=int)
    s.add_argument("--time-limit", type=float)
    s.add_argument("--full", action="store_true",
                   help="full grid (5 covariate matrices x 100 replications)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--timing", action="store_true",
                   help="record wall times (output is then not byte-reproducible)")
    s.add_argument("--summary", help="also write a per-method summary CSV here")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bounds", help="closed-form benchmarks for balanced designs")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    noise_flags(b, "error standard deviation (single value)")
    b.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"codesign {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"codesign {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
