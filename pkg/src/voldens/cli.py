"""Command-line front end.

Subcommands::

    voldens simulate   --model log-ar1 --a 0.6 --tau 0.8 --mu 0 --n 1000 --seed 7
    voldens estimate   --input returns.csv --h-rule pi-log-n --grid-count 400
    voldens experiment --config mise.cfg
    voldens selftest

Exit codes: 0 success, 1 usage error, 2 data error, 3 self-test failure,
130 interrupted.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from . import deconv, pipeline
from .config import ConfigError, load_config
from .kernels import wand_kernel
from .models import ModelSpec, log_square, simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SELFTEST, EXIT_INTERRUPT = 0, 1, 2, 3, 130

# default grid points per axis when --grid-count is not given
DEFAULT_GRID_COUNT = {1: 400, 2: 120, 3: 30}

log = logging.getLogger("voldens")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def fmt(v: float) -> str:
    """17 significant digits: reading the text back gives the same double."""
    return format(float(v), ".17g")


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voldens", description="Deconvolution density estimation of log-volatility.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="simulate a return path to CSV (t,x,sigma_sq)")
    sim.add_argument("--model", required=True, choices=["garch", "log-ar1"])
    sim.add_argument("--alpha0", type=float, default=0.1, help="garch constant alpha_0 (default 0.1)")
    sim.add_argument("--alpha", type=_float_list, help="garch alpha_1..alpha_p, comma separated")
    sim.add_argument("--beta", type=_float_list, help="garch beta_1..beta_q, comma separated")
    sim.add_argument("--mu", type=float, help="log-ar1 stationary mean of log sigma^2")
    sim.add_argument("--a", type=float, help="log-ar1 autoregression coefficient")
    sim.add_argument("--tau", type=float, help="log-ar1 innovation standard deviation")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--burn-in", type=int, help="discarded steps (garch 1000, log-ar1 0)")
    sim.add_argument("--output", "-o", help="output CSV (default stdout)")

    est = sub.add_parser("estimate", help="estimate the density of log sigma^2 from returns")
    est.add_argument("--input", "-i", required=True, help="CSV with a column named x")
    bw = est.add_mutually_exclusive_group()
    bw.add_argument("--h", type=float, help="fixed bandwidth in [0.05, 2]")
    bw.add_argument("--h-rule", choices=["pi-log-n"], help="bandwidth rule (default pi-log-n)")
    est.add_argument("--grid-min", type=float)
    est.add_argument("--grid-max", type=float)
    est.add_argument("--grid-count", type=int)
    est.add_argument("--p", type=int, default=1, choices=[1, 2, 3])
    est.add_argument("--scale", default="log-sigma-sq", choices=["log-sigma-sq", "sigma-sq", "sigma"])
    est.add_argument("--clip-negatives", action="store_true",
                     help="zero negative values and renormalize to unit mass")
    est.add_argument("--output", "-o", help="output CSV (default stdout)")

    exp = sub.add_parser("experiment", help="run a Monte Carlo experiment from a config file")
    exp.add_argument("--config", "-c", required=True)
    exp.add_argument("--output", "-o", help="override the config's output path")
    exp.add_argument("--summary", help="summary file (default <output>.summary.txt)")
    exp.add_argument("--workers", type=int, help="override the config's worker count")

    st = sub.add_parser("selftest", help="run the numerical self-tests")
    st.add_argument("--json", action="store_true", help="print the report as JSON")
    return parser


@contextmanager
def _open_out(path):
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None
    with fh:
        yield fh


# ---------------------------------------------------------------------------
# simulate

def model_from_args(args) -> ModelSpec:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    if args.model == "garch":
        if args.alpha is None or args.beta is None:
            raise UsageError("--model garch needs --alpha and --beta")
        burn = 1000 if args.burn_in is None else args.burn_in
        try:
            return ModelSpec("garch", garch_alpha=(args.alpha0, *args.alpha),
                             garch_beta=args.beta, seed=args.seed, burn_in=burn)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    missing = [f"--{name}" for name in ("mu", "a", "tau") if getattr(args, name) is None]
    if missing:
        raise UsageError("--model log-ar1 needs " + ", ".join(missing))
    burn = 0 if args.burn_in is None else args.burn_in
    try:
        return ModelSpec("log_ar1", ar1_mean=args.mu, ar1_coeff=args.a, ar1_innov_sd=args.tau,
                         seed=args.seed, burn_in=burn)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def write_simulation(fh, out) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "x", "sigma_sq"])
    for t, (x, s2) in enumerate(zip(out.x, out.sigma_sq)):
        w.writerow([t, fmt(x), fmt(s2)])


def cmd_simulate(args) -> int:
    spec = model_from_args(args)
    out = simulate(spec, args.n)
    with _open_out(args.output) as fh:
        write_simulation(fh, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate

def read_returns(path) -> np.ndarray:
    """Column ``x`` of a CSV file as float64."""
    try:
        fh = sys.stdin if path == "-" else open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "x" not in [f.strip() for f in reader.fieldnames]:
            raise DataError(f"{path}: no column named 'x' in header")
        key = next(f for f in reader.fieldnames if f.strip() == "x")
        values = []
        for lineno, row in enumerate(reader, start=2):
            cell = row.get(key)
            try:
                values.append(float(cell))
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: bad value for x: {cell!r}") from None
    x = np.array(values, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path}: non-finite returns")
    return x


def default_axis(data: np.ndarray, h: float, count: int, lo=None, hi=None) -> np.ndarray:
    """Grid in log sigma^2 units centred on the de-biased sample mean.

    ``mean(log X^2) + gamma + log 2`` estimates the mean of log sigma^2; the
    spread is the sample variance minus the log-chi2 variance pi^2 / 2.
    """
    centre = float(np.mean(data)) + pipeline.LOG_CHI2_MEAN_SHIFT
    sd = float(np.sqrt(max(np.var(data) - np.pi ** 2 / 2, 0.25)))
    half = 4.0 * sd + 3.0 * h
    lo = centre - half if lo is None else lo
    hi = centre + half if hi is None else hi
    if not hi > lo:
        raise UsageError("--grid-max must exceed --grid-min")
    return np.linspace(lo, hi, count)


def estimate_from_returns(x: np.ndarray, *, h=None, p: int = 1, grid_min=None, grid_max=None,
                          grid_count=None, scale: str = "log-sigma-sq", clip: bool = False):
    """The whole ``estimate`` pipeline on an in-memory return series.

    Returns ``(estimate, h, dropped)``.
    """
    ls = log_square(x)
    data = ls.values
    if data.size < max(p, 2):
        raise DataError(f"need at least {max(p, 2)} usable observations, got {data.size}")
    if h is None:
        h = deconv.default_bandwidth(data.size)
    h = float(h)
    if not deconv.H_FLOOR <= h <= deconv.H_MAX:
        raise DataError(f"bandwidth h={h:g} outside [{deconv.H_FLOOR}, {deconv.H_MAX}]")
    count = grid_count or DEFAULT_GRID_COUNT[p]
    if count < 2:
        raise UsageError("--grid-count must be at least 2")
    axis = default_axis(data, h, count, grid_min, grid_max)
    est = deconv.estimate_multivariate(data, p, wand_kernel(), h, (axis,) * p)
    if scale != "log-sigma-sq":
        if p != 1:
            raise UsageError("--scale is only available with --p 1")
        est = deconv.transform_scale(est, scale.replace("-", "_"))
    if clip:
        est = deconv.clip_negatives(est)
    return est, h, ls.dropped


def write_estimate(fh, est) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if est.p == 1:
        w.writerow(["x", "fhat"])
        for x, f in zip(est.axes[0], est.values):
            w.writerow([fmt(x), fmt(f)])
    elif est.p == 2:
        w.writerow(["x", "y", "fhat"])
        ax, ay = est.axes
        for i, x in enumerate(ax):
            for j, y in enumerate(ay):
                w.writerow([fmt(x), fmt(y), fmt(est.values[i, j])])
    else:
        w.writerow(["index", "x", "y", "z", "fhat"])
        for idx, (i, j, k) in enumerate(np.ndindex(est.values.shape)):
            w.writerow([idx, fmt(est.axes[0][i]), fmt(est.axes[1][j]), fmt(est.axes[2][k]),
                        fmt(est.values[i, j, k])])


def cmd_estimate(args) -> int:
    x = read_returns(args.input)
    est, h, dropped = estimate_from_returns(
        x, h=args.h, p=args.p, grid_min=args.grid_min, grid_max=args.grid_max,
        grid_count=args.grid_count, scale=args.scale, clip=args.clip_negatives,
    )
    print(f"h = {h:.6g}", file=sys.stderr)
    print(f"dropped observations = {dropped}", file=sys.stderr)
    with _open_out(args.output) as fh:
        write_estimate(fh, est)
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment / selftest

def cmd_experiment(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        raise DataError(f"cannot read {args.config}: {exc.strerror}") from None
    except ConfigError as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    overrides = {}
    if args.output:
        overrides["output_path"] = args.output
    if args.workers:
        overrides["workers"] = args.workers
    if overrides:
        cfg = replace(cfg, **overrides)

    if cfg.kind == "mise":
        result = pipeline.run_mise_experiment(cfg)
        payload = {"kind": "mise", "columns": list(pipeline.MISE_COLUMNS),
                   "per_n": [result.summary[n] for n in cfg.sample_sizes]}
        ok = True
    elif cfg.kind == "bias":
        payload = pipeline.run_bias_check(cfg)
        payload["kind"] = "bias"
        ok = payload["passed"]
    else:
        single = pipeline.run_conditional_expectation_check(cfg.model, cfg.path_length, cfg.h, cfg.paths)
        scaling = pipeline.run_condexp_scaling(cfg.model, cfg.path_length, cfg.h, cfg.m_values)
        payload = {
            "kind": "condexp",
            "single": {k: single[k] for k in ("M", "n", "h", "deviation", "se_max",
                                              "deviation_over_se", "passed")},
            "scaling": {k: scaling[k] for k in ("m_values", "deviations", "scaled", "centre",
                                                "passed")},
        }
        ok = single["passed"] and scaling["passed"]

    summary = args.summary or (f"{cfg.output_path}.summary.txt" if cfg.output_path else None)
    if summary:
        pipeline.write_summary(summary, cfg, payload)
    else:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, default=pipeline.json_default))
        sys.stdout.write("\n")
    print(f"{cfg.kind}: {'ok' if ok else 'checks failed'}", file=sys.stderr)
    return EXIT_OK


def cmd_selftest(args) -> int:
    checks = pipeline.run_full_selftest()
    if args.json:
        report = [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks]
        print(json.dumps(report, indent=2, default=pipeline.json_default))
    else:
        for c in checks:
            shown = {k: v for k, v in c.detail.items() if not isinstance(v, (list, tuple))}
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {shown}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_SELFTEST


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"voldens: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"voldens {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, deconv.BandwidthError) as exc:
        print(f"voldens {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        print(f"voldens {args.command}: interrupted", file=sys.stderr)
        return EXIT_INTERRUPT


if __name__ == "__main__":
    sys.exit(main())
