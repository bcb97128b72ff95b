"""metaq command line: ``metaq test`` and ``metaq simulate``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Reports are fully computed before anything is printed, so a failing run
writes nothing to stdout.
"""
import argparse
import json
import logging
import math
import sys
import time

from . import __version__, pipeline, qmoments, simlab
from ._accel import default_backend
from .datasets import parse_csv
from .errors import DataError, MetaQError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SCHEMA_VERSION = 1

log = logging.getLogger("metaq")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _seed(text):
    try:
        s = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= s < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return s


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def build_parser():
    p = _Parser(prog="metaq", description="Corrected homogeneity tests for meta-analyses "
                "of standardized mean differences.")
    p.add_argument("--version", action="version", version=f"metaq {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="run the homogeneity test on a study CSV")
    t.add_argument("csv", help="study summary file (study,n_t,mean_t,sd_t,n_c,mean_c,sd_c)")
    t.add_argument("--estimator", choices=pipeline.ESTIMATORS, default="w",
                   help="combined effect at which the null moments are evaluated")
    t.add_argument("--eq-form", choices=qmoments.EQ_FORMS, default="legacy")
    t.add_argument("--bootstrap", type=_positive_int, metavar="REPS",
                   help="add a parametric bootstrap p-value from REPS simulated Q values")
    t.add_argument("--seed", type=_seed, default=0, help="bootstrap seed (default 0)")
    t.add_argument("--threads", type=_positive_int)
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="Monte Carlo levels and moments of Q")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--studies", type=_positive_int, metavar="I",
                   help="I studies of equal total size --n")
    g.add_argument("--sizes", type=_int_list, metavar="N1,N2,...",
                   help="total size of each study")
    s.add_argument("--n", type=_positive_int, metavar="N", help="study size with --studies (default 40)")
    s.add_argument("--q", type=float, default=0.5, help="control-arm fraction (default 0.5)")
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--tau2", type=float, default=0.0, help="between-study variance of delta")
    s.add_argument("--reps", type=_positive_int, default=100_000)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--levels", type=_float_list, default=[0.05, 0.10])
    s.add_argument("--estimator", choices=pipeline.ESTIMATORS, default="w")
    s.add_argument("--eq-form", choices=qmoments.EQ_FORMS, default="legacy")
    s.add_argument("--sampler", choices=simlab.SAMPLERS, default="auto")
    s.add_argument("--delta-known", action="store_true",
                   help="also report the gamma test with moments at the true delta")
    s.add_argument("--backend", choices=("numba", "numpy"))
    s.add_argument("--threads", type=_positive_int,
                   help=f"worker threads (default: ${simlab.THREADS_ENV} or CPU count)")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_simulate)
    return p


# -- JSON helpers ---------------------------------------------------------------------

def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def report_to_dict(report):
    per = [{"study": r.study_id, "n_total": r.n_total, "q": r.q, "g": r.g, "j": r.j,
            "a": r.a, "b": r.b, "weight": r.weight, "pooled_sd": r.pooled_sd}
           for r in report.per_study]
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": "test",
        "n_studies": report.n_studies,
        "estimator": report.estimator,
        "eq_form": report.eq_form,
        "q_stat": _num(report.q_stat),
        "big_w": _num(report.big_w),
        "g_combined": _num(report.g_combined),
        "eq_corrected": _num(report.eq_corrected),
        "eq2_corrected": _num(report.eq2_corrected),
        "gamma_shape": _num(report.gamma_shape),
        "gamma_scale": _num(report.gamma_scale),
        "p_chisq_classic": _num(report.p_chisq_classic),
        "p_chisq_fdf": _num(report.p_chisq_fdf),
        "p_gamma": _num(report.p_gamma),
        "p_bootstrap": _num(report.p_bootstrap),
        "bootstrap_reps": report.bootstrap_reps,
        "bootstrap_seed": report.bootstrap_seed,
        "degraded": report.degraded,
        "moments_unavailable": report.moments_unavailable,
        "gamma_degenerate": report.gamma_degenerate,
        "warnings": list(report.warnings),
        "per_study": per,
    }


def sim_to_dict(config, result, threads):
    levels = [{"method": m, "alpha": a, "rate": rate, "mc_se": result.mc_se_level[(m, a)]}
              for (m, a), rate in sorted(result.achieved_levels.items(),
                                         key=lambda kv: (simlab.METHODS.index(kv[0][0]), kv[0][1]))]
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": "simulate",
        "config": {
            "study_sizes": [list(x) for x in config.study_sizes],
            "delta": config.delta, "tau2": config.tau2, "reps": config.reps,
            "seed": config.seed, "alpha_levels": list(config.alpha_levels),
            "estimator": config.estimator, "sampler": config.resolved_sampler,
            "eq_form": config.eq_form, "delta_known": config.delta_known,
        },
        "backend": result.backend,
        "threads": threads,
        "levels": levels,
        "q_mean": _num(result.q_mean),
        "q2_mean": _num(result.q2_mean),
        "q_var": _num(result.q_var),
        "formula_eq": _num(result.formula_eq),
        "formula_eq2": _num(result.formula_eq2),
        "formula_var": _num(result.formula_var),
        "n_degenerate": dict(result.n_degenerate),
    }


# -- text output --------------------------------------------------------------------

def _fmt(x, spec=".4f"):
    return "n/a" if x is None or (isinstance(x, float) and not math.isfinite(x)) else format(x, spec)


def format_report(report, path):
    lines = [f"{path}: {report.n_studies} studies",
             f"  Q                  {report.q_stat:.4f}",
             f"  W                  {report.big_w:.4f}",
             f"  combined effect    {report.g_combined:.5f}  (estimator {report.estimator})",
             f"  E[Q] corrected     {_fmt(report.eq_corrected)}  ({report.eq_form} form)",
             f"  E[Q^2] corrected   {_fmt(report.eq2_corrected)}",
             f"  gamma shape/scale  {_fmt(report.gamma_shape)} / {_fmt(report.gamma_scale)}",
             "",
             f"  p  chi-square (I-1 df)       {_fmt(report.p_chisq_classic)}",
             f"  p  chi-square (df = E[Q])    {_fmt(report.p_chisq_fdf)}",
             f"  p  gamma                     {_fmt(report.p_gamma)}"]
    if report.p_bootstrap is not None:
        lines.append(f"  p  bootstrap                 {_fmt(report.p_bootstrap)}"
                     f"  (reps {report.bootstrap_reps}, seed {report.bootstrap_seed})")
    if report.moments_unavailable:
        lines.append("  DEGRADED: corrected moments unavailable, only the classic test applies")
    if report.gamma_degenerate:
        lines.append("  DEGRADED: gamma fit impossible with these moments")
    for w in report.warnings:
        lines.append(f"  warning: {w}")
    return "\n".join(lines)


def format_sim(config, result, elapsed):
    sizes = ",".join(f"{nt}+{nc}" for nt, nc in config.study_sizes)
    lines = [f"studies {sizes}  delta {config.delta:g}  tau2 {config.tau2:g}",
             f"reps {config.reps}  seed {config.seed}  sampler {config.resolved_sampler}"
             f"  backend {result.backend}  ({elapsed:.1f}s)",
             "",
             "method       " + "".join(f"  alpha={a:<8g}" for a in config.alpha_levels)]
    for m in simlab.METHODS:
        if (m, config.alpha_levels[0]) not in result.achieved_levels:
            continue
        cells = "".join(f"  {result.level(m, a):.4f}({result.mc_se_level[(m, a)]:.4f})"
                        for a in config.alpha_levels)
        lines.append(f"{m:<13}{cells}")
    lines += ["",
              f"mean Q       {result.q_mean:.4f}   formula {result.formula_eq:.4f}",
              f"mean Q^2     {result.q2_mean:.4f}   formula {result.formula_eq2:.4f}",
              f"var Q        {result.q_var:.4f}   formula {result.formula_var:.4f}"]
    bad = {m: n for m, n in result.n_degenerate.items() if n}
    if bad:
        lines.append(f"degenerate replications (no p-value): {bad}")
    return "\n".join(lines)


# -- commands -----------------------------------------------------------------------

def cmd_test(args):
    data = parse_csv(args.csv)
    if len(data) < 2:
        raise DataError(f"{args.csv}: the homogeneity test needs at least 2 studies")
    report = pipeline.run_homogeneity_test(data.studies, args.estimator, args.eq_form)
    if args.bootstrap:
        log.info("bootstrap with %d replications, seed %d", args.bootstrap, args.seed)
        report.p_bootstrap = simlab.bootstrap_p_value(data.studies, args.bootstrap, args.seed,
                                                      threads=args.threads)
        report.bootstrap_reps = args.bootstrap
        report.bootstrap_seed = args.seed
    if args.json:
        out = json.dumps(report_to_dict(report), indent=2)
    else:
        out = format_report(report, args.csv)
    print(out)
    return EXIT_OK


def sim_config_from_args(args):
    if not 0 < args.q < 1:
        raise UsageError("--q must lie strictly between 0 and 1")
    if args.sizes is not None:
        if args.n is not None:
            raise UsageError("--n only applies with --studies")
        totals = args.sizes
    else:
        totals = [args.n or 40] * args.studies
    sizes = []
    for n in totals:
        nt, nc = simlab.split_size(n, args.q)
        if nt < 2 or nc < 2:
            raise UsageError(f"study size {n} with q={args.q} leaves an arm below 2 subjects")
        sizes.append((nt, nc))
    if not args.levels:
        raise UsageError("--levels needs at least one value")
    try:
        return simlab.SimConfig(sizes, delta=args.delta, tau2=args.tau2, reps=args.reps,
                                seed=args.seed, alpha_levels=args.levels,
                                estimator=args.estimator, delta_known=args.delta_known,
                                sampler=args.sampler, eq_form=args.eq_form)
    except DataError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args):
    config = sim_config_from_args(args)
    threads = args.threads or simlab.default_threads()
    t0 = time.perf_counter()
    result = simlab.simulate(config, threads=threads, backend=args.backend or default_backend())
    elapsed = time.perf_counter() - t0
    if args.json:
        out = json.dumps(sim_to_dict(config, result, threads), indent=2)
    else:
        out = format_sim(config, result, elapsed)
    print(out)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="metaq: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"metaq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"metaq: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError) as exc:
        print(f"metaq: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MetaQError as exc:
        print(f"metaq: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
