"""Command-line entry point.

Exit status: 0 on success, 2 for configuration/usage errors, 1 for runtime
failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .corr_stats import z_statistics
from .exceptions import ConfigError, DegenerateInputError
from .fab_engine import (
    assign_groups,
    default_bootstrap_size,
    run_fab_bootstrap,
    run_fab_external,
    run_umpu,
)
from .fab_engine.runners import _align_external
from .io import ingest_csv, write_metadata, write_results, write_table
from .linking import LinkingDesign
from .multiple_testing import reject_bh, reject_fixed
from .sim_harness import DgpConfig, PipelineSettings, fdr_calibration, run_grid

logger = logging.getLogger("fabcorr")


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", default="ones",
                   help="linking design: ones | linear | linear-intercept | poly:D")
    p.add_argument("--ridge", type=float, default=0.0, help="ridge penalty on eta")
    p.add_argument("--group-size", type=int, default=50)
    p.add_argument("--bootstrap-b", type=int, default=None, help="bootstrap resamples")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict-paper-scaling", action="store_true",
                   help="scale external statistics by 1/(n-3) of the test data")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--output", required=True)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fabcorr",
                                     description="FAB tests for correlation support recovery")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("test-external", "FAB tests borrowing from an external dataset"),
                            ("test-bootstrap", "FAB tests with bootstrap decorrelation"),
                            ("test-umpu", "classical two-sided tests only")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--input", required=True, help="CSV of the test dataset")
        p.add_argument("--external", help="CSV of the external dataset")
        p.add_argument("--fdr", type=float, default=None,
                       help="use Benjamini-Hochberg at this level instead of fixed alpha")
        if name == "test-bootstrap":
            p.add_argument("--ordering", choices=("external", "index", "internal"), default=None,
                           help="source of the group ranking (internal voids exact null "
                                "uniformity); default external if --external is given, else index")
        _common(p)

    for name in ("simulate", "fdr-calibrate"):
        p = sub.add_parser(name, help="simulation grid" if name == "simulate"
                           else "observed vs target FDR on synthetic data")
        p.add_argument("--n", type=int, nargs="+", default=[100])
        p.add_argument("--q", type=int, nargs="+", default=[50])
        p.add_argument("--n-ext", type=int, default=None)
        p.add_argument("--l", type=int, default=None, help="rows of the factor matrix U")
        p.add_argument("--mask-target", type=float, default=0.5)
        p.add_argument("--noise-sd", type=float, default=0.5)
        p.add_argument("--replicates", type=int, default=10)
        p.add_argument("--mode", nargs="+" if name == "simulate" else None,
                       choices=("external", "bootstrap"),
                       default=["external"] if name == "simulate" else "external")
        if name == "fdr-calibrate":
            p.add_argument("--fdr", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.2, 0.3])
        _common(p)
    return parser


def _design(args) -> LinkingDesign:
    return LinkingDesign.parse(args.design, ridge_lambda=args.ridge)


def _decide(p_fab, args):
    if args.fdr is not None:
        return reject_bh(p_fab, args.fdr)
    return reject_fixed(p_fab, args.alpha)


def _validate(args) -> None:
    if args.group_size < 1:
        raise UsageError("--group-size must be at least 1")
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must be in (0, 1)")
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    if args.command == "test-external" and not args.external:
        raise UsageError("test-external requires --external")
    if args.command == "test-bootstrap" and args.bootstrap_b is None:
        raise UsageError("test-bootstrap requires --bootstrap-b")
    if args.command == "test-bootstrap" and args.ordering == "external" and not args.external:
        raise UsageError("--ordering external requires --external")


def _run_tests(args, meta: dict) -> None:
    test, report = ingest_csv(args.input)
    meta["ingest"] = {"input": report.to_dict()}
    design = _design(args)
    ext = None
    if args.external:
        ext, ext_report = ingest_csv(args.external)
        meta["ingest"]["external"] = ext_report.to_dict()
        ext = _align_external(test, ext)
    group_size = min(args.group_size, test.q * (test.q - 1) // 2)

    if args.command == "test-umpu":
        results = run_umpu(test)
    elif args.command == "test-external":
        z_ext = z_statistics(ext).z_hat
        groups = assign_groups(z_ext, group_size)
        meta["groups"] = groups.m
        results = run_fab_external(test, ext, design, groups,
                                   strict_paper_scaling=args.strict_paper_scaling,
                                   n_jobs=args.threads)
    else:
        ordering = args.ordering or ("external" if ext is not None else "index")
        z_ext = z_statistics(ext).z_hat if ext is not None else None
        if ordering == "external":
            groups = assign_groups(z_ext, group_size)
        elif ordering == "index":
            p = test.q * (test.q - 1) // 2
            groups = assign_groups(-np.arange(p, dtype=float), group_size)
        else:
            groups = assign_groups(z_statistics(test).z_hat, group_size, "internal_z")
        meta["groups"] = groups.m
        meta["ordering"] = ordering
        meta["default_bootstrap_b"] = default_bootstrap_size(groups)
        results = run_fab_bootstrap(test, design, groups, B=args.bootstrap_b, seed=args.seed,
                                    external_stats=z_ext,
                                    allow_internal_ordering=ordering == "internal",
                                    n_jobs=args.threads)
    decisions = _decide([r.p_fab for r in results], args)
    write_results(results, decisions, args.output)
    meta["decision"] = {"procedure": decisions.procedure, "level": decisions.level,
                        "threshold_used": decisions.threshold_used,
                        "rejected": int(decisions.rejected.sum()), "tests": len(results)}


def _dgp(args, n=None, q=None) -> DgpConfig:
    return DgpConfig(q=q or args.q[0], l=args.l, mask_target=args.mask_target,
                     n=n or args.n[0], n_ext=args.n_ext or n or args.n[0],
                     external_noise_sd=args.noise_sd, seed=args.seed)


def _run_simulate(args, meta: dict) -> None:
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    for n in args.n:
        for q in args.q:
            _dgp(args, n, q)  # validate every cell up front
    summaries = run_grid(args.mode, args.n, args.q, args.replicates, args.group_size,
                         args.alpha, args.seed, base=_dgp(args), design=_design(args),
                         B=args.bootstrap_b, n_ext=args.n_ext, n_jobs=args.threads)
    write_table([s.table_row() for s in summaries], args.output)
    meta["summaries"] = [s.to_dict() for s in summaries]


def _run_fdr(args, meta: dict) -> None:
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    settings = PipelineSettings(mode=args.mode, group_size=args.group_size,
                                design=_design(args), B=args.bootstrap_b,
                                strict_paper_scaling=args.strict_paper_scaling)
    curve = fdr_calibration(_dgp(args), args.fdr, args.replicates, settings,
                            n_jobs=args.threads)
    rows = [{"q_target": t, "observed_fdr": f, "observed_fdr_umpu": fu,
             "discoveries_fab": df, "discoveries_umpu": du}
            for t, f, fu, df, du in zip(curve.q_targets, curve.observed_fdr,
                                        curve.observed_fdr_umpu, curve.discoveries_fab,
                                        curve.discoveries_umpu)]
    write_table(rows, args.output)
    meta["curve"] = curve.to_dict()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on grammar errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    meta = {"version": __version__, "command": args.command, "config": vars(args).copy()}
    start = time.perf_counter()
    try:
        _validate(args)
        fdr = getattr(args, "fdr", None)
        if fdr is not None and args.command.startswith("test-") and not 0 < fdr < 1:
            raise UsageError("--fdr must be in (0, 1)")
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command.startswith("test-"):
                _run_tests(args, meta)
            elif args.command == "simulate":
                _run_simulate(args, meta)
            else:
                _run_fdr(args, meta)
        meta["warnings"] = [str(w.message) for w in caught]
        meta["seconds"] = time.perf_counter() - start
        write_metadata(meta, args.output)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"fabcorr: error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateInputError, OSError) as exc:
        print(f"fabcorr: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        logger.debug("run failed", exc_info=True)
        print(f"fabcorr: runtime error: {exc!r}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
