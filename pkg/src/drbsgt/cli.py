"""Command-line entry point: ``drbsgt {run,compare,validate,selftest}``."""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import algorithms as alg
from .blocks import embed_block, enumerate_block_error_moments, make_partition
from .errors import ConfigError, DRBSGTError
from .harness import ExperimentConfig, build_problem, compare_algorithms, load_config, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser():
    p = _Parser(prog="drbsgt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, multi=False):
        if multi:
            sp.add_argument("--config", action="append", required=True, help="config file (repeatable)")
        else:
            sp.add_argument("--config", required=True, help="YAML config file")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--paths", type=int, help="number of sample paths")
        sp.add_argument("--quiet", action="store_true")

    common(sub.add_parser("run", help="run one experiment"))
    cmp = sub.add_parser("compare", help="compare algorithms at equal block-evaluation budget")
    common(cmp, multi=True)
    cmp.add_argument("--budget", type=int, help="block-evaluation budget (default: from first config)")
    common(sub.add_parser("validate", help="print the stepsize-schedule report"))
    st = sub.add_parser("selftest", help="run the identity and enumeration checks")
    st.add_argument("--quiet", action="store_true")
    return p


def _load(path, args):
    return load_config(path, master_seed=args.seed, paths=args.paths)


def _say(args, *lines):
    if not args.quiet:
        for line in lines:
            print(line)


def cmd_run(args):
    cfg = _load(args.config, args)
    res = run_experiment(cfg, out_dir=args.out or cfg.out_dir)
    agg = res.aggregate
    lines = [f"rho_W = {res.rho:.10g}", f"paths: {len(res.paths)}, failed: {len(res.failures)}"]
    if len(agg["k"]):
        lines.append(
            f"final k = {int(agg['k'][-1])}: objective = {agg['objective'][-1]:.6g}, "
            f"err1 = {agg['err1'][-1]:.3e}, err2 = {agg['err2'][-1]:.3e}"
        )
    if cfg.monitors:
        lines.append(
            f"monitors: tracking {res.tracking_max:.2e}, mean dynamics {res.mean_dyn_max:.2e}, "
            f"recursion violations {len(res.violations)}"
        )
    lines.append(f"wall clock {res.wall_clock:.2f} s")
    _say(args, *lines)
    return EXIT_OK


def cmd_compare(args):
    cfgs = [_load(path, args) for path in args.config]
    budget = args.budget or cfgs[0].budget
    if budget is None:
        raise ConfigError("compare needs a block-evaluation budget (--budget or 'budget' key)", key="budget")
    table = compare_algorithms(cfgs, budget)
    text = table.to_csv()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.csv").write_text(text)
    _say(args, text.rstrip())
    return EXIT_OK


def cmd_validate(args):
    cfg = _load(args.config, args)
    problem = build_problem(cfg)
    report = alg.validate_schedule(
        alg.StepSchedule(cfg.gamma, cfg.Gamma), cfg.b, problem.oracle.mu, problem.oracle.lip, problem.W.rho
    )
    text = "\n".join(report.lines())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "schedule_report.txt").write_text(text + "\n")
    _say(args, text)
    return EXIT_OK


def selftest():
    """Exact block-error enumeration, the block embedding identity and a tracking smoke run."""
    results = []
    gen = np.random.default_rng(0)
    worst = 0.0
    for b in (1, 2, 3, 4, 6, 12):
        part = make_partition(12, b)
        for _ in range(20):
            g = gen.standard_normal(12)
            mean_e, mean_sq = enumerate_block_error_moments(g, part)
            worst = max(worst, np.abs(mean_e).max(), abs(mean_sq - (b - 1) * g @ g) / max(1.0, g @ g))
    results.append(("block-error enumeration", worst <= 1e-12, worst))

    worst = 0.0
    for b in (1, 3, 7):
        part = make_partition(7, b)
        x = gen.standard_normal(7)
        pieces = [embed_block(part, ell, x[part.slices[ell]]) for ell in range(b)]
        worst = max(worst, abs(sum(p @ p for p in pieces) - x @ x), np.abs(sum(pieces) - x).max())
    results.append(("block embedding identity", worst <= 1e-12, worst))

    cfg = ExperimentConfig(horizon=200, paths=2, noise=0.1)
    res = run_experiment(cfg)
    ok = res.tracking_max <= 1e-9 and res.mean_dyn_max <= 1e-12 and not res.failures and not res.violations
    results.append(("tracking smoke run", ok, res.tracking_max))
    return results


def cmd_selftest(args):
    results = selftest()
    for name, ok, value in results:
        _say(args, f"[{'PASS' if ok else 'FAIL'}] {name} (worst {value:.2e})")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_INVALID


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "validate": cmd_validate, "selftest": cmd_selftest}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DRBSGTError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
