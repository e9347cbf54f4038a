"""Command-line entry point ``cran-mm``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, SystemConfig, load_config
from .fronthaul import Scheme, build_combiner
from .harness import SWEEP_ALIASES, SweepSpec, emit_convergence_trace, emit_results, run_sweep
from .mm import mm_solve
from .oracle import grid_search_small, random_scalar_instance, scalar_closed_form
from .scenario import generate_realization, trial_rng

EXIT_OK, EXIT_ERROR, EXIT_INVALID_CELL = 0, 1, 2


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _scheme_list(text):
    return [Scheme.parse(s.strip()) for s in text.split(",") if s.strip()]


def _base_config(args):
    cfg = load_config(args.config) if args.config else SystemConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_updates(seed=args.seed)
    return cfg.validate()


def cmd_run(args):
    spec = SweepSpec(SWEEP_ALIASES[args.sweep], tuple(args.values), tuple(args.schemes),
                     args.trials, _base_config(args)).validate()
    result = run_sweep(spec, workers=args.workers)
    csv_path, _ = emit_results(result, args.out, config_path=args.config)
    for scheme in spec.schemes:
        for cell in result.series(scheme):
            print(f"{scheme.value} {spec.swept_parameter}={cell.value:g} "
                  f"mean={cell.mean:.4f} stderr={cell.stderr:.4f} n={cell.trials}")
    print(f"wrote {csv_path}")
    return EXIT_INVALID_CELL if result.invalid_cells else EXIT_OK


def cmd_converge(args):
    cfg = _base_config(args)
    channels = generate_realization(cfg, trial_rng(cfg.seed, args.trial))
    combiner = build_combiner(channels.B, channels.G, args.scheme)
    result = mm_solve(channels, combiner, cfg)
    out = Path(args.out)
    trace_path = emit_convergence_trace(result, out / "convergence.csv")
    result.to_json(out / "solve_result.json")
    print(f"{result.trace.status} after {result.trace.iterations} iterations, "
          f"sum-rate {result.sum_rate:.4f}; wrote {trace_path}")
    return EXIT_OK


def cmd_oracle(args):
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for i in range(args.instances):
        inst = random_scalar_instance(rng)
        ref = scalar_closed_form(inst).rate
        cfg, channels = inst.config(), inst.channels()
        combiner = build_combiner(channels.B, channels.G, Scheme.MR)
        if args.check == "scalar":
            got = mm_solve(channels, combiner, cfg).sum_rate
        else:
            got = grid_search_small(channels, combiner, cfg, args.density).sum_rate
        err = abs(got - ref) / max(abs(ref), 1e-12)
        worst = max(worst, err)
        print(f"{i:3d} closed_form={ref:.6f} {args.check}={got:.6f} rel_err={err:.2e}")
    ok = worst <= args.tol
    print(f"{'PASS' if ok else 'FAIL'} worst relative error {worst:.2e} (tol {args.tol:g})")
    return EXIT_OK if ok else EXIT_ERROR


def build_parser():
    p = argparse.ArgumentParser(prog="cran-mm", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte-Carlo sweep")
    run.add_argument("--config", help="JSON or YAML SystemConfig file")
    run.add_argument("--sweep", choices=sorted(SWEEP_ALIASES), required=True)
    run.add_argument("--values", type=_float_list, required=True,
                     help="comma-separated values (dBm for powers)")
    run.add_argument("--schemes", type=_scheme_list, default=[Scheme.MR, Scheme.ZF])
    run.add_argument("--trials", type=int, default=20)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)

    conv = sub.add_parser("converge", help="single-realization convergence trace")
    conv.add_argument("--config")
    conv.add_argument("--scheme", type=Scheme.parse, default=Scheme.ZF)
    conv.add_argument("--seed", type=int)
    conv.add_argument("--trial", type=int, default=0)
    conv.add_argument("--out", required=True)
    conv.set_defaults(func=cmd_converge)

    orc = sub.add_parser("oracle", help="compare against the scalar closed form")
    orc.add_argument("--check", choices=("scalar", "grid"), required=True)
    orc.add_argument("--instances", type=int, default=10)
    orc.add_argument("--density", type=int, default=200)
    orc.add_argument("--tol", type=float, default=0.01)
    orc.add_argument("--seed", type=int, default=0)
    orc.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
