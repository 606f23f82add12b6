"""
Command line: ``netrack {validate,run,sweep,oracle} --config CFG [...]``.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys

from .config import ConfigError, load_config, validate
from .experiment import (EXIT_BOUND_VIOLATION, EXIT_ERROR, EXIT_OK, SWEEP_AXES, oracle_check,
                         run_experiment, sweep, validate_experiment, write_json)


def _parser():
    ap = argparse.ArgumentParser(prog="netrack", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML or JSON experiment config")
        p.add_argument("--out", help="output directory (overrides config.output)")
        p.add_argument("--replicas", type=int, help="override replica count")
        p.add_argument("--seed", type=int, help="override master seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for replicas")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    common(sub.add_parser("validate", help="check config, mixing matrix and identifiability"))
    common(sub.add_parser("run", help="run the Monte Carlo experiment"))
    sp = common(sub.add_parser("sweep", help="run one experiment per axis value"))
    sp.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sp.add_argument("--values", required=True,
                    help="comma-separated, strictly increasing values")
    op = common(sub.add_parser("oracle", help="compare a replica with the error recursion"))
    op.add_argument("--replica", type=int, default=0)
    return ap


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if args.replicas is not None:
        changes["replicas"] = args.replicas
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output"] = args.out
    return validate(dataclasses.replace(cfg, **changes))


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        if args.command == "validate":
            report = validate_experiment(cfg)
            if cfg.output:
                os.makedirs(cfg.output, exist_ok=True)
                write_json(os.path.join(cfg.output, "validation.json"), report)
            print(json.dumps(report, indent=2, sort_keys=True))
            return EXIT_OK if report["valid"] else EXIT_ERROR
        if args.command == "run":
            m = run_experiment(cfg, threads=args.threads)
            th = m["bounds"]["theorem1"]
            print(f"Reg_T = {m['aggregate']['reg_T_mean']:.6g} "
                  f"+/- {m['aggregate']['reg_T_stderr']:.2g}  "
                  f"bound = {th['total'] if th else float('nan'):.6g}  "
                  f"alpha = {m['alpha']:.6g}  ||Q|| = {m['q_norm']:.6g}")
            if m["bound_violation"]:
                print("bound check FAILED beyond sampling error", file=sys.stderr)
                return EXIT_BOUND_VIOLATION
            return EXIT_OK
        if args.command == "sweep":
            values = [float(v) for v in args.values.split(",")]
            if args.axis == "T":
                values = [int(v) for v in values]
            rep = sweep(cfg, args.axis, values, threads=args.threads)
            for p in rep["points"]:
                print(f"{args.axis}={p['value']}: {p['status']} "
                      f"Reg_T={p.get('reg_T_mean')} bound={p.get('bound_total')}")
            print(f"log-log slope: Reg_T {rep['slope_reg_T']}, bound {rep['slope_bound']}")
            return EXIT_OK
        rep = oracle_check(cfg, args.replica)
        print(json.dumps(rep, indent=2, sort_keys=True))
        return EXIT_OK if rep["pass"] else EXIT_ERROR
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
