"""Command-line entry point ``oucl``.

Exit codes: 0 success, 1 other library error, 2 config error, 3 gate
error, 4 numerical-accuracy error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config, parse_rational, validate_config
from .coupling import reflection_sweep
from .errors import ConfigError, OUCLError
from .experiments import gate_report, run_experiment
from .measures import svc_set

log = logging.getLogger("oucl")


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.samples is not None:
        cfg["sample_count"] = args.samples
    cfg = validate_config(cfg)
    man = run_experiment(cfg, args.out, args.workers)
    print(json.dumps({"output_dir": str(args.out or cfg.get("output_dir", "oucl_out")),
                      "files": man["files"], "passed": man["summary"].get("passed")}, indent=2))
    return 0


def _cmd_check_model(args):
    cfg = load_config(args.config)
    rep = gate_report(cfg)
    print(json.dumps(rep, indent=2, default=str))
    return 0 if rep["passed"] else 3


def _cmd_lemma23(args):
    rs = [parse_rational(r) for r in args.r]
    checked, violations = reflection_sweep(args.kmax, rs)
    print(json.dumps({"kmax": args.kmax, "r": [str(r) for r in rs], "checked": checked,
                      "violations": [list(v) for v in violations]}, indent=2))
    return 0 if not violations else 1


def _cmd_svc(args):
    try:
        removed = parse_rational(args.removed)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"invalid --removed value {args.removed!r}", "/removed") from exc
    if not 0 < removed < 1:
        raise ConfigError("--removed must lie in (0, 1)", "/removed")
    u = svc_set(args.level, removed)
    out = {"level": args.level, "removed": str(removed), "intervals": len(u), "length": str(u.length),
           "length_float": float(u.length)}
    if args.list:
        out["endpoints"] = [[str(a), str(b)] for a, b in u.intervals]
    print(json.dumps(out, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oucl", description="Coupling experiments for Levy-driven OU processes.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a JSON config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default: output_dir from the config)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--samples", type=int, help="override sample_count")
    run.add_argument("--workers", type=int, default=None, help="sampling threads; outputs do not depend on it")
    run.set_defaults(func=_cmd_run)

    chk = sub.add_parser("check-model", help="evaluate the gates required by the configured experiment")
    chk.add_argument("config")
    chk.set_defaults(func=_cmd_check_model)

    lem = sub.add_parser("lemma23", help="exact check of the reflection inequalities")
    lem.add_argument("--kmax", type=int, default=12)
    lem.add_argument("--r", nargs="+", default=["0", "3/10", "3/5"], help="lazy-step probabilities")
    lem.set_defaults(func=_cmd_lemma23)

    svc = sub.add_parser("svc", help="describe a finite-level Smith-Volterra-Cantor set")
    svc.add_argument("--level", type=int, required=True)
    svc.add_argument("--removed", default="1/4", help="total removed length, e.g. 0.25 or 1/4")
    svc.add_argument("--list", action="store_true", help="print the interval endpoints")
    svc.set_defaults(func=_cmd_svc)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OUCLError as exc:
        print(f"oucl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
