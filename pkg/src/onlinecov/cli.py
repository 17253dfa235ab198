"""Command-line entry point: ``onlinecov {init,run,audit,sweep-eta,trace}``.

Exit codes: 0 success, 1 config error, 2 data error, 3 a bound check failed
under ``--strict``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .auditors import THEOREMS
from .exceptions import ConfigError, DataError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("onlinecov")


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors; argparse's default code 2 is reserved for data
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="override every seed in the config")
    p.add_argument("--quiet", action="store_true", help="only print errors")
    p.add_argument("--strict", action="store_true",
                   help="exit 3 when any bound check fails")


def build_parser():
    parser = _Parser(prog="onlinecov",
                     description="Online group-conditional coverage runs and audits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init", help="write a config template with every seed explicit")
    _common(p)

    p = sub.add_parser("run", help="run a learner on a stream and write its outputs")
    _common(p)

    p = sub.add_parser("audit", help="audit a transcript CSV")
    _common(p)
    p.add_argument("transcript", nargs="?", help="transcript CSV (default: <out>/transcript.csv)")
    p.add_argument("--q", type=float, help="target rate (default: from config)")
    p.add_argument("--eta", type=float, help="step size for the GCACI coverage check")
    p.add_argument("--grid", type=int, help="grid resolution n")
    p.add_argument("--r", type=int, help="smoothness resolution")
    p.add_argument("--theorems", nargs="*", choices=sorted(THEOREMS),
                   help="bound checks to evaluate")

    p = sub.add_parser("sweep-eta", help="convergence step per group across step sizes")
    _common(p)
    p.add_argument("--etas", type=float, nargs="+", default=[1.0, 0.1, 0.01])
    p.add_argument("--epsilon", type=float, help="coverage tolerance (default: from config)")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("trace", help="write ||theta_t||_inf and its envelope for a run")
    _common(p)
    p.add_argument("run_dir", nargs="?", help="run directory (default: --out or output.dir)")
    return parser


def _load(args, required=True):
    if args.config is None:
        if required:
            raise ConfigError("--config is required for this command")
        return None
    cfg = harness.RunConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output(args.out)
    return cfg


def _say(args, msg):
    if not args.quiet:
        print(msg)


def _report_checks(args, reports):
    failed = harness.failed_checks(reports)
    for name, rep in reports.items():
        if name.startswith("check_"):
            _say(args, f"{rep.name}: {rep.status}")
    return EXIT_CHECK if (args.strict and failed) else EXIT_OK


def cmd_init(args):
    cfg = harness.template()
    if args.seed is not None:
        cfg["seed"] = cfg["stream"]["seed"] = cfg["learner"]["seed"] = args.seed
    target = Path(args.config or "config.json")
    if args.out is not None:
        cfg["output"]["dir"] = args.out
    harness.RunConfig.from_dict(cfg)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    _say(args, f"wrote {target}")
    return EXIT_OK


def cmd_run(args):
    cfg = _load(args)
    result = harness.run(cfg)
    _say(args, f"T={len(result.transcript)} k={result.transcript.k} "
               f"coverage={result.transcript.covered.mean():.6f} -> {cfg.output['dir']}")
    return _report_checks(args, result.reports)


def cmd_audit(args):
    cfg = _load(args, required=False)
    a = cfg.audit if cfg else {}
    out = Path(args.out or (cfg.output["dir"] if cfg else "."))
    path = Path(args.transcript) if args.transcript else out / "transcript.csv"
    q = args.q if args.q is not None else (cfg.learner["q"] if cfg else None)
    if q is None:
        raise ConfigError("audit needs --q or a config")
    eta = args.eta if args.eta is not None else (
        cfg.learner.get("eta") if cfg and cfg.learner["kind"] in ("gcaci", "aci", "ftrl") else None)
    theorems = args.theorems if args.theorems is not None else [
        t for t in a.get("theorems", []) if t != "norm_envelope"]
    reports = harness.audit(path, q, n=args.grid or a.get("n", 20), r=args.r or a.get("r", 10),
                            theorems=theorems, eta=eta, out=out,
                            epsilon=a.get("epsilon", 0.0), min_size=a.get("min_size", 1))
    _say(args, f"wrote {len(reports)} reports to {out}")
    return _report_checks(args, reports)


def cmd_sweep(args):
    cfg = _load(args)
    eps = args.epsilon if args.epsilon is not None else cfg.audit.get("convergence_epsilon", 0.01)
    rows = harness.sweep_eta(cfg, args.etas, epsilon=eps, jobs=args.jobs)
    for eta, group, step in rows:
        _say(args, f"eta={eta:g} {group}: {step}")
    return EXIT_OK


def cmd_trace(args):
    cfg = _load(args, required=False)
    run_dir = args.run_dir or args.out or (cfg.output["dir"] if cfg else None)
    if run_dir is None:
        raise ConfigError("trace needs a run directory")
    t, norm, env = harness.trace_norms(run_dir)
    ratio = np.divide(norm, env, out=np.zeros_like(norm), where=env > 0)
    worst = int(ratio.argmax())
    _say(args, f"{t.size} steps; max ||theta||_inf={norm.max():.6g}; "
               f"largest norm/envelope ratio {ratio[worst]:.4g} at t={int(t[worst])}")
    if args.strict and (norm > env + 1e-9).any():
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {"init": cmd_init, "run": cmd_run, "audit": cmd_audit,
            "sweep-eta": cmd_sweep, "trace": cmd_trace}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
