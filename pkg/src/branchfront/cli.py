"""branchfront command line: run, wave, check."""
from __future__ import annotations

import argparse
import os
import sys

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA = 0, 1, 2


def _threads(arg: int | None) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get("BRANCHFRONT_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            print(f"ignoring BRANCHFRONT_THREADS={env!r}: not an integer", file=sys.stderr)
    return None


def _cmd_run(args) -> int:
    from .harness import SchemaError, load_config, run_experiment
    try:
        cfg = load_config(args.config, args.override)
        art = run_experiment(cfg, args.out, _threads(args.threads))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    for c in art.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}")
    print(f"artifacts: {art.out_dir}")
    if not art.passed:
        for c in art.failed:
            print(f"failed check: {c.name}: {c.detail}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _cmd_check(args) -> int:
    from .harness import SchemaError, load_config
    try:
        cfg = load_config(args.config, args.override)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    print(f"ok: scenario {cfg.scenario}")
    return EXIT_OK


def _parse_nl(tokens, args) -> dict:
    d = {}
    for tok in tokens:
        if "=" not in tok:
            raise ValueError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        d[k.strip()] = float(v)
    for k in ("theta", "amplitude", "exponent"):
        v = getattr(args, k)
        if v is not None:
            d[k] = v
    return d


def _cmd_wave(args) -> int:
    from .nonlinearity import CombustionNonlinearity
    from .wave1d import NoAdmissibleSpeed, compute_wave, decay_rates, right_tail_rate
    try:
        nl = CombustionNonlinearity.from_dict(_parse_nl(args.params, args))
    except (TypeError, ValueError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        prof = compute_wave(nl, h=args.h)
    except NoAdmissibleSpeed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    lam, K1, K2, K3, K4 = decay_rates(prof)
    print(f"theta={nl.theta:g} amplitude={nl.amplitude:g} exponent={nl.exponent:g}")
    print(f"c_f={prof.c_f:.12g}")
    print(f"Lambda_minus={lam:.12g}")
    print(f"right_tail_rate={right_tail_rate(prof):.12g}")
    print(f"K1={K1:.6g} K2={K2:.6g} K3={K3:.6g} K4={K4:.6g}")
    print("xi,phi,1-phi")
    for xi in (-20, -10, -5, 0, 5, 10, 20):
        print(f"{xi},{float(prof.phi_at(xi)):.6e},{float(prof.omphi_at(xi)):.6e}")
    if args.csv:
        prof.to_csv(args.csv)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="branchfront",
                                 description="Combustion fronts on branched domains.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--threads", type=int, default=None,
                   help="stepper threads (default: BRANCHFRONT_THREADS)")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config key, value in TOML syntax; repeatable")
    r.set_defaults(func=_cmd_run)
    c = sub.add_parser("check", help="validate a config without running it")
    c.add_argument("config")
    c.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    c.set_defaults(func=_cmd_check)
    w = sub.add_parser("wave", help="planar front speed and decay table")
    w.add_argument("params", nargs="*", help="theta=... amplitude=... exponent=...")
    w.add_argument("--theta", type=float)
    w.add_argument("--amplitude", type=float)
    w.add_argument("--exponent", type=float)
    w.add_argument("--h", type=float, default=1e-3, help="profile grid spacing")
    w.add_argument("--csv", default=None, help="write the profile CSV here")
    w.set_defaults(func=_cmd_wave)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
