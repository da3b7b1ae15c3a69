"""Run the bundled experiment configs and print each check.

    python demos/run_configs.py                      # every config
    python demos/run_configs.py straight_cylinder blocking_fixture --out runs
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

from branchfront.harness import load_config, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems (default: all)")
    ap.add_argument("--out", default="demo_runs")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args(argv)

    names = args.names or sorted(p.stem for p in CONFIGS.glob("*.toml"))
    failed = []
    for name in names:
        cfg = load_config(CONFIGS / f"{name}.toml", args.override)
        t0 = time.perf_counter()
        art = run_experiment(cfg, Path(args.out) / name)
        print(f"== {name}  ({time.perf_counter() - t0:.0f} s, artifacts in {art.out_dir})")
        for c in art.checks:
            print(f"   {'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}")
        if not art.passed:
            failed.append(name)
    print("all checks passed" if not failed else f"failing configs: {', '.join(failed)}")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
