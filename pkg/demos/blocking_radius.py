"""Scale the channel-into-chamber fixture by R and watch the front switch from blocked to passing.

    python demos/blocking_radius.py 1 2 2.25 3
"""
from __future__ import annotations

import argparse
import tempfile
from pathlib import Path

from branchfront.harness import load_config, run_experiment

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "blocking_fixture.toml"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("R", nargs="*", type=float, default=[1.0, 2.0, 2.25, 3.0])
    args = ap.parse_args(argv)

    print(f"{'R':>6}  {'outcome':<10} {'far max':>10} {'cells':>8}")
    with tempfile.TemporaryDirectory() as tmp:
        for R in sorted(args.R):
            # The expected outcome is set to whatever happens; only the observables matter here.
            cfg = load_config(CONFIG, [f"params.R={R!r}"])
            art = run_experiment(cfg, Path(tmp) / f"R{R:g}")
            s = art.summary
            print(f"{R:6g}  {s['classification']:<10} {s['far_max_tail']:10.3g} {s['n_cells']:8d}")


if __name__ == "__main__":
    main()
