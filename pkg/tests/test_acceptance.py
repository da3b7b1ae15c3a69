"""The ten acceptance criteria at their stated tolerances and time budgets."""
from __future__ import annotations

import contextlib
import math
import time

import numpy as np
import pytest

from branchfront import harness as H
from branchfront.geometry import domain_from_config, y_junction
from branchfront.nonlinearity import CombustionNonlinearity
from branchfront.pde import StepperConfig, advance
from branchfront.wave1d import compute_wave, right_tail_rate, shoot_speed, simulate_speed_1d, unstable_rate
from conftest import ACCEPTANCE, CONFIGS

pytestmark = pytest.mark.slow

NONLINEARITIES = [CombustionNonlinearity(), CombustionNonlinearity(theta=0.2),
                  CombustionNonlinearity(theta=0.4, exponent=3.0)]


@contextlib.contextmanager
def criterion(n: int, what: str):
    info = {"detail": ""}
    t0 = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        dt = time.perf_counter() - t0
        line = f"{what}: {info['detail']} ({dt:.1f} s)"
        ACCEPTANCE.append((n, ok, line))
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {line}")


def _run(tmp_path, name, overrides=()):
    cfg = H.load_config(CONFIGS / f"{name}.toml", list(overrides))
    t0 = time.perf_counter()
    art = H.run_experiment(cfg, tmp_path / name)
    return art, time.perf_counter() - t0


def _failed(art):
    return "; ".join(f"{c.name}: {c.detail}" for c in art.failed)


def test_c01_wave_speed_cross_validation():
    with criterion(1, "shooting vs 1D simulation, 3 nonlinearities, <= 0.5%") as info:
        errs = []
        for nl in NONLINEARITIES:
            t0 = time.perf_counter()
            c = shoot_speed(nl)
            sim = simulate_speed_1d(nl, x_window=(70.0, 120.0))
            assert time.perf_counter() - t0 <= 60.0
            errs.append(abs(sim / c - 1))
        info["detail"] = "rel errors " + ", ".join(f"{e:.2e}" for e in errs)
        assert max(errs) <= 5e-3


def test_c02_decay_structure():
    with criterion(2, "tail rates: right -c_f within 1%, left root within 2%") as info:
        rows = []
        for nl in NONLINEARITIES:
            prof = compute_wave(nl)
            r = right_tail_rate(prof)
            root = unstable_rate(prof.c_f, nl.df1)
            rows.append((abs(r / prof.c_f - 1), abs(prof.Lambda_minus / root - 1)))
        info["detail"] = " ".join(f"({a:.1e},{b:.1e})" for a, b in rows)
        assert all(a <= 0.01 and b <= 0.02 for a, b in rows)


def test_c03_strip_speed(tmp_path):
    with criterion(3, "2D strip 1200x64, speed within 2% of c_f") as info:
        cfg = H.load_config(CONFIGS / "straight_cylinder.toml")
        dom = domain_from_config(cfg.domain)
        art, dt = _run(tmp_path, "straight_cylinder")
        sp = art.summary["speeds"]["1"]
        c = art.summary["c_f"]
        nx, ny = int(dom.mask.any(axis=0).sum()), int(dom.mask.any(axis=1).sum())
        info["detail"] = f"grid {nx}x{ny} speed {sp:.6f} c_f {c:.6f}"
        assert (nx, ny) == (1200, 64)
        assert abs(sp / c - 1) <= 0.02
        assert art.passed, _failed(art)
        assert dt <= 300


def test_c04_barrier_audit(tmp_path):
    with criterion(4, "sub/super residuals within tol_disc, sandwich over 10 time units") as info:
        art, dt = _run(tmp_path, "barrier_audit")
        s = art.summary
        info["detail"] = (f"sub max {s['sub_max_residual']:.2e} sup max {s['sup_max_residual']:.2e} "
                          f"tol {s['tol_disc']:.2e}")
        assert s["sub_max_residual"] <= s["tol_disc"]
        assert s["sup_max_residual"] <= s["tol_disc"]
        rows = (art.out_dir / "sandwich.csv").read_text().splitlines()[1:]
        ts = [float(r.split(",")[0]) for r in rows]
        assert ts[-1] - ts[0] >= 10.0 - 1e-9
        assert art.passed, _failed(art)
        assert dt <= 600


def test_c05_spreading_lemmas(tmp_path):
    with criterion(5, "spreading lower/upper/ring bounds at eps = c_f/4, 2 tol_disc slack") as info:
        art, dt = _run(tmp_path, "spreading_lemmas")
        names = [c.name for c in art.checks]
        for key in ("spreading_lower", "spreading_upper", "spreading_ring"):
            assert f"{key}: bound holds" in names
        assert art.summary["eps"] == pytest.approx(0.25 * compute_wave(CombustionNonlinearity()).c_f)
        info["detail"] = " | ".join(c.detail for c in art.checks if c.name.startswith("spreading"))
        assert art.passed, _failed(art)
        assert dt <= 900


def test_c06_entire_solution(tmp_path):
    with criterion(6, "ordering, past asymptotics, fit_shift sup_err <= 0.02") as info:
        art, dt = _run(tmp_path, "entire_solution", ["params.proxy_n=0"])
        names = [c.name for c in art.checks]
        assert sum("cellwise" in n for n in names) == 2
        assert any("past asymptotics" in n for n in names)
        errs = art.summary["sup_err"]
        assert set(errs) == {"1", "2"}
        info["detail"] = "sup_err " + " ".join(f"{k}:{v:.2e}" for k, v in sorted(errs.items()))
        assert max(errs.values()) <= 0.02
        assert art.passed, _failed(art)
        assert dt <= 1200


def test_c07_global_mean_speed(tmp_path):
    with criterion(7, "Y-junction gamma within 3% of c_f and 2% of regression") as info:
        art, dt = _run(tmp_path, "mean_speed")
        s = art.summary
        info["detail"] = f"gamma {s['gamma']:.6f} regression {s['regression_speed']:.6f} c_f {s['c_f']:.6f}"
        assert abs(s["gamma"] / s["c_f"] - 1) <= 0.03
        assert abs(s["gamma"] / s["regression_speed"] - 1) <= 0.02
        assert art.passed, _failed(art)
        assert dt <= 900


# R0 of the frozen blocking fixture at horizon 500, pinned by bisection
R0_BRACKET = (2.0, 2.25)


def test_c08_geometry_theorems(tmp_path):
    with criterion(8, "star-shaped suite Complete; sweep Blocked at R=1, Complete at R=4") as info:
        star, dt1 = _run(tmp_path, "star_shaped_suite")
        assert star.passed, _failed(star)
        doms = star.summary["domains"]
        assert doms["y_wide_blend"]["hypotheses"] is True
        assert doms["u_elbow"]["star_shaped"] is False
        Rs = [1.0, R0_BRACKET[0], R0_BRACKET[1], 3.0, 4.0]
        sweep, dt2 = _run(tmp_path, "scaling_sweep", [f"params.R_values={Rs}"])
        got = {r["R"]: r["classification"] for r in sweep.summary["results"]}
        info["detail"] = " ".join(f"R={R:g}:{c}" for R, c in sorted(got.items()))
        assert got[1.0] == "Blocked" and got[4.0] == "Complete"
        assert got[R0_BRACKET[0]] == "Blocked" and got[R0_BRACKET[1]] == "Complete"
        assert sweep.passed, _failed(sweep)
        assert dt1 + dt2 <= 1800


def test_c09_discrete_comparison():
    with criterion(9, "20 random ordered pairs, 1e4 steps, zero violations") as info:
        nl = CombustionNonlinearity()
        dom = y_junction(width=4.0, length=30.0, h=0.25, blend=2.0)
        dt = StepperConfig.for_grid(dom.h, nl).dt
        rng = np.random.default_rng(9)
        bad = 0
        for _ in range(20):
            a = rng.uniform(-0.2, 1.2, dom.n_cells)
            b = a + rng.uniform(0.0, 0.5, dom.n_cells) * (rng.uniform(size=dom.n_cells) < 0.5)
            ua, ub = advance(a, dom, nl, dt, 10_000), advance(b, dom, nl, dt, 10_000)
            sat = np.maximum(ua, ub) >= H.SATURATED
            bad += int(np.sum((ua > ub) & ~sat) + np.sum((ua - ub > H.ROUNDING_TOL) & sat))
        info["detail"] = f"violations {bad}"
        assert bad == 0


def test_c10_monotonicity_margin(tmp_path):
    with criterion(10, "monotonicity margin(0.1, 0.9) > 0 on every Complete run") as info:
        margins = []
        for name, ov in (("multi_branch", ()), ("scaling_sweep", ()),
                         ("entire_solution", ["params.proxy_n=0"])):
            art, _ = _run(tmp_path, name, ov)
            margins += [(name, c) for c in art.checks if "margin" in c.name]
        assert margins
        info["detail"] = f"{len(margins)} Complete runs, all margins > 0"
        bad = [f"{n}: {c.name} {c.detail}" for n, c in margins if not c.passed]
        assert not bad, bad
        assert all(math.isfinite(float(c.detail.split("=")[-1])) for _, c in margins)
