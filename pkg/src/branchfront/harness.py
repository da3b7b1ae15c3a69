"""Experiment configs, scenario runners and run artifacts."""
from __future__ import annotations

import copy
import datetime as _dt
import hashlib
import json
import math
import os
import platform
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import jsonschema

from . import __version__
from . import barriers as B
from . import fronts as F
from .geometry import (BranchedDomain, GeometryError, axis_path, domain_from_config,
                       is_star_shaped, path_min_clearance, scale_domain)
from .nonlinearity import CombustionNonlinearity
from .pde import (Field, FieldHistory, StepperConfig, init_planar_front, run, set_threads)
from .wave1d import compute_wave

SCENARIOS = ("straight_cylinder", "multi_branch", "entire_solution", "barrier_audit",
             "spreading_lemmas", "star_shaped_suite", "scaling_sweep", "blocking_fixture",
             "mean_speed")


class SchemaError(ValueError):
    """Config cannot be parsed or violates the schema."""


class CheckFailed(AssertionError):
    pass


_NUM = {"type": "number"}
_BRANCH = {
    "type": "object",
    "required": ["width", "length"],
    "properties": {"angle_deg": _NUM, "width": {"type": "number", "exclusiveMinimum": 0},
                   "length": {"type": "number", "exclusiveMinimum": 0},
                   "anchor": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                   "direction": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
    "additionalProperties": False,
}
_DOMAIN = {
    "type": "object",
    "required": ["branches"],
    "properties": {"L": _NUM, "h": {"type": "number", "exclusiveMinimum": 0},
                   "blend": {"type": "number", "minimum": 0},
                   "ball": {"type": "number", "minimum": 0},
                   "center": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                   "name": {"type": "string"},
                   "branches": {"type": "array", "items": _BRANCH, "minItems": 2}},
    "additionalProperties": False,
}
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["scenario"],
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "seed": {"type": "integer"},
        "output": {"type": "string"},
        "nonlinearity": {
            "type": "object",
            "properties": {"theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                           "amplitude": {"type": "number", "minimum": 0},
                           "exponent": {"type": "number", "minimum": 2}},
            "additionalProperties": False},
        "domain": _DOMAIN,
        "stepper": {
            "type": "object",
            "properties": {"dt": {"type": "number", "exclusiveMinimum": 0},
                           "cfl_safety": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                           "record_every": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False},
        "thresholds": {
            "type": "object",
            "properties": {"complete_level": _NUM, "blocked_margin": _NUM,
                           "tail_fraction": _NUM, "level": _NUM},
            "additionalProperties": False},
        "params": {"type": "object"},
    },
    "additionalProperties": False,
}

DEFAULT_THRESHOLDS = {"complete_level": 0.95, "blocked_margin": 0.05, "tail_fraction": 0.25,
                      "level": 0.5}


# ------------------------------------------------------------------ config

@dataclass
class ExperimentConfig:
    scenario: str
    nonlinearity: CombustionNonlinearity
    domain: dict
    stepper: dict
    params: dict
    thresholds: dict
    seed: int = 0
    output: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise SchemaError(f"{where}: {exc.message}") from None
        try:
            nl = CombustionNonlinearity.from_dict(raw.get("nonlinearity", {}))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"nonlinearity: {exc}") from None
        cfg = cls(raw["scenario"], nl, copy.deepcopy(raw.get("domain", {})),
                  dict(raw.get("stepper", {})), copy.deepcopy(raw.get("params", {})),
                  {**DEFAULT_THRESHOLDS, **raw.get("thresholds", {})}, int(raw.get("seed", 0)),
                  raw.get("output"), copy.deepcopy(raw))
        cfg._check_invariants()
        return cfg

    def _check_invariants(self) -> None:
        m = len(self.domain.get("branches", []))
        for key in ("incoming", "i"):
            if key in self.params and not 0 <= int(self.params[key]) < max(m, 1):
                raise SchemaError(f"params.{key}: branch {self.params[key]} does not exist")
        for key in ("I", "J"):
            for b in self.params.get(key, []):
                if not 0 <= int(b) < m:
                    raise SchemaError(f"params.{key}: branch {b} does not exist")
        if "I" in self.params and "J" in self.params:
            I, J = set(self.params["I"]), set(self.params["J"])
            if I & J or (I | J) != set(range(m)):
                raise SchemaError("params: I and J must partition the branches")
        h = float(self.domain.get("h", 0.25))
        if "dt" in self.stepper:
            try:
                StepperConfig.from_dict(self.stepper, h, self.nonlinearity)
            except ValueError as exc:
                raise SchemaError(f"stepper: {exc}") from None

    def stepper_for(self, h: float) -> StepperConfig:
        try:
            return StepperConfig.from_dict(self.stepper, h, self.nonlinearity)
        except ValueError as exc:
            raise SchemaError(f"stepper: {exc}") from None

    def p(self, key, default=None):
        return self.params.get(key, default)


def parse_override(text: str) -> tuple[list, object]:
    if "=" not in text:
        raise SchemaError(f"override {text!r} is not key=value")
    key, val = text.split("=", 1)
    path = [k for k in key.strip().split(".") if k]
    if not path:
        raise SchemaError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {val.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = val.strip()
    return path, value


def apply_overrides(raw: dict, overrides=()) -> dict:
    raw = copy.deepcopy(raw)
    for text in overrides:
        path, value = parse_override(text)
        node = raw
        for k in path[:-1]:
            if isinstance(node, list):
                node = node[int(k)]
            else:
                node = node.setdefault(k, {})
        if isinstance(node, list):
            node[int(path[-1])] = value
        else:
            node[path[-1]] = value
    return raw


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise SchemaError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"malformed TOML: {exc}") from None
    return ExperimentConfig.from_dict(apply_overrides(raw, overrides))


# --------------------------------------------------------------- artifacts

def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.ndarray)):
        return _finite(_jsonable(obj))
    return obj


def dumps(obj) -> str:
    """Strict JSON: non-finite floats become null."""
    return json.dumps(_finite(obj), indent=2, sort_keys=True, default=_jsonable,
                      allow_nan=False)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunArtifacts:
    out_dir: Path
    manifest: dict
    files: dict
    checks: list
    summary: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]


class Context:
    """Scratch directory, shared objects and the check list of one run."""

    def __init__(self, cfg: ExperimentConfig, workdir: Path):
        self.cfg = cfg
        self.dir = workdir
        self.checks: list[Check] = []
        self.summary: dict = {}
        self._profile = None

    @property
    def profile(self):
        if self._profile is None:
            self._profile = compute_wave(self.cfg.nonlinearity)
        return self._profile

    @property
    def nl(self) -> CombustionNonlinearity:
        return self.cfg.nonlinearity

    def path(self, name: str) -> Path:
        p = self.dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write(self, name: str, text: str) -> None:
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)

    def check(self, name: str, passed, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    def checks_csv(self) -> str:
        rows = ["check,passed,detail"]
        for c in self.checks:
            d = c.detail.replace('"', '""')
            rows.append(f'{c.name},{"true" if c.passed else "false"},"{d}"')
        return "\r\n".join(rows) + "\r\n"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    import numba
    import scipy
    return {"branchfront": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _default_out(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output) if cfg.output else Path("runs") / cfg.scenario


def run_experiment(cfg: ExperimentConfig, out: str | os.PathLike | None = None,
                   threads: int | None = None) -> RunArtifacts:
    """Execute the scenario into a temp dir, then move it into place."""
    set_threads(threads)
    final = Path(out) if out is not None else _default_out(cfg)
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{final.name}.tmp-", dir=final.parent))
    t0 = time.perf_counter()
    try:
        ctx = Context(cfg, tmp)
        SCENARIO_FUNCS[cfg.scenario](ctx)
        ctx.summary["checks"] = {c.name: c.passed for c in ctx.checks}
        ctx.summary["passed"] = all(c.passed for c in ctx.checks)
        ctx.write("summary.json", dumps(ctx.summary))
        ctx.write("checks.csv", ctx.checks_csv())
        files = {p.relative_to(tmp).as_posix(): _sha256(p)
                 for p in sorted(tmp.rglob("*")) if p.is_file()}
        manifest = {"scenario": cfg.scenario, "seed": cfg.seed, "config": cfg.raw,
                    "versions": _versions(), "wall_time_s": time.perf_counter() - t0,
                    "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
                    "files": files}
        with open(tmp / "manifest.json", "w") as fh:
            fh.write(dumps(manifest))
        _replace_dir(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return RunArtifacts(final, manifest, files, ctx.checks, ctx.summary)


def _replace_dir(src: Path, dst: Path) -> None:
    old = None
    if dst.exists():
        old = dst.with_name(f".{dst.name}.old-{os.getpid()}")
        os.replace(dst, old)
    os.replace(src, dst)
    if old is not None:
        shutil.rmtree(old, ignore_errors=True)


# ----------------------------------------------------------------- helpers

def _domain(ctx: Context, block: dict | None = None) -> BranchedDomain:
    block = ctx.cfg.domain if block is None else block
    if not block.get("branches"):
        raise SchemaError("domain.branches is required for this scenario")
    try:
        return domain_from_config(block)
    except GeometryError as exc:
        raise SchemaError(f"domain: {exc}") from None


def _axis_probes(dom: BranchedDomain, depth: float, branches=None) -> np.ndarray:
    """Junction center plus one axis point per branch at s = L + depth."""
    branches = range(dom.m) if branches is None else branches
    pts = [dom.center] + [dom.far_point(j, min(dom.L + depth, dom.branches[j].length - 1.0))
                          for j in branches]
    return dom.cell_of(*np.array(pts).T)


def _front_report(hist: FieldHistory, branches, level: float, window) -> F.FrontReport:
    rep = F.FrontReport()
    for j in branches:
        ts, ps = F.position_series(hist, j, level)
        rep.positions[j] = (ts, ps)
        sel = (ts >= window[0]) & (ts <= window[1])
        if sel.sum() >= 2:
            rep.speeds[j] = F.regression_speed(ts[sel], ps[sel])
    return rep


def _obs_minmax(f: Field) -> dict:
    return {"min": float(f.values.min()), "max": float(f.values.max()),
            "mass": float(f.values.sum() * f.domain.h ** 2)}


def _classify(ctx: Context, hist, probes, far=None, incoming=None) -> str:
    th = ctx.cfg.thresholds
    return F.classify_propagation(hist, probes, ctx.nl.theta, far, incoming,
                                  th["complete_level"], th["blocked_margin"], th["tail_fraction"])


def _margin_check(ctx: Context, hist, name: str) -> float:
    m = F.monotonicity_margin(hist, 0.1, 0.9)
    ctx.check(f"{name}: monotonicity margin > 0", m > 0, f"margin={m:.6g}")
    return m


# ---------------------------------------------------------------- scenarios

def _front_run(ctx: Context, name: str, speed_tol: float) -> dict:
    """Front from branch ``incoming`` through the junction; speeds and speed estimators."""
    cfg = ctx.cfg
    dom = _domain(ctx)
    i = int(cfg.p("incoming", 0))
    x0 = float(cfg.p("x0", 20.0))
    t_end = float(cfg.p("t_end", 400.0))
    window = tuple(cfg.p("window", (0.5 * t_end, t_end)))
    level = float(cfg.thresholds["level"])
    step = cfg.stepper_for(dom.h)
    prof = ctx.profile
    try:
        f0 = init_planar_front(dom, prof, i, x0)
    except GeometryError as exc:
        raise SchemaError(f"params.x0: {exc}") from None
    hist = run(f0, ctx.nl, step, t_end, observers=[_obs_minmax])
    out = [j for j in range(dom.m) if j != i]
    rep = _front_report(hist, out, level, window)
    c = prof.c_f
    for j in out:
        v = rep.speeds.get(j, float("nan"))
        ctx.check(f"{name}: speed in branch {j} within {speed_tol:.0%} of c_f",
                  abs(v / c - 1) <= speed_tol, f"speed={v:.6g} c_f={c:.6g}")
    probes = _axis_probes(dom, float(cfg.p("probe_depth", 4.0)))
    rep.classification = _classify(ctx, hist, probes)
    ctx.check(f"{name}: classification Complete", rep.classification == F.COMPLETE,
              rep.classification)
    margin = _margin_check(ctx, hist, name)
    span = tuple(cfg.p("gamma_window", window))
    gap_min = float(cfg.p("gap_min", (span[1] - span[0]) / 3))
    est = F.estimate_global_mean_speed(hist, gap_min, level, window=span)
    rep.gamma, rep.ci = est.gamma, est.ci
    regr = float(np.mean([rep.speeds[j] for j in out if j in rep.speeds]))
    rep.extra.update({"c_f": c, "regression_speed": regr, "monotonicity_margin": margin,
                      "n_cells": dom.n_cells})
    rep.to_csv(ctx.path("positions.csv"))
    hist.observer_csv(ctx.path("observers.csv"))
    F.plot_positions(rep, ctx.path("positions.svg"))
    F.plot_distance_gap(est, ctx.path("distance_gap.svg"))
    ctx.write("front_report.json", dumps(rep.summary()))
    ctx.summary.update(rep.summary())
    return {"hist": hist, "report": rep, "estimate": est, "regression": regr, "domain": dom}


def straight_cylinder(ctx: Context) -> None:
    res = _front_run(ctx, "straight_cylinder", float(ctx.cfg.p("speed_tol", 0.02)))
    c = ctx.profile.c_f
    rep = res["report"]
    ctx.check("straight_cylinder: global mean speed within 3% of c_f",
              abs(rep.gamma / c - 1) <= float(ctx.cfg.p("gamma_tol", 0.03)),
              f"gamma={rep.gamma:.6g}")


def multi_branch(ctx: Context) -> None:
    res = _front_run(ctx, "multi_branch", float(ctx.cfg.p("speed_tol", 0.03)))
    hist, rep, dom = res["hist"], res["report"], res["domain"]
    t_end = hist.times[-1]
    span = float(ctx.cfg.p("fit_window", 40.0))
    i = int(ctx.cfg.p("incoming", 0))
    for j in (j for j in range(dom.m) if j != i):
        fit = F.fit_shift(hist, j, ctx.profile, (t_end - span, t_end))
        rep.shifts[j], rep.sup_errors[j] = fit.tau, fit.sup_err
    ctx.write("front_report.json", dumps(rep.summary()))
    ctx.summary.update(rep.summary())


def mean_speed(ctx: Context) -> None:
    res = _front_run(ctx, "mean_speed", float(ctx.cfg.p("speed_tol", 0.03)))
    c = ctx.profile.c_f
    g, regr = res["report"].gamma, res["regression"]
    ctx.check("mean_speed: gamma within 3% of c_f",
              abs(g / c - 1) <= float(ctx.cfg.p("gamma_tol", 0.03)), f"gamma={g:.6g} c_f={c:.6g}")
    ctx.check("mean_speed: gamma consistent with branch regression within 2%",
              abs(g / regr - 1) <= float(ctx.cfg.p("consistency_tol", 0.02)),
              f"gamma={g:.6g} regression={regr:.6g}")


# ......................................................... entire solution

@dataclass
class EntireSolution:
    histories: dict  # n -> FieldHistory
    ordering: list  # (n_small, n_big, min diff on unsaturated cells, min diff overall)
    sub: B.SubsolutionSpec

    @property
    def largest(self) -> FieldHistory:
        return self.histories[max(self.histories)]


ROUNDING_TOL = 64 * np.finfo(float).eps
SATURATED = 1.0 - 1e-12


def ordering_gap(h_small: FieldHistory, h_big: FieldHistory) -> tuple[float, float]:
    """min of u_big - u_small at shared record times: (unsaturated cells, all cells)."""
    idx = {round(t, 9): k for k, t in enumerate(h_big.times)}
    unsat, overall = math.inf, math.inf
    for k, t in enumerate(h_small.times):
        kb = idx.get(round(t, 9))
        if kb is None:
            continue
        a, b = h_small.fields[k], h_big.fields[kb]
        d = b - a
        overall = min(overall, float(d.min()))
        sel = np.maximum(a, b) < SATURATED
        if sel.any():
            unsat = min(unsat, float(d[sel].min()))
    return unsat, overall


def approximate_entire_solution(ctx_or_cfg, schedule=None, t_end=None, record_every=None,
                                dom: BranchedDomain | None = None, profile=None) -> EntireSolution:
    """u_n started from the subsolution at t = -n, for each n of the schedule."""
    ctx = ctx_or_cfg if isinstance(ctx_or_cfg, Context) else Context(ctx_or_cfg, Path("."))
    cfg = ctx.cfg
    dom = dom or _domain(ctx)
    prof = profile or ctx.profile
    schedule = sorted(int(n) for n in (schedule or cfg.p("schedule", [10, 20, 40])))
    t_end = float(cfg.p("t_end", 520.0) if t_end is None else t_end)
    rec = float(cfg.p("record_every", 1.0) if record_every is None else record_every)
    I = [int(k) for k in cfg.p("I", [0])]
    consts = B.barrier_constants(prof, dom, eps_factor=float(cfg.p("eps_factor", 0.5)))
    sub = B.make_subsolution(prof, dom, I, T=float(cfg.p("T", -10.0)), consts=consts)
    if -schedule[0] > sub.T:
        raise SchemaError("params.schedule: every start time -n must precede the horizon T")
    step = replace_record(cfg.stepper_for(dom.h), rec)
    hists = {}
    for n in schedule:
        u0 = B.eval_subsolution(sub, -float(n), dom)
        hists[n] = run(Field(u0, -float(n), dom), ctx.nl, step, t_end)
    order = [(a, b, *ordering_gap(hists[a], hists[b])) for a, b in zip(schedule, schedule[1:])]
    return EntireSolution(hists, order, sub)


def replace_record(step: StepperConfig, every: float) -> StepperConfig:
    return StepperConfig(step.dt, step.cfl_safety, every)


def entire_solution(ctx: Context) -> None:
    cfg = ctx.cfg
    dom = _domain(ctx)
    prof = ctx.profile
    ent = approximate_entire_solution(ctx, dom=dom)
    rows = ["n_small,n_big,min_diff_unsaturated,min_diff_all"]
    for a, b, un, ov in ent.ordering:
        rows.append(f"{a},{b},{un!r},{ov!r}")
        ctx.check(f"entire_solution: u_{a} <= u_{b} cellwise", un >= 0 and ov >= -ROUNDING_TOL,
                  f"unsaturated min={un:.3g} all min={ov:.3g}")
    ctx.write("ordering.csv", "\r\n".join(rows) + "\r\n")

    hist = ent.largest
    sub = ent.sub
    I = [int(k) for k in cfg.p("I", [0])]
    J = [int(k) for k in cfg.p("J", [j for j in range(dom.m) if j not in I])]

    def shift(t):
        return sub.rho * math.exp(sub.eps * t) + 1.0

    past = {}
    for i in I:
        errs = F.past_asymptotics_error(hist, prof, i, shift, [0, 1, 2])
        past[i] = errs
        e = [v for _, v in errs]
        ctx.check(f"entire_solution: past asymptotics in branch {i} decrease as t decreases",
                  e[0] < e[1] < e[2], " ".join(f"{v:.3g}" for v in e))
    t_end = hist.times[-1]
    span = float(cfg.p("fit_window", 40.0))
    rep = F.FrontReport()
    for j in J:
        rep.positions[j] = F.position_series(hist, j)
        fit = F.fit_shift(hist, j, prof, (t_end - span, t_end))
        rep.shifts[j], rep.sup_errors[j] = fit.tau, fit.sup_err
        rep.extra.setdefault("normalized_err", {})[str(j)] = fit.normalized_err
        ctx.check(f"entire_solution: fit_shift converges in branch {j}",
                  math.isfinite(fit.tau) and fit.sup_err <= float(cfg.p("sup_err_tol", 0.02)),
                  f"tau={fit.tau:.6g} sup_err={fit.sup_err:.3g}")
        prev = F.fit_shift(hist, j, prof, (t_end - 2 * span, t_end - span))
        ctx.check(f"entire_solution: tau_{j} stable across windows",
                  abs(prev.tau - fit.tau) <= 2 * dom.h, f"{prev.tau:.6g} vs {fit.tau:.6g}")
    probes = _axis_probes(dom, float(cfg.p("probe_depth", 4.0)))
    rep.classification = _classify(ctx, hist, probes)
    ctx.check("entire_solution: classification Complete", rep.classification == F.COMPLETE,
              rep.classification)
    margin = _margin_check(ctx, hist, "entire_solution")
    rep.extra.update({"rho": sub.rho, "eps": sub.eps, "T": sub.T, "monotonicity_margin": margin,
                      "past_asymptotics": {str(k): v for k, v in past.items()},
                      "schedule": sorted(ent.histories)})
    proxy_n = cfg.p("proxy_n")
    if proxy_n:
        ref = max(ent.histories)
        extra = approximate_entire_solution(ctx, schedule=[int(proxy_n)], dom=dom)
        hb = extra.largest
        diff = float(np.abs(hist.fields[hist.nearest(0.0)] - hb.fields[hb.nearest(0.0)]).max())
        tol = float(cfg.p("proxy_tol", 1e-3))
        rep.extra["uniqueness_proxy"] = {"n": [ref, int(proxy_n)], "max_diff_t0": diff,
                                         "tol": tol, "within_tol": diff <= tol}
        if cfg.p("assert_proxy", False):
            ctx.check(f"entire_solution: u_{ref} and u_{proxy_n} agree at t=0", diff <= tol,
                      f"max diff={diff:.3g}")
    rep.to_csv(ctx.path("positions.csv"))
    F.plot_positions(rep, ctx.path("positions.svg"))
    ctx.write("front_report.json", dumps(rep.summary()))
    ctx.summary.update(rep.summary())


# ............................................................ barrier audit

def sandwich(sub: B.SubsolutionSpec, sup: B.SupersolutionSpec, dom: BranchedDomain, nl,
             step: StepperConfig, span: float = 10.0, every: float = 1.0, slack: float = 0.0):
    """Run from the subsolution at min(T, T_eps) - span and compare with both barriers."""
    t0 = min(sub.T, sup.T_eps) - span
    f0 = Field(B.eval_subsolution(sub, t0, dom), t0, dom)
    hist = run(f0, nl, replace_record(step, every), t0 + span)
    rows = []
    for k, t in enumerate(hist.times):
        u = hist.fields[k]
        lo = float((u - B.eval_subsolution(sub, t, dom)).min())
        hi = float((B.eval_supersolution(sup, t, dom) - u).min())
        rows.append((t, lo, hi, lo >= 0 and hi >= -slack))
    return rows


def barrier_audit(ctx: Context) -> None:
    cfg = ctx.cfg
    dom = _domain(ctx)
    prof, nl = ctx.profile, ctx.nl
    I = [int(k) for k in cfg.p("I", [0])]
    consts = B.barrier_constants(prof, dom, eps_factor=float(cfg.p("eps_factor", 0.5)))
    sub = B.make_subsolution(prof, dom, I, T=float(cfg.p("T", -10.0)), consts=consts)
    sup = B.make_supersolution(prof, dom, I, consts)
    ctx.write("constants.json", consts.to_json())
    for q in consts.inequalities + sub.desk_inequalities():
        ctx.check(f"constants: {q.name}", q.holds, f"{q.lhs:.6g} {q.relation} {q.rhs:.6g}")
    tol = B.calibrate_tol_disc(prof, dom.h)
    window = float(cfg.p("window", 10.0))
    n_times = int(cfg.p("n_times", 11))
    r_sub = B.verify_differential_inequality(lambda t: B.eval_subsolution(sub, t, dom), 1, dom,
                                             nl, (sub.T - window, sub.T), tol, n_times,
                                             check_name="subsolution")
    r_sup = B.verify_differential_inequality(lambda t: B.eval_supersolution(sup, t, dom), -1, dom,
                                             nl, (sup.T_eps - window, sup.T_eps), tol, n_times,
                                             check_name="supersolution")
    for r in (r_sub, r_sup):
        ctx.check(f"barrier_audit: {r.check_name} residual within tol_disc", r.passed,
                  f"max={r.max_residual:.3g} tol={tol:.3g} cells={r.n_checked}")
    ctx.write("violations.csv", r_sub.to_csv() + r_sup.to_csv().split("\r\n", 1)[1])
    exact_sub = max(float(np.nanmax(B.subsolution_residual(sub, t, dom)))
                    for t in np.linspace(sub.T - window, sub.T, n_times))
    exact_sup = min(float(np.nanmin(B.supersolution_residual(sup, t, dom)))
                    for t in np.linspace(sup.T_eps - window, sup.T_eps, n_times))
    ctx.check("barrier_audit: exact subsolution residual <= 0", exact_sub <= 0,
              f"max={exact_sub:.3g}")
    ctx.check("barrier_audit: exact supersolution residual >= 0", exact_sup >= 0,
              f"min={exact_sup:.3g}")
    rows = sandwich(sub, sup, dom, nl, cfg.stepper_for(dom.h), float(cfg.p("sandwich_span", 10.0)),
                    slack=2 * tol)
    ctx.write("sandwich.csv", "t,min_u_minus_sub,min_sup_minus_u,pass\r\n" + "".join(
        f"{t!r},{lo!r},{hi!r},{'true' if ok else 'false'}\r\n" for t, lo, hi, ok in rows))
    ctx.check("barrier_audit: sandwich sub <= u <= sup", all(r[3] for r in rows),
              f"min lower gap={min(r[1] for r in rows):.3g} "
              f"min upper gap={min(r[2] for r in rows):.3g}")
    ctx.summary.update({"tol_disc": tol, "rho_sub": sub.rho, "T": sub.T, "rho_sup": sup.rho,
                        "T_eps": sup.T_eps, "eps": consts.eps, "mu": consts.mu,
                        "sub_max_residual": r_sub.max_residual,
                        "sup_max_residual": r_sup.max_residual,
                        "exact_sub_max": exact_sub, "exact_sup_min": exact_sup})


def spreading_lemmas(ctx: Context) -> None:
    cfg = ctx.cfg
    dom = _domain(ctx)
    prof = ctx.profile
    eps = float(cfg.p("eps_factor", 0.25)) * prof.c_f
    spec = B.cauchy_constants(prof, eps, dom.L)
    for q in spec.inequalities:
        ctx.check(f"constants: {q.name}", q.holds, f"{q.lhs:.6g} {q.relation} {q.rhs:.6g}")
    ctx.write("cauchy_constants.json", dumps(spec.to_dict()))
    tol = B.calibrate_tol_disc(prof, dom.h)
    step = cfg.stepper_for(dom.h)
    i = int(cfg.p("i", 0))
    pad = float(cfg.p("pad", 20.0))
    l_low = float(cfg.p("l_lower", spec.R_eps + spec.L_eps + pad))
    R_up = float(cfg.p("R_upper", spec.R_eps + pad))
    l_up = float(cfg.p("l_upper", R_up + spec.L_eps + 5.0))
    R_ring = float(cfg.p("R_ring", spec.R_eps_ring + dom.L + 10.0))
    try:
        reps = [B.check_spreading_lower(dom, i, l_low, eps, prof, cfg=step, spec=spec, tol_disc=tol,
                                        t_after=float(cfg.p("t_after", 50.0))),
                B.check_spreading_upper(dom, i, l_up, R_up, eps, prof, cfg=step, spec=spec,
                                        tol_disc=tol),
                B.check_spreading_ring(dom, R_ring, eps, prof, cfg=step, spec=spec, tol_disc=tol)]
    except (ValueError, GeometryError) as exc:
        raise SchemaError(f"spreading_lemmas: {exc}") from None
    for r in reps:
        worst = (min if r.name == "spreading_lower" else max)(c[3] for c in r.checks)
        ctx.check(f"{r.name}: bound holds", r.passed and r.checks,
                  f"worst={worst:.12g} bound={r.bound:.12g} records={len(r.checks)}")
        ctx.write(f"{r.name}.csv", r.to_csv())
    ctx.summary.update({"eps": eps, "delta_eps": spec.delta_eps, "R_eps": spec.R_eps,
                        "L_eps": spec.L_eps, "R_eps_ring": spec.R_eps_ring, "tol_disc": tol,
                        "l_lower": l_low, "R_upper": R_up, "l_upper": l_up, "R_ring": R_ring})


# ........................................................ geometry theorems

def star_shaped_suite(ctx: Context) -> None:
    cfg = ctx.cfg
    prof = ctx.profile
    blocks = cfg.p("domains") or [dict(ctx.cfg.domain, name="domain")]
    t_end = float(cfg.p("t_end", 250.0))
    x0 = float(cfg.p("x0", 20.0))
    depth = float(cfg.p("probe_depth", 4.0))
    rows = ["domain,star_shaped,clearance,R,hypotheses,run,classification,margin"]
    results = {}
    for blk in blocks:
        name = blk.get("name", "domain")
        block = {k: v for k, v in blk.items() if k != "name"}
        dom = _domain(ctx, block)
        R = float(blk.get("R", cfg.p("R", 0.25 * min(b.width for b in dom.branches))))
        block.pop("R", None)
        star = is_star_shaped(dom, dom.center)
        clear = min(path_min_clearance(dom, axis_path(dom, i, j))
                    for i in range(dom.m) for j in range(dom.m) if i < j)
        hyp = star and clear >= R
        step = cfg.stepper_for(dom.h)
        probes = _axis_probes(dom, depth)
        res = {"star_shaped": star, "clearance": clear, "R": R, "hypotheses": hyp, "runs": {}}
        for i in range(dom.m):
            hist = run(init_planar_front(dom, prof, i, min(x0, dom.branches[i].length - 1)),
                       ctx.nl, step, t_end)
            cls = _classify(ctx, hist, probes)
            m = F.monotonicity_margin(hist, 0.1, 0.9) if cls == F.COMPLETE else float("nan")
            res["runs"][f"u^{i}"] = {"classification": cls, "margin": m}
            rows.append(f"{name},{star},{clear!r},{R!r},{hyp},u^{i},{cls},{m!r}")
            if hyp:
                ctx.check(f"star_shaped_suite: {name} u^{i} Complete", cls == F.COMPLETE, cls)
            if cls == F.COMPLETE:
                ctx.check(f"star_shaped_suite: {name} u^{i} margin > 0", m > 0, f"{m:.6g}")
        if hyp and blk.get("entire", False):
            I = [int(k) for k in blk.get("I", [0])]
            sub_t_end = float(blk.get("entire_t_end", 2 * t_end))
            ent_cfg = ExperimentConfig(cfg.scenario, cfg.nonlinearity, block, cfg.stepper,
                                       {"I": I, "schedule": [int(blk.get("n", 10))]},
                                       cfg.thresholds, cfg.seed)
            ent = approximate_entire_solution(Context(ent_cfg, ctx.dir), t_end=sub_t_end,
                                              record_every=5.0, dom=dom, profile=prof)
            cls = _classify(ctx, ent.largest, probes)
            m = F.monotonicity_margin(ent.largest, 0.1, 0.9) if cls == F.COMPLETE else float("nan")
            res["runs"]["entire"] = {"classification": cls, "margin": m}
            rows.append(f"{name},{star},{clear!r},{R!r},{hyp},entire,{cls},{m!r}")
            ctx.check(f"star_shaped_suite: {name} entire solution Complete", cls == F.COMPLETE, cls)
            if cls == F.COMPLETE:
                ctx.check(f"star_shaped_suite: {name} entire margin > 0", m > 0, f"{m:.6g}")
        results[name] = res
    ctx.write("star_shaped.csv", "\r\n".join(rows) + "\r\n")
    ctx.summary["domains"] = results


def _fixture_run(ctx: Context, base: BranchedDomain, R: float) -> dict:
    """Front from the channel into the chamber of R * base; outcome and observables."""
    cfg = ctx.cfg
    dom = base if R == 1.0 else scale_domain(base, R)
    i = int(cfg.p("incoming", 0))
    j = int(cfg.p("chamber", 1))
    x0 = float(cfg.p("front_gap", 4.0)) + R * float(cfg.p("x0_scaled", 1.0))
    t_end = float(cfg.p("t_end", 500.0))
    step = cfg.stepper_for(dom.h)
    step = replace_record(step, float(cfg.p("record_every", t_end / 20)))
    hist = run(init_planar_front(dom, ctx.profile, i, x0), ctx.nl, step, t_end)
    pts = R * np.asarray(cfg.p("probes", [[2.0, 0.0], [4.0, 0.0]]), dtype=float)
    probes = dom.cell_of(pts[:, 0], pts[:, 1])
    s = dom.coord(j)
    far = np.flatnonzero(dom.in_branch(j) & (s >= R * float(cfg.p("far_depth", 6.0))))
    inc = np.flatnonzero(dom.in_branch(i) & (dom.coord(i) >= dom.L))
    cls = _classify(ctx, hist, probes, far, inc)
    tail = [k for k, t in enumerate(hist.times)
            if t >= t_end * (1 - cfg.thresholds["tail_fraction"]) - 1e-9]
    margin = F.monotonicity_margin(hist, 0.1, 0.9) if cls == F.COMPLETE else float("nan")
    if cls == F.COMPLETE:
        ctx.check(f"R={R:g}: monotonicity margin > 0", margin > 0, f"margin={margin:.6g}")
    return {"R": R, "classification": cls, "probe_min": float(hist.fields[-1][probes].min()),
            "far_max_tail": float(max(hist.fields[k][far].max() for k in tail)),
            "incoming_min": float(hist.fields[-1][inc].min()), "n_cells": dom.n_cells,
            "margin": margin, "hist": hist}


def _fixture_row(r: dict) -> str:
    return (f"{r['R']!r},{r['classification']},{r['probe_min']!r},{r['far_max_tail']!r},"
            f"{r['incoming_min']!r},{r['n_cells']},{r['margin']!r}")


FIXTURE_HEADER = "R,classification,probe_min,far_max_tail,incoming_min,n_cells,margin"


def blocking_fixture(ctx: Context) -> None:
    base = _domain(ctx)
    r = _fixture_run(ctx, base, float(ctx.cfg.p("R", 1.0)))
    ctx.write("fixture.csv", FIXTURE_HEADER + "\r\n" + _fixture_row(r) + "\r\n")
    expect = ctx.cfg.p("expect", F.BLOCKED)
    ctx.check(f"blocking_fixture: classification {expect}", r["classification"] == expect,
              f"{r['classification']} far_max_tail={r['far_max_tail']:.4g}")
    ctx.summary.update({k: v for k, v in r.items() if k != "hist"})


def _monotone_outcomes(results: list) -> bool:
    seen_complete = False
    for r in sorted(results, key=lambda r: r["R"]):
        if r["classification"] == F.COMPLETE:
            seen_complete = True
        elif seen_complete:
            return False
    return True


def scaling_sweep(ctx: Context) -> None:
    cfg = ctx.cfg
    base = _domain(ctx)
    Rs = sorted(float(r) for r in cfg.p("R_values", [1.0, 2.0, 3.0, 4.0]))
    results = []
    for R in Rs:
        r = _fixture_run(ctx, base, R)
        r.pop("hist")
        results.append(r)
    lines = [FIXTURE_HEADER] + [_fixture_row(r) for r in results]
    ctx.check("scaling_sweep: outcomes monotone in R", _monotone_outcomes(results),
              " ".join(f"{r['R']:g}:{r['classification']}" for r in results))
    for key, want in (cfg.p("expect") or {}).items():
        got = next((r["classification"] for r in results if r["R"] == float(key)), None)
        ctx.check(f"scaling_sweep: R={float(key):g} is {want}", got == want, str(got))
    bracket = None
    iters = int(cfg.p("bisect_iters", 0))
    if iters:
        lo = max((r["R"] for r in results if r["classification"] != F.COMPLETE), default=None)
        hi = min((r["R"] for r in results if r["classification"] == F.COMPLETE), default=None)
        if lo is not None and hi is not None and lo < hi:
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                r = _fixture_run(ctx, base, mid)
                r.pop("hist")
                lines.append(_fixture_row(r))
                if r["classification"] == F.COMPLETE:
                    hi = mid
                else:
                    lo = mid
            bracket = [lo, hi]
    ctx.write("sweep.csv", "\r\n".join(lines) + "\r\n")
    ctx.summary.update({"results": results, "R0_bracket": bracket})


SCENARIO_FUNCS = {
    "straight_cylinder": straight_cylinder, "multi_branch": multi_branch,
    "entire_solution": entire_solution, "barrier_audit": barrier_audit,
    "spreading_lemmas": spreading_lemmas, "star_shaped_suite": star_shaped_suite,
    "scaling_sweep": scaling_sweep, "blocking_fixture": blocking_fixture,
    "mean_speed": mean_speed,
}
