"""Interfaces, front positions, global mean speed, shifts and outcome labels."""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .geometry import BranchedDomain, distance_field
from .pde import Field, FieldHistory

COMPLETE, BLOCKED, UNDECIDED = "Complete", "Blocked", "Undecided"


class FrontAbsent(ValueError):
    pass


@dataclass
class Interface:
    time: float
    cells: np.ndarray
    level: float = 0.5

    def __len__(self) -> int:
        return int(self.cells.size)

    @property
    def empty(self) -> bool:
        return self.cells.size == 0


def _straddle(values: np.ndarray, nbr: np.ndarray, level: float) -> np.ndarray:
    above = values >= level
    nb_above = np.where(nbr >= 0, above[np.maximum(nbr, 0)], above[:, None])
    return np.any(nb_above != above[:, None], axis=1)


def extract_interface(field: Field, level: float = 0.5) -> Interface:
    """Cells whose value and some 4-neighbor's value lie on opposite sides of level."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    cells = np.flatnonzero(_straddle(field.values, field.domain.nbr, level))
    return Interface(field.time, cells, level)


def branch_front_position(field: Field, j: int, level: float = 0.5, s_min: float | None = None
                          ) -> float:
    """Largest branch coordinate at which u crosses ``level`` in branch j.

    Crossings are located by linear interpolation between straddling
    neighbors lying in the branch beyond ``s_min`` (default L).
    """
    d = field.domain
    s_min = d.L if s_min is None else s_min
    inb = d.in_branch(j) & (d.coord(j) > s_min)
    s = d.coord(j)
    u = field.values
    best = -math.inf
    for k in range(4):
        q = d.nbr[:, k]
        ok = inb & (q >= 0)
        a = np.flatnonzero(ok)
        b = q[a]
        keep = inb[b]
        a, b = a[keep], b[keep]
        ua, ub = u[a], u[b]
        cross = (ua >= level) & (ub < level)
        if not cross.any():
            continue
        a, b, ua, ub = a[cross], b[cross], ua[cross], ub[cross]
        pos = s[a] + (level - ua) * (s[b] - s[a]) / (ub - ua)
        best = max(best, float(pos.max()))
    if best == -math.inf:
        raise FrontAbsent(f"front absent in branch {j}")
    return best


def position_series(history: FieldHistory, j: int, level: float = 0.5) -> tuple:
    ts, ps = [], []
    for k, t in enumerate(history.times):
        try:
            ps.append(branch_front_position(history.field_at(k), j, level))
            ts.append(t)
        except FrontAbsent:
            pass
    return np.asarray(ts), np.asarray(ps)


def regression_speed(times, positions) -> float:
    if len(times) < 2:
        raise ValueError("need two front positions for a speed")
    return float(np.polyfit(times, positions, 1)[0])


# ------------------------------------------------------ global mean speed

@dataclass
class SpeedEstimate:
    gamma: float
    ci: tuple
    gaps: np.ndarray
    distances: np.ndarray
    intercept: float

    def __iter__(self):
        return iter((self.gamma, self.ci))


def estimate_global_mean_speed(history: FieldHistory, gap_min: float, level: float = 0.5,
                               max_snapshots: int = 40, window: tuple | None = None
                               ) -> SpeedEstimate:
    """Slope of d(Gamma_t, Gamma_s) against |t - s| over pairs with gap >= gap_min.

    One fast-marching solve per snapshot gives the distance from its
    interface to every cell, so each pair costs a min over target cells.
    ``window`` restricts both snapshots of a pair to a time range, which
    keeps a transient (a junction passage) out of the fit.
    """
    times = np.asarray(history.times)
    lo, hi = (times[0], times[-1]) if window is None else window
    idx = np.flatnonzero((times >= lo - 1e-9) & (times <= hi + 1e-9))
    if idx.size < 2 or times[idx[-1]] - times[idx[0]] < 3 * gap_min:
        raise ValueError("history must span at least 3 * gap_min")
    if idx.size > max_snapshots:
        idx = idx[np.unique(np.linspace(0, idx.size - 1, max_snapshots).round().astype(int))]
    d = history.domain
    ifaces = {k: extract_interface(history.field_at(k), level) for k in idx}
    gaps, dists = [], []
    for a in idx:
        if ifaces[a].empty:
            continue
        T = None
        for b in idx:
            if b <= a or ifaces[b].empty or times[b] - times[a] < gap_min:
                continue
            if T is None:
                T = distance_field(d, ifaces[a].cells)
            dist = float(np.min(T[ifaces[b].cells]))
            if np.isfinite(dist):
                gaps.append(times[b] - times[a])
                dists.append(dist)
    if not gaps:
        raise ValueError("no admissible snapshot pairs for the speed estimate")
    g, dd = np.asarray(gaps), np.asarray(dists)
    if np.ptp(g) > 0:
        slope, icpt = np.polyfit(g, dd, 1)
    else:
        slope, icpt = float(np.mean(dd / g)), 0.0
    r = dd / g
    return SpeedEstimate(float(slope), (float(r.min()), float(r.max())), g, dd, float(icpt))


# ------------------------------------------------------------------ shifts

@dataclass
class ShiftFit:
    tau: float
    sup_err: float
    normalized_err: float
    times: list

    def __iter__(self):
        return iter((self.tau, self.sup_err))


def _shift_errors(history, k_list, j, profile, tau, s_min, beta, floor):
    d = history.domain
    cells = np.flatnonzero(d.in_branch(j) & (d.coord(j) > s_min))
    s = d.coord(j)[cells]
    worst, worst_n = 0.0, 0.0
    for k in k_list:
        xi = s - profile.c_f * history.times[k] + tau
        ref = np.asarray(profile.phi_at(xi))
        err = np.abs(history.fields[k][cells] - ref)
        worst = max(worst, float(err.max()))
        pb = np.asarray(profile.phi_pow(xi, beta))
        keep = pb >= floor
        if keep.any():
            worst_n = max(worst_n, float((err[keep] / pb[keep]).max()))
    return worst, worst_n


def fit_shift(history: FieldHistory, j: int, profile, window: tuple, s_min: float | None = None,
              beta: float = 0.5, floor: float = 1e-8, level: float = 0.5) -> ShiftFit:
    """tau minimizing the sup over branch j of |u - phi(x.e_j - c_f t + tau)| on the window."""
    t0, t1 = window
    ks = [k for k, t in enumerate(history.times) if t0 - 1e-9 <= t <= t1 + 1e-9]
    if not ks:
        raise ValueError("minimization window contains no snapshot")
    d = history.domain
    s_min = d.L if s_min is None else s_min
    k_last = ks[-1]
    pos = branch_front_position(history.field_at(k_last), j, level, s_min)
    tau0 = profile.c_f * history.times[k_last] - pos

    def obj(tau):
        return _shift_errors(history, ks, j, profile, tau, s_min, beta, floor)[0]

    res = minimize_scalar(obj, bracket=(tau0 - 1.0, tau0 + 1.0), method="golden",
                          options={"xtol": 1e-6})
    tau = float(res.x)
    sup, norm = _shift_errors(history, ks, j, profile, tau, s_min, beta, floor)
    return ShiftFit(tau, sup, norm, [history.times[k] for k in ks])


# ---------------------------------------------------------- classification

def classify_propagation(history: FieldHistory, probes, theta: float, far_cells=None,
                         incoming_cells=None, complete_level: float = 0.95,
                         blocked_margin: float = 0.05, tail_fraction: float = 0.25) -> str:
    """Complete, Blocked or Undecided from the recorded fields.

    ``probes`` are cell indices or (k, 2) points.  Blocked needs the far
    cells to stay below theta + margin over the final ``tail_fraction`` of
    the run while the incoming cells are saturated.
    """
    d = history.domain
    probes = _cells(d, probes)
    last = history.fields[-1]
    prev = history.fields[-2] if len(history) > 1 else last
    if last[probes].min() >= complete_level and np.all(last[probes] >= prev[probes] - 1e-12):
        return COMPLETE
    if far_cells is not None:
        far = _cells(d, far_cells)
        t = np.asarray(history.times)
        t_cut = t[-1] - tail_fraction * (t[-1] - t[0])
        tail = [k for k in range(len(t)) if t[k] >= t_cut - 1e-9]
        cold = all(history.fields[k][far].max() <= theta + blocked_margin for k in tail)
        inc = probes if incoming_cells is None else _cells(d, incoming_cells)
        if cold and last[inc].min() >= complete_level:
            return BLOCKED
    return UNDECIDED


def _cells(domain: BranchedDomain, pts) -> np.ndarray:
    arr = np.asarray(pts)
    if arr.dtype.kind in "iu":
        return arr.ravel()
    arr = np.atleast_2d(arr.astype(float))
    c = domain.cell_of(arr[:, 0], arr[:, 1])
    if np.any(c < 0):
        raise ValueError("probe outside the domain")
    return c


def monotonicity_margin(history: FieldHistory, a: float, b: float) -> float:
    """min of (u(t+D) - u(t))/D over recorded pairs, on cells with a <= u(t) <= b."""
    if not 0.0 < a <= b < 1.0:
        raise ValueError("need 0 < a <= b < 1")
    best = math.inf
    for k in range(len(history) - 1):
        u0, u1 = history.fields[k], history.fields[k + 1]
        dt = history.times[k + 1] - history.times[k]
        sel = (u0 >= a) & (u0 <= b)
        if dt <= 0 or not sel.any():
            continue
        best = min(best, float(((u1[sel] - u0[sel]) / dt).min()))
    if best == math.inf:
        raise ValueError("no cells with values in [a, b]")
    return best


def containment_table(history: FieldHistory, M_values, level: float = 0.5, skip: int = 0) -> list:
    """eps(M) = max of 1 - u over cells at distance >= M from Gamma_t on the side u >= level."""
    d = history.domain
    worst = np.zeros(len(M_values))
    for k in range(skip, len(history)):
        f = history.field_at(k)
        gam = extract_interface(f, level)
        if gam.empty:
            continue
        T = distance_field(d, gam.cells)
        adv = f.values >= level
        for m, M in enumerate(M_values):
            sel = adv & (T >= M)
            if sel.any():
                worst[m] = max(worst[m], float((1.0 - f.values[sel]).max()))
    return [(float(M), float(e)) for M, e in zip(M_values, worst)]


def past_asymptotics_error(history: FieldHistory, profile, i: int, shift, k_list,
                           beta: float = 0.5, floor: float = 1e-8) -> list:
    """sup over branch i of |u - phi(xi)| / phi^beta(xi), xi = -x.e_i - c_f t + shift(t)."""
    d = history.domain
    cells = np.flatnonzero(d.in_branch(i))
    s = d.coord(i)[cells]
    out = []
    for k in k_list:
        t = history.times[k]
        xi = -s - profile.c_f * t + shift(t)
        pb = np.asarray(profile.phi_pow(xi, beta))
        keep = pb >= floor
        err = np.abs(history.fields[k][cells][keep] - np.asarray(profile.phi_at(xi[keep])))
        out.append((float(t), float((err / pb[keep]).max())))
    return out


# ----------------------------------------------------------------- reports

@dataclass
class FrontReport:
    positions: dict = field(default_factory=dict)  # branch -> (times, positions)
    speeds: dict = field(default_factory=dict)
    shifts: dict = field(default_factory=dict)
    sup_errors: dict = field(default_factory=dict)
    classification: str = UNDECIDED
    gamma: float = float("nan")
    ci: tuple = (float("nan"), float("nan"))
    extra: dict = field(default_factory=dict)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("time,branch,position\r\n")
        for j in sorted(self.positions):
            ts, ps = self.positions[j]
            for t, p in zip(ts, ps):
                buf.write(f"{float(t)!r},{j},{float(p)!r}\r\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {"gamma": self.gamma, "ci": list(self.ci),
                "tau_star": {str(k): v for k, v in self.shifts.items()},
                "sup_err": {str(k): v for k, v in self.sup_errors.items()},
                "speeds": {str(k): v for k, v in self.speeds.items()},
                "classification": self.classification, **self.extra}

    def to_json(self, path=None) -> str:
        text = json.dumps(_finite(self.summary()), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _finite(obj):
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "branchfront"
    return plt


def plot_positions(report: FrontReport, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for j in sorted(report.positions):
        ts, ps = report.positions[j]
        ax.plot(ts, ps, label=f"branch {j}")
    ax.set_xlabel("t")
    ax.set_ylabel("front position")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_distance_gap(est: SpeedEstimate, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.scatter(est.gaps, est.distances, s=6)
    g = np.linspace(0, est.gaps.max(), 2)
    ax.plot(g, est.intercept + est.gamma * g, color="k", lw=1, label=f"slope {est.gamma:.4f}")
    ax.set_xlabel("|t - s|")
    ax.set_ylabel("geodesic distance between interfaces")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
