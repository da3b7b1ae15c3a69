"""Explicit monotone time stepping of u_t = Lap u + f(u) with Neumann walls.

The update is forward Euler with the five-point Laplacian on the active
cells.  A missing neighbor takes the value of the cell itself (mirror
ghost), so there is no flux through the stair-cased boundary.  Under the
step restriction checked by :class:`StepperConfig` the update is a
nondecreasing function of every input value, which gives the discrete
comparison principle.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numba
import numpy as np

from .geometry import BranchedDomain, GeometryError, distance_field
from .nonlinearity import CombustionNonlinearity


class NumericalBlowUp(RuntimeError):
    pass


@dataclass
class Field:
    values: np.ndarray
    time: float
    domain: BranchedDomain

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.domain.n_cells,):
            raise ValueError("field size does not match the domain")

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.time, self.domain)

    def dense(self, fill=np.nan) -> np.ndarray:
        d = self.domain
        out = np.full(d.index.shape, fill)
        out[d.cj, d.ci] = self.values
        return out

    def snapshot_bytes(self) -> bytes:
        d = self.domain
        ny, nx = d.index.shape
        head = {"time": float(self.time), "nx": int(nx), "ny": int(ny), "h": float(d.h),
                "i0": int(d.i0), "j0": int(d.j0)}
        return (json.dumps(head) + "\n").encode() + self.dense().astype("<f8").tobytes()

    def write_snapshot(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.snapshot_bytes())


def read_snapshot(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        head = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    return head, data.reshape(head["ny"], head["nx"])


def max_stable_dt(h: float, nl: CombustionNonlinearity | None = None) -> float:
    """Largest dt keeping the update monotone: dt (4/h^2 + max(-f')) <= 1."""
    neg = 0.0 if nl is None else max(-float(nl.df1), 0.0)
    return 1.0 / (4.0 / (h * h) + neg)


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    cfl_safety: float = 0.9
    record_every: float = 1.0

    def validate(self, h: float, nl: CombustionNonlinearity | None = None) -> None:
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.dt <= 0 or self.record_every <= 0:
            raise ValueError("dt and record_every must be positive")
        if self.dt > self.cfl_safety * h * h / 4.0 * (1 + 1e-12):
            raise ValueError(f"dt = {self.dt:.4g} violates dt <= cfl_safety*h^2/4 = "
                             f"{self.cfl_safety * h * h / 4:.4g}")
        if nl is not None and self.dt > max_stable_dt(h, nl) * (1 + 1e-12):
            raise ValueError("dt too large for a monotone update with this reaction term")

    @classmethod
    def for_grid(cls, h: float, nl: CombustionNonlinearity | None = None,
                 cfl_safety: float = 0.9, record_every: float = 1.0) -> "StepperConfig":
        dt = cfl_safety * min(h * h / 4.0, max_stable_dt(h, nl))
        # an integer number of steps per record interval
        n = max(int(math.ceil(record_every / dt)), 1)
        return cls(dt=record_every / n, cfl_safety=cfl_safety, record_every=record_every)

    @classmethod
    def from_dict(cls, d: dict, h: float, nl=None) -> "StepperConfig":
        safety = float(d.get("cfl_safety", 0.9))
        rec = float(d.get("record_every", 1.0))
        if "dt" in d:
            cfg = cls(float(d["dt"]), safety, rec)
            cfg.validate(h, nl)
            return cfg
        return cls.for_grid(h, nl, safety, rec)


_TINY = 1e-280  # results below this are flushed to zero to keep denormals out of the loop


@numba.njit(parallel=True, cache=True)
def _euler_steps(u, nbr, nsteps, dt, h, theta, amp, p, df1):
    n = u.shape[0]
    a = u.copy()
    b = np.empty_like(u)
    lam = dt / (h * h)
    square = p == 2.0
    for _ in range(nsteps):
        for c in numba.prange(n):
            v = a[c]
            s = 0.0
            for d in range(4):
                q = nbr[c, d]
                s += a[q] if q >= 0 else v
            if v <= theta:
                fv = 0.0
            elif v >= 1.0:
                fv = df1 * (v - 1.0)
            elif square:
                fv = amp * (v - theta) * (v - theta) * (1.0 - v)
            else:
                fv = amp * (v - theta) ** p * (1.0 - v)
            w = v + lam * (s - 4.0 * v) + dt * fv
            if -_TINY < w < _TINY:
                w = 0.0
            b[c] = w
        a, b = b, a
    return a


def set_threads(n: int | None) -> None:
    if n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def advance(values: np.ndarray, domain: BranchedDomain, nl: CombustionNonlinearity, dt: float,
            nsteps: int) -> np.ndarray:
    out = _euler_steps(np.ascontiguousarray(values, dtype=float), domain.nbr, int(nsteps),
                       float(dt), float(domain.h), nl.theta, nl.amplitude, nl.exponent, nl.df1)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowUp("numerical blow-up: non-finite values after stepping")
    return out


def step(field: Field, nl: CombustionNonlinearity, cfg: StepperConfig) -> Field:
    cfg.validate(field.domain.h, nl)
    vals = advance(field.values, field.domain, nl, cfg.dt, 1)
    return Field(vals, field.time + cfg.dt, field.domain)


Observer = Callable[[Field], dict]


@dataclass
class FieldHistory:
    domain: BranchedDomain
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    records: list = field(default_factory=list)  # (time, observable, value)

    def append(self, f: Field, observers: Iterable[Observer] = (), keep: bool = True) -> None:
        self.times.append(float(f.time))
        self.fields.append(f.values.copy() if keep else None)
        for obs in observers:
            for k, v in obs(f).items():
                self.records.append((float(f.time), k, float(v)))

    def __len__(self) -> int:
        return len(self.times)

    def field_at(self, k: int) -> Field:
        return Field(self.fields[k], self.times[k], self.domain)

    @property
    def last(self) -> Field:
        return self.field_at(len(self.times) - 1)

    def nearest(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))

    def observer_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("time,observable,value\r\n")
        for t, k, v in self.records:
            buf.write(f"{t!r},{k},{v!r}\r\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def run(field: Field, nl: CombustionNonlinearity, cfg: StepperConfig, T: float,
        observers: Iterable[Observer] = (), keep_fields: bool = True) -> FieldHistory:
    """Step until time T, recording every ``cfg.record_every`` time units.

    Record times are ``t0 + k * record_every`` plus the final time.  The
    step is shrunk slightly so that an integer number of steps fits each
    record interval; it never grows.
    """
    if T < field.time:
        raise ValueError("final time precedes the initial time")
    cfg.validate(field.domain.h, nl)
    observers = list(observers)
    hist = FieldHistory(field.domain)
    hist.append(field, observers, keep_fields)
    t0 = field.time
    u = field.values
    k = 0
    while True:
        t_prev = t0 + k * cfg.record_every
        if t_prev >= T - 1e-12:
            break
        t_next = min(t0 + (k + 1) * cfg.record_every, T)
        span = t_next - t_prev
        nsteps = max(int(math.ceil(span / cfg.dt - 1e-9)), 1)
        u = advance(u, field.domain, nl, span / nsteps, nsteps)
        k += 1
        hist.append(Field(u, t_next, field.domain), observers, keep_fields)
    return hist


# ------------------------------------------------------------ initial data

def init_planar_front(domain: BranchedDomain, profile, i: int, x0: float) -> Field:
    """Front coming from branch i with its 1/2-level at branch coordinate x0.

    In branch i the value is phi(x0 - s).  Elsewhere the branch coordinate
    is continued by the fast-marching distance from branch i, so the data
    decays along geodesics into the rest of the domain.
    """
    b = domain.branches[i]
    if not 0.0 < x0 < b.length:
        raise GeometryError("front position outside the branch")
    inb = domain.in_branch(i)
    s = domain.coord(i)
    src = np.flatnonzero(inb)
    T = distance_field(domain, src, -s[src])
    xi = np.where(inb, x0 - s, x0 + T)
    return Field(np.asarray(profile.phi_at(xi), dtype=float), 0.0, domain)


def init_plateau(domain: BranchedDomain, i: int, l: float, R: float, level: float,
                 outside: float = 0.0) -> Field:
    """``level`` on the branch cells with |x.e_i - l| < R, ``outside`` elsewhere."""
    if l - R <= domain.L:
        raise GeometryError("plateau reaches the junction: need l - R > L")
    if l + R >= domain.branches[i].length:
        raise GeometryError("plateau outside branch")
    s = domain.coord(i)
    inside = domain.in_branch(i) & (np.abs(s - l) < R)
    return Field(np.where(inside, level, outside).astype(float), 0.0, domain)


def field_from_function(domain: BranchedDomain, fn, time: float = 0.0) -> Field:
    return Field(np.asarray(fn(domain.x, domain.y), dtype=float), time, domain)
