"""Sub- and supersolutions built from the planar front, and their grid checks.

Every barrier is evaluated in closed form from a :class:`WaveProfile`; grid
fields are only used to measure discretization error.  Constants come in
two flavors: ``proof`` values, which satisfy every inequality listed for
them and are reported with both sides, and ``desk`` values used to run
experiments, certified by evaluating the exact residual on the grid.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import BranchedDomain
from .nonlinearity import eval_f, epsilon0, lipschitz_bound
from .pde import StepperConfig, advance, init_plateau
from .wave1d import WaveProfile, lambda_of

BETA = 0.5


class CutoffError(RuntimeError):
    pass


class HorizonError(ValueError):
    pass


# ------------------------------------------------------------- small tools

def smoothstep(u):
    """C2 quintic ramp from 0 (u <= 0) to 1 (u >= 1) with derivatives."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    s = u * u * u * (10 - 15 * u + 6 * u * u)
    ds = 30 * u * u * (1 - u) ** 2
    d2s = 60 * u * (1 - u) * (1 - 2 * u)
    return s, ds, d2s


SMOOTH_D1 = 1.875  # max of the ramp slope
SMOOTH_D2 = 10.0 / math.sqrt(3.0)  # max |ramp''|


@dataclass(frozen=True)
class Inequality:
    name: str
    lhs: float
    rhs: float
    relation: str = "<="

    @property
    def holds(self) -> bool:
        ops = {"<=": self.lhs <= self.rhs, "<": self.lhs < self.rhs,
               ">=": self.lhs >= self.rhs, ">": self.lhs > self.rhs}
        return bool(ops[self.relation])

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "relation": self.relation,
                "rhs": self.rhs, "holds": self.holds}


def _right_threshold(xi: np.ndarray, ok: np.ndarray) -> float:
    """Smallest grid point C with ``ok`` true on every sample xi >= C."""
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return float(xi[0])
    k = bad[-1] + 1
    if k >= xi.size:
        raise ValueError("condition fails up to the end of the sampled profile")
    return float(xi[k])


def _left_threshold(xi: np.ndarray, ok: np.ndarray) -> float:
    """Smallest C with ``ok`` true on every sample xi <= -C."""
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return float(-xi[-1])
    k = bad[0] - 1
    if k < 0:
        raise ValueError("condition fails down to the start of the sampled profile")
    return float(-xi[k])


def min_slope(profile: WaveProfile, a: float, b: float, n: int = 20001) -> float:
    """min |phi'| over [a, b] (tails included)."""
    xs = np.linspace(a, b, n)
    return float(np.min(np.abs(profile.dphi_at(xs))))


# ------------------------------------------------------------ front data

@dataclass(frozen=True)
class FrontConstants:
    c_f: float
    beta: float
    Lam: float  # Lambda(-beta c_f) < 0
    df1: float
    eps0: float
    L_f: float
    sup_r1: float  # sup |phi'/phi|
    sup_r2: float  # sup |phi''/phi|


def front_constants(profile: WaveProfile, beta: float = BETA) -> FrontConstants:
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    nl = profile.nl
    e0 = epsilon0(nl)
    r1, r2 = profile.sup_ratios()
    return FrontConstants(profile.c_f, beta, lambda_of(-beta * profile.c_f, profile.c_f), nl.df1,
                          e0, lipschitz_bound(nl, e0), r1, r2)


# ------------------------------------------------------------------ zeta

@dataclass(frozen=True)
class StripCutoff:
    """zeta = g(d) + C_hat, d the distance to the strip wall.

    g'(0) = -1 and g vanishes for d >= d0, so the outward normal derivative
    of zeta on the wall equals 1.
    """
    width: float
    d0: float
    C_hat: float

    def hat(self, tr):
        d = 0.5 * self.width - np.abs(np.asarray(tr, dtype=float))
        u = np.clip(d / self.d0, 0.0, 1.0)
        # g(d) = int_d^d0 (1 - S(r/d0)) dr, S the quintic ramp
        G = self.d0 * (0.5 - (u - (2.5 * u ** 4 - 3 * u ** 5 + u ** 6)))
        G = np.where(d >= self.d0, 0.0, G)
        return np.where(d < 0, 0.5 * self.d0 - d, G)

    def hat_derivs(self, tr):
        """(dz/dtr, d2z/dtr2) of zeta along the transverse coordinate."""
        tr = np.asarray(tr, dtype=float)
        d = 0.5 * self.width - np.abs(tr)
        s, ds, _ = smoothstep(d / self.d0)
        gp = np.where(d < 0, -1.0, -(1.0 - s))
        gpp = np.where(d < 0, 0.0, ds / self.d0)
        sgn = np.where(tr >= 0, 1.0, -1.0)
        return -gp * sgn, gpp

    def __call__(self, tr):
        return self.hat(tr) + self.C_hat

    @property
    def zmax(self) -> float:
        return 0.5 * self.d0 + self.C_hat

    @property
    def zmin(self) -> float:
        return self.C_hat


@dataclass
class ZetaField:
    branch: int
    cutoff: StripCutoff
    values: np.ndarray  # zeta on the cells of H_i, nan elsewhere
    margin: float  # min over cells of rhs - lhs in the discrete inequality
    normal_derivative: float
    rate: float  # min(-f'(1)/8, -Lambda/8)


def _zeta_discrete(domain: BranchedDomain, i: int, cut: StripCutoff, cells: np.ndarray):
    """Discrete gradient norm and Laplacian of zeta at ``cells``.

    Neighbor values come from the closed form, so cells next to the wall see
    the continuation of zeta rather than a mirrored copy.
    """
    n = np.asarray(domain.branches[i].normal, dtype=float)
    h = domain.h
    tr = domain.transverse(i)[cells]
    z0 = cut(tr)
    zx_p, zx_m = cut(tr + h * n[0]), cut(tr - h * n[0])
    zy_p, zy_m = cut(tr + h * n[1]), cut(tr - h * n[1])
    lap = (zx_p + zx_m + zy_p + zy_m - 4 * z0) / (h * h)
    grad = np.hypot((zx_p - zx_m) / (2 * h), (zy_p - zy_m) / (2 * h))
    return z0, grad, lap


def build_zeta(domain: BranchedDomain, i: int, nl, c_f: float, beta: float = BETA,
               profile: WaveProfile | None = None, d0: float | None = None,
               c_max: float = 1e6) -> ZetaField:
    """Cutoff zeta_i with the smallest additive constant passing the discrete test."""
    if profile is None:
        from .wave1d import compute_wave
        profile = compute_wave(nl)
    b = domain.branches[i]
    d0 = min(1.0, 0.25 * b.width) if d0 is None else d0
    sup_r1 = profile.sup_ratios()[0]
    rate = min(-nl.df1 / 8.0, -lambda_of(-beta * c_f, c_f) / 8.0)
    cells = np.flatnonzero(domain.in_branch(i))

    def margin(C):
        cut = StripCutoff(b.width, d0, C)
        z, g, lap = _zeta_discrete(domain, i, cut, cells)
        return float(np.min(rate * z - lap - 2 * (1 + sup_r1) * g))

    lo, hi = 0.0, 1.0
    while margin(hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > c_max:
            raise CutoffError("cutoff construction failed: no constant below the cap works")
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if margin(mid) >= 0:
            hi = mid
        else:
            lo = mid
    cut = StripCutoff(b.width, d0, hi)
    vals = np.full(domain.n_cells, np.nan)
    vals[cells] = cut(domain.transverse(i)[cells])
    dz, _ = cut.hat_derivs(0.5 * b.width)
    return ZetaField(i, cut, vals, margin(hi), float(dz), rate)


# ------------------------------------------------------- junction geometry

@dataclass(frozen=True)
class Frame:
    """Branch frames needed to evaluate barriers at arbitrary points."""
    anchors: np.ndarray
    dirs: np.ndarray
    normals: np.ndarray
    widths: np.ndarray
    L: float

    @classmethod
    def of(cls, domain: BranchedDomain) -> "Frame":
        return cls(np.asarray(domain.anchors, dtype=float),
                   np.array([b.direction for b in domain.branches], dtype=float),
                   np.array([b.normal for b in domain.branches], dtype=float),
                   np.array([b.width for b in domain.branches], dtype=float), float(domain.L))

    def local(self, i: int, px, py):
        dx, dy = px - self.anchors[i, 0], py - self.anchors[i, 1]
        s = dx * self.dirs[i, 0] + dy * self.dirs[i, 1]
        tr = dx * self.normals[i, 0] + dy * self.normals[i, 1]
        inside = (s > 0) & (np.abs(tr) <= 0.5 * self.widths[i])
        return s, tr, inside


def _points(x):
    if isinstance(x, BranchedDomain):
        return x.x, x.y, False
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 1
    arr = np.atleast_2d(arr)
    return arr[:, 0], arr[:, 1], scalar


# ------------------------------------------------------- section-2 constants

@dataclass
class BarrierConstants:
    """Constants of the entire-solution barriers, with their defining inequalities."""
    front: FrontConstants
    L: float
    zeta_max: float
    zeta_min: float
    eps: float
    eps_bounds: dict
    mu: float
    tilde_eps: float
    eps_prime: float
    C_sub: float
    C: float
    kappa: float
    rho_proof: float
    T_proof: float
    rho_sup_proof: float
    T_eps_proof: float
    eta_psi: tuple
    inequalities: list = field(default_factory=list)

    def to_dict(self) -> dict:
        skip = {"inequalities", "front", "eps_bounds", "eta_psi"}
        d = {k: v for k, v in self.__dict__.items() if k not in skip}
        d["front"] = dict(self.front.__dict__)
        d["eps_bounds"] = dict(self.eps_bounds)
        d["inequalities"] = [q.to_dict() for q in self.inequalities]
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# eta = exp(-mu Psi(s - L - 2)) on [0, 1] with Psi(0)=Psi'(0)=Psi''(0)=0,
# Psi(1)=3, Psi'(1)=1, Psi''(1)=0.
_PSI = (26.0, -38.0, 15.0)


def _psi(u):
    a3, a4, a5 = _PSI
    u = np.asarray(u, dtype=float)
    inside = np.clip(u, 0.0, 1.0)
    p = a3 * inside ** 3 + a4 * inside ** 4 + a5 * inside ** 5
    dp = 3 * a3 * inside ** 2 + 4 * a4 * inside ** 3 + 5 * a5 * inside ** 4
    d2p = 6 * a3 * inside + 12 * a4 * inside ** 2 + 20 * a5 * inside ** 3
    p = np.where(u > 1, 3.0 + (u - 1), p)
    dp = np.where(u > 1, 1.0, dp)
    d2p = np.where(u > 1, 0.0, d2p)
    return p, dp, d2p


def eta_ratio_sup(mu: float) -> float:
    """sup |eta''/eta| = sup |mu^2 Psi'^2 - mu Psi''|."""
    u = np.linspace(0, 1, 20001)
    _, dp, d2p = _psi(u)
    return float(np.max(np.abs(mu * mu * dp * dp - mu * d2p)))


def _eps_for_eta(fc: FrontConstants) -> float:
    target = -fc.Lam / 4.0
    lo, hi = 0.0, fc.c_f
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if eta_ratio_sup(mid / fc.c_f) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def barrier_constants(profile: WaveProfile, domain: BranchedDomain, beta: float = BETA,
                      eps_factor: float = 0.5, zetas: Sequence[ZetaField] | None = None
                      ) -> BarrierConstants:
    fc = front_constants(profile, beta)
    nl = profile.nl
    c, Lam, df1 = fc.c_f, fc.Lam, fc.df1
    if zetas is None:
        zetas = [build_zeta(domain, k, nl, c, beta, profile) for k in range(domain.m)]
    zmax = max(z.cutoff.zmax for z in zetas)
    zmin = min(z.cutoff.zmin for z in zetas)
    bounds = {
        "c_f": c, "theta/2": nl.theta / 2, "eps0/2": fc.eps0 / 2,
        "c_f|f'(1)|/8": c * abs(df1) / 8, "c_f|Lambda|/8": c * abs(Lam) / 8,
        "|Lambda|/24": abs(Lam) / 24, "eps0*zeta_max/zeta_min": fc.eps0 * zmax / zmin,
        "eta cutoff": _eps_for_eta(fc),
    }
    eps = eps_factor * min(bounds.values())
    mu = eps / c
    teps = eps / zmax
    epsp = zmin * teps
    L = float(domain.L)

    xi = profile.xi_grid
    r1 = profile.dphi / profile.phi
    r2 = np.asarray(profile.ratio2_at(xi))
    phi = profile.phi
    Cs = {
        "phi^(1-b) <= eps' right": profile.xi_of_level(epsp ** (1 / (1 - beta))),
        "phi >= 1-eps' left": -profile.xi_of_gap(epsp),
        "-3c/2 < phi'/phi < -c/2": _right_threshold(xi, (r1 > -1.5 * c) & (r1 < -0.5 * c)),
        "phi''/phi - (phi'/phi)^2 <= -Lambda/4": _right_threshold(xi, r2 - r1 ** 2 <= -Lam / 4),
        "c b phi'/phi + b^2 (phi'/phi)^2 <= 3 Lambda/4":
            _right_threshold(xi, c * beta * r1 + beta ** 2 * r1 ** 2 <= 0.75 * Lam),
        "phi''/phi <= -f'(1)/8 left": _left_threshold(xi, r2 <= -df1 / 8),
    }
    C_sub = max(max(Cs.values()), 0.0)
    pv_coef = SMOOTH_D2 + 2 * SMOOTH_D1 * fc.sup_r1
    pv_level = (-eps * Lam / 4 / pv_coef) ** (1 / (1 - beta))
    C = max(C_sub, profile.xi_of_level(pv_level))
    kappa = min_slope(profile, -C, C)
    rho_p = math.exp(mu * (C + L)) * (mu ** 2 - df1 / 8 + beta * fc.sup_r2 + fc.L_f) / kappa
    T_p = min(-(L + C) / c, math.log(min(1.0, -Lam / (12 * c)) / rho_p) / eps) - 1.0
    rho_sp = math.exp(mu * (C + L + 1)) * (abs(df1) / 8 + fc.L_f) / kappa
    Te_p = min(math.log(1.0 / rho_sp) / eps, -(C + 2 * L + 4) / c) - 1.0

    iq = [Inequality(f"eps < {k}", eps, v, "<") for k, v in bounds.items()]
    lo, hi = 1 - 2 * fc.eps0, 1 + 2 * fc.eps0
    us = np.linspace(lo, hi, 4001)[1:-1]
    from .nonlinearity import eval_df
    d = eval_df(nl, us)
    iq += [Inequality("3/2 f'(1) <= min f' near 1", 1.5 * df1, float(d.min())),
           Inequality("max f' near 1 <= 3/4 f'(1)", float(d.max()), 0.75 * df1),
           Inequality("mu = eps/c_f", mu * c, eps, "<="),
           Inequality("sup|eta''/eta| <= -Lambda/4", eta_ratio_sup(mu), -Lam / 4),
           Inequality("eps' <= eps", epsp, eps),
           Inequality("phi^(1-b)(C) <= eps'", float(profile.phi_pow(C, 1 - beta)), epsp),
           Inequality("rho kappa >= e^(mu(C+L)) (...)", rho_p * kappa,
                      math.exp(mu * (C + L)) * (mu ** 2 - df1 / 8 + beta * fc.sup_r2 + fc.L_f),
                      ">="),
           Inequality("c_f T <= -L - C", c * T_p, -L - C),
           Inequality("rho e^(eps T) <= min(1, -Lambda/(12 c_f))", rho_p * math.exp(eps * T_p),
                      min(1.0, -Lam / (12 * c))),
           Inequality("rho' e^(eps T_eps) <= 1", rho_sp * math.exp(eps * Te_p), 1.0),
           Inequality("c_f T_eps <= -C - 2L - 4", c * Te_p, -C - 2 * L - 4)]
    for z in zetas:
        iq.append(Inequality(f"zeta_{z.branch}: discrete cutoff inequality margin", z.margin, 0.0,
                             ">="))
        iq.append(Inequality(f"zeta_{z.branch}: normal derivative > 0", z.normal_derivative, 0.0,
                             ">"))
    return BarrierConstants(fc, L, zmax, zmin, eps, bounds, mu, teps, epsp, C_sub, C, kappa,
                            rho_p, T_p, rho_sp, Te_p, _PSI, iq)


# ------------------------------------------------------------ subsolution

@dataclass
class SubsolutionSpec:
    beta: float
    eps: float
    mu: float
    rho: float
    T: float
    zeta: dict  # branch -> StripCutoff
    tilde_eps: float
    I: tuple
    profile: WaveProfile = field(repr=False)
    frame: Frame = field(repr=False)
    consts: BarrierConstants | None = field(default=None, repr=False)

    @property
    def L(self) -> float:
        return self.frame.L

    @property
    def c_f(self) -> float:
        return self.profile.c_f

    def xi(self, t: float, s):
        return -s - self.c_f * t + self.rho * math.exp(self.eps * t) + 1.0

    def desk_inequalities(self) -> list:
        c = self.c_f
        fc = self.consts.front if self.consts else front_constants(self.profile, self.beta)
        return [
            Inequality("desk: xi at the mouth >= C_v (vanishing near the junction)",
                       float(-self.L - c * self.T + self.rho * math.exp(self.eps * self.T) + 1),
                       self.vanishing_level(), ">="),
            Inequality("desk: rho eps b c e^(eps T) <= (7/8)|Lambda| - mu^2",
                       self.rho * self.eps * self.beta * c * math.exp(self.eps * self.T),
                       0.875 * abs(fc.Lam) - self.mu ** 2),
            Inequality("desk: rho eps e^(eps T) < c_f", self.rho * self.eps * math.exp(self.eps * self.T),
                       c, "<"),
        ]

    def vanishing_level(self) -> float:
        zmin = min(z.zmin for z in self.zeta.values())
        epsp = self.tilde_eps * zmin
        return self.profile.xi_of_level(epsp ** (1 / (1 - self.beta)))


def make_subsolution(profile: WaveProfile, domain: BranchedDomain, I: Sequence[int],
                     T: float = -10.0, consts: BarrierConstants | None = None,
                     beta: float = BETA, rho: float | None = None) -> SubsolutionSpec:
    """Desk subsolution: horizon T and the smallest rho making it vanish for s <= L."""
    if consts is None:
        consts = barrier_constants(profile, domain, beta)
    if T >= 0:
        raise ValueError("the validity horizon T must be negative")
    zetas = {}
    for i in I:
        b = domain.branches[i]
        zetas[i] = StripCutoff(b.width, min(1.0, 0.25 * b.width), consts.zeta_min)
    spec = SubsolutionSpec(beta, consts.eps, consts.mu, 0.0, T, zetas, consts.tilde_eps,
                           tuple(I), profile, Frame.of(domain), consts)
    if rho is None:
        need = spec.vanishing_level() + domain.L + profile.c_f * T - 1.0
        rho = max(need, 0.0) * math.exp(-consts.eps * T) * (1 + 1e-9) + 1e-9
    spec.rho = float(rho)
    return spec


def eval_subsolution(spec: SubsolutionSpec, t: float, x):
    if t > spec.T + 1e-12:
        raise HorizonError(f"outside validity horizon: t = {t} > T = {spec.T}")
    px, py, scalar = _points(x)
    out = np.zeros(px.shape)
    for i in spec.I:
        s, tr, inside = spec.frame.local(i, px, py)
        if not inside.any():
            continue
        s, tr = s[inside], tr[inside]
        xi = spec.xi(t, s)
        z = spec.zeta[i](tr)
        A = spec.tilde_eps * np.exp(-spec.mu * (s - spec.L))
        val = np.asarray(spec.profile.phi_at(xi)) - A * z * spec.profile.phi_pow(xi, spec.beta)
        out[inside] = np.maximum(val, 0.0)
    return float(out[0]) if scalar else out


def subsolution_residual(spec: SubsolutionSpec, t: float, x):
    """Exact u_t - Lap u - f(u) where the subsolution is positive, nan elsewhere."""
    px, py, scalar = _points(x)
    prof, b, mu = spec.profile, spec.beta, spec.mu
    c = spec.c_f
    out = np.full(px.shape, np.nan)
    v = -c + spec.rho * spec.eps * math.exp(spec.eps * t)
    for i in spec.I:
        s, tr, inside = spec.frame.local(i, px, py)
        if not inside.any():
            continue
        s, tr = s[inside], tr[inside]
        xi = spec.xi(t, s)
        cut = spec.zeta[i]
        Z = cut(tr)
        _, Znn = cut.hat_derivs(tr)
        A = spec.tilde_eps * np.exp(-mu * (s - spec.L))
        Q = prof.phi_pow(xi, b)
        r1, r2 = np.asarray(prof.ratio1_at(xi)), np.asarray(prof.ratio2_at(xi))
        ph, dph = np.asarray(prof.phi_at(xi)), np.asarray(prof.dphi_at(xi))
        u = ph - A * Z * Q
        bracket = (mu * mu * Z + Znn + 2 * mu * b * Z * r1 + Z * (b * (b - 1) * r1 * r1 + b * r2)
                   - Z * v * b * r1)
        res = (v + c) * dph + eval_f(prof.nl, ph) - eval_f(prof.nl, u) + A * Q * bracket
        out[inside] = np.where(u > 0, res, np.nan)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------- supersolution

@dataclass
class SupersolutionSpec:
    beta: float
    eps: float
    mu: float
    rho: float
    T_eps: float
    I: tuple
    J: tuple
    profile: WaveProfile = field(repr=False)
    frame: Frame = field(repr=False)
    consts: BarrierConstants | None = field(default=None, repr=False)

    @property
    def L(self) -> float:
        return self.frame.L

    def eta(self, s):
        p, dp, d2p = _psi(np.asarray(s, dtype=float) - self.L - 2.0)
        e = np.exp(-self.mu * p)
        return e, -self.mu * dp * e, (self.mu ** 2 * dp * dp - self.mu * d2p) * e

    def pi(self, s):
        return smoothstep(np.asarray(s, dtype=float) - self.L - 1.0)

    def shift(self, t: float) -> float:
        return self.rho * math.exp(self.eps * t)

    def xi_t(self, t: float) -> float:
        return -self.L - self.profile.c_f * t - self.shift(t) - 2.0


def make_supersolution(profile: WaveProfile, domain: BranchedDomain, I: Sequence[int],
                       consts: BarrierConstants | None = None, rho: float = 1.0,
                       beta: float = BETA) -> SupersolutionSpec:
    """Desk supersolution with horizon from rho e^(eps T) <= 1 and c T <= -C - 2L - 4."""
    if consts is None:
        consts = barrier_constants(profile, domain, beta)
    J = tuple(k for k in range(domain.m) if k not in set(I))
    if not J or not I:
        raise ValueError("I and J must both be nonempty")
    c = profile.c_f
    Te = min(-math.log(max(rho, 1e-300)) / consts.eps if rho > 1 else 0.0,
             -(consts.C + 2 * domain.L + 4) / c)
    return SupersolutionSpec(beta, consts.eps, consts.mu, float(rho), float(Te), tuple(I), J,
                             profile, Frame.of(domain), consts)


def _super_parts(spec: SupersolutionSpec, t: float, px, py, residual: bool):
    prof, b, mu, eps = spec.profile, spec.beta, spec.mu, spec.eps
    c, L = prof.c_f, spec.L
    nl = prof.nl
    v = -c - spec.rho * eps * math.exp(eps * t)
    xt = spec.xi_t(t)
    Qt = float(prof.phi_pow(xt, b))
    r1t = float(prof.ratio1_at(xt))
    junction_val = eps * Qt
    junction_res = eps * b * Qt * r1t * v - float(eval_f(nl, junction_val))
    val = np.full(px.shape, junction_val)
    res = np.full(px.shape, junction_res)
    for i in range(spec.frame.anchors.shape[0]):
        s, tr, inside = spec.frame.local(i, px, py)
        if i in spec.I:
            m = inside & (s >= L + 1)
            if not m.any():
                continue
            ss = s[m]
            xb = -ss - c * t - spec.shift(t)
            P, dP, d2P = spec.pi(ss)
            E, dE, d2E = spec.eta(ss)
            ph = np.asarray(prof.phi_at(xb))
            dph = np.asarray(prof.dphi_at(xb))
            d2ph = np.asarray(prof.d2phi_at(xb))
            u = P * ph + eps * E * Qt
            val[m] = u
            if residual:
                ut = P * dph * v + eps * E * b * Qt * r1t * v
                lap = d2P * ph - 2 * dP * dph + P * d2ph + eps * d2E * Qt
                res[m] = ut - lap - eval_f(nl, u)
        else:
            m = inside & (s >= L)
            if not m.any():
                continue
            ss = s[m]
            xh = ss - c * t - spec.shift(t) - 2 * L - 3
            E = np.exp(-mu * (ss - L))
            Q = prof.phi_pow(xh, b)
            r1, r2 = np.asarray(prof.ratio1_at(xh)), np.asarray(prof.ratio2_at(xh))
            u2 = eps * E * Q
            lap2 = eps * E * Q * (mu * mu - 2 * mu * b * r1 + b * (b - 1) * r1 * r1 + b * r2)
            res2 = eps * E * Q * b * r1 * v - lap2 - eval_f(nl, u2)
            seam = ss <= L + 1
            use1 = seam & (junction_val < u2)
            vv = np.where(use1, junction_val, u2)
            val[m] = vv
            if residual:
                res[m] = np.where(use1, junction_res, res2)
    return val, res


def eval_supersolution(spec: SupersolutionSpec, t: float, x):
    if t > spec.T_eps + 1e-12:
        raise HorizonError(f"outside validity horizon: t = {t} > T_eps = {spec.T_eps}")
    px, py, scalar = _points(x)
    val, _ = _super_parts(spec, t, px, py, False)
    return float(val[0]) if scalar else val


def supersolution_residual(spec: SupersolutionSpec, t: float, x):
    px, py, scalar = _points(x)
    _, res = _super_parts(spec, t, px, py, True)
    return float(res[0]) if scalar else res


# -------------------------------------------------------- grid verification

def grid_laplacian(domain: BranchedDomain, w: np.ndarray) -> np.ndarray:
    """Five-point Laplacian with mirrored ghosts, as used by the stepper."""
    nb = domain.nbr
    vals = np.where(nb >= 0, w[np.maximum(nb, 0)], w[:, None])
    return (vals.sum(axis=1) - 4 * w) / (domain.h * domain.h)


def calibrate_tol_disc(profile: WaveProfile, h: float, safety: float = 2.0,
                       span: tuple = (-40.0, 80.0)) -> float:
    """safety * max |L_h[phi(x - c t)]| on an axis-aligned grid of spacing h."""
    xs = np.arange(span[0], span[1], h)
    out = []
    for off in np.linspace(0, h, 8, endpoint=False):
        x = xs + off
        p = np.asarray(profile.phi_at(x))
        lap = (np.asarray(profile.phi_at(x + h)) - 2 * p + np.asarray(profile.phi_at(x - h))) / h ** 2
        res = -profile.c_f * np.asarray(profile.dphi_at(x)) - lap - eval_f(profile.nl, p)
        out.append(np.max(np.abs(res)))
    return float(safety * max(out))


@dataclass
class ViolationReport:
    check_name: str
    tol: float
    rows: list = field(default_factory=list)  # (t, x, y, residual)
    max_residual: float = -math.inf
    n_checked: int = 0
    n_violations: int = 0

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("check_name,t,x,y,residual,tol,pass\r\n")
        for t, x, y, r in self.rows:
            ok = "true" if r <= self.tol else "false"
            buf.write(f"{self.check_name},{t!r},{x!r},{y!r},{r!r},{self.tol!r},{ok}\r\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def merge(self, other: "ViolationReport") -> None:
        self.rows += other.rows
        self.max_residual = max(self.max_residual, other.max_residual)
        self.n_checked += other.n_checked
        self.n_violations += other.n_violations


def verify_differential_inequality(eval_fn: Callable, sign: int, domain: BranchedDomain, nl,
                                   t_window: tuple, tol: float, n_times: int = 11,
                                   dt: float = 1e-5, clamp: tuple = (0.0, math.inf),
                                   check_name: str = "L[w]", max_rows: int = 200
                                   ) -> ViolationReport:
    """Check sign * (w_t - Lap_h w - f(w)) <= tol on cells with w strictly inside ``clamp``.

    sign = +1 for a subsolution, -1 for a supersolution.  ``eval_fn(t)``
    returns the barrier on every cell.  Sample times stay at least dt below
    the window end so that the centered difference never leaves it.
    """
    rep = ViolationReport(check_name, float(tol))
    t0, t1 = t_window
    for t in np.linspace(t0, t1 - dt, n_times):
        w = np.asarray(eval_fn(t), dtype=float)
        wt = (np.asarray(eval_fn(t + dt)) - np.asarray(eval_fn(t - dt))) / (2 * dt)
        act = (w > clamp[0]) & (w < clamp[1])
        if not act.any():
            continue
        r = sign * (wt - grid_laplacian(domain, w) - eval_f(nl, w))
        r = np.where(act, r, -math.inf)
        k = int(np.argmax(r))  # lowest index on ties
        rep.n_checked += int(act.sum())
        bad = np.flatnonzero(r > tol)
        rep.n_violations += int(bad.size)
        rep.max_residual = max(rep.max_residual, float(r[k]))
        rows = [k] + [j for j in bad[:max_rows] if j != k]
        rep.rows += [(float(t), float(domain.x[j]), float(domain.y[j]), float(r[j])) for j in rows]
    return rep


# ----------------------------------------------------- spreading barriers

@dataclass
class CauchyBarrierSpec:
    eps: float
    beta: float
    delta: float
    C: float
    kappa: float
    delta_eps: float
    C_eps: float
    kappa_eps: float
    alpha_eps: float
    tilde_C_eps: float
    H_eps: float
    h0: float
    R_eps: float
    L_eps: float
    C_ring: float
    R_eps_ring: float
    L: float
    inequalities: list = field(default_factory=list)

    def T_lower(self, l: float, c_f: float) -> float:
        return (l - self.R_eps - self.L_eps) / (c_f - self.eps)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "inequalities"}
        d["inequalities"] = [q.to_dict() for q in self.inequalities]
        return d


def h_eps(eps: float, r0: float = 1.0):
    """C2 h with h' = 0 on [0, r0], 0 <= h' <= 1, h'' <= eps/2, h(r) = r beyond H."""
    W = 2 * SMOOTH_D1 / eps
    H = r0 + W
    h0 = r0 + 0.5 * W

    def h(r):
        r = np.asarray(r, dtype=float)
        u = np.clip((r - r0) / W, 0.0, 1.0)
        # integral of the quintic ramp: W (u^6 - 3u^5 + 2.5u^4)
        integ = W * (u ** 6 - 3 * u ** 5 + 2.5 * u ** 4)
        return np.where(r >= H, r, h0 + integ)
    return h, H, h0


def cauchy_constants(profile: WaveProfile, eps: float, L: float, beta: float = BETA
                     ) -> CauchyBarrierSpec:
    fc = front_constants(profile, beta)
    c, Lam, df1 = fc.c_f, fc.Lam, fc.df1
    nl = profile.nl
    if not 0 < eps < c:
        raise ValueError("eps must lie in (0, c_f)")
    dbounds = {"c_f": c, "1/6": 1 / 6, "eps0/4": fc.eps0 / 4, "theta/4": nl.theta / 4,
               "|Lambda|/12": abs(Lam) / 12, "|f'(1)|/4": abs(df1) / 4,
               "|f'(1)| c_f/4": abs(df1) * c / 4, "|Lambda| c_f/4": abs(Lam) * c / 4}
    delta = 0.5 * min(dbounds.values())
    xi = profile.xi_grid
    r1 = profile.dphi / profile.phi
    d2 = np.asarray(profile.d2phi_at(xi))
    C = max(-profile.xi_of_gap(delta), profile.xi_of_level(delta),
            _left_threshold(xi, d2 < 0), _right_threshold(xi, d2 > 0),
            _right_threshold(xi, c * beta * r1 + beta ** 2 * r1 ** 2 <= 0.75 * Lam))
    kappa = min_slope(profile, -C, C)
    de = min(eps, eps * kappa / (6 * fc.L_f), eps * kappa / (3 * (fc.L_f + fc.sup_r2)), delta / 2)
    Ce = max(-profile.xi_of_gap(de), profile.xi_of_level(de), C + profile.h)
    ke = min_slope(profile, C, Ce)
    ae = min(0.5, 2 * ke / (3 * abs(df1)), eps * kappa / (3 * abs(df1)))
    tCe = max(-profile.xi_of_gap(ae * de), Ce + profile.h)
    _, H, h0 = h_eps(eps)
    R_eps = H + h0 + C + Ce + tCe
    L_eps = L + Ce - C
    hh_coef = SMOOTH_D2 + 2 * SMOOTH_D1 * fc.sup_r1
    C_ring = max(C, profile.xi_of_level(-0.25 * de * Lam / hh_coef))
    R_ring = 2 * C_ring + 2 * Ce + 1
    iq = [Inequality(f"delta < {k}", delta, v, "<") for k, v in dbounds.items()]
    iq += [Inequality("delta_eps <= delta/2", de, delta / 2),
           Inequality("delta_eps <= eps kappa/(6 L_f)", de, eps * kappa / (6 * fc.L_f)),
           Inequality("phi(C_eps) <= delta_eps", float(profile.phi_at(Ce)), de),
           Inequality("1 - phi(-C_eps) <= delta_eps", float(profile.omphi_at(-Ce)), de),
           Inequality("1 - phi(-tilde C_eps) <= alpha_eps delta_eps",
                      float(profile.omphi_at(-tCe)), ae * de),
           Inequality("phi(C_ring)(|h''| + 2|h'||phi'/phi|) <= -delta_eps Lambda/4",
                      float(profile.phi_at(C_ring)) * hh_coef, -0.25 * de * Lam)]
    return CauchyBarrierSpec(eps, beta, delta, C, kappa, de, Ce, ke, ae, tCe, H, h0, R_eps,
                             L_eps, C_ring, R_ring, float(L), iq)


@dataclass
class SpreadingReport:
    name: str
    spec: CauchyBarrierSpec
    slack: float
    bound: float
    checks: list = field(default_factory=list)  # (label, t, n_cells, worst_value, passed)

    @property
    def passed(self) -> bool:
        return all(c[4] for c in self.checks)

    @property
    def n_cells_checked(self) -> int:
        return sum(c[2] for c in self.checks)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("check_name,t,n_cells,worst_value,bound,slack,pass\r\n")
        for label, t, n, w, ok in self.checks:
            buf.write(f"{label},{t!r},{n},{w!r},{self.bound!r},{self.slack!r},"
                      f"{'true' if ok else 'false'}\r\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _march(u, domain, nl, times, cfg, visit):
    t = 0.0
    visit(0.0, u)
    for tn in times:
        span = tn - t
        if span > 0:
            n = max(int(math.ceil(span / cfg.dt - 1e-9)), 1)
            u = advance(u, domain, nl, span / n, n)
        t = tn
        visit(t, u)
    return u


def _record_times(T: float, every: float) -> list:
    k = int(math.floor(T / every + 1e-9))
    out = [every * (j + 1) for j in range(k)]
    if not out or out[-1] < T - 1e-9:
        out.append(T)
    return out


def check_spreading_lower(domain: BranchedDomain, i: int, l: float, eps: float,
                          profile: WaveProfile, t_after: float = 50.0, record_every: float = 2.0,
                          cfg: StepperConfig | None = None, spec: CauchyBarrierSpec | None = None,
                          tol_disc: float | None = None) -> SpreadingReport:
    """Plateau 1 - delta_eps of half-width R_eps: the cone and post-horizon bounds."""
    nl = profile.nl
    c = profile.c_f
    spec = spec or cauchy_constants(profile, eps, domain.L)
    if l < spec.R_eps + spec.L_eps - 1e-9:
        raise ValueError("need l >= R_eps + L_eps")
    tol_disc = calibrate_tol_disc(profile, domain.h) if tol_disc is None else tol_disc
    cfg = cfg or StepperConfig.for_grid(domain.h, nl)
    Te = spec.T_lower(l, c)
    de = spec.delta_eps
    u0 = init_plateau(domain, i, l, spec.R_eps, 1 - de).values
    rep = SpreadingReport("spreading_lower", spec, 2 * tol_disc, 1 - 2 * de)
    s = domain.coord(i)
    inb = domain.in_branch(i)

    def visit(t, u):
        if t <= Te + 1e-9:
            sel = inb & (np.abs(s - l) <= (c - eps) * t)
            bound, label = 1 - 2 * de, "cone 1-2delta_eps"
        else:
            sel = inb & (s >= spec.R_eps + spec.L_eps) & (s <= l + (c - eps) * t)
            bound, label = 1 - 3 * de, "post-horizon 1-3delta_eps"
        if not sel.any():
            return
        w = float(u[sel].min())
        rep.checks.append((label, float(t), int(sel.sum()), w, w >= bound - rep.slack))

    times = _record_times(Te + t_after, record_every)
    if not any(abs(t - Te) < 1e-9 for t in times):
        times = sorted(times + [Te])
    _march(u0, domain, nl, times, cfg, visit)
    return rep


def check_spreading_upper(domain: BranchedDomain, i: int, l: float, R: float, eps: float,
                          profile: WaveProfile, record_every: float = 2.0,
                          cfg: StepperConfig | None = None, spec: CauchyBarrierSpec | None = None,
                          tol_disc: float | None = None) -> SpreadingReport:
    """Inverted plateau: delta_eps inside, 1 outside; bound 2 delta_eps on the shrinking set."""
    nl = profile.nl
    c = profile.c_f
    spec = spec or cauchy_constants(profile, eps, domain.L)
    if not R > spec.R_eps:
        raise ValueError("need R > R_eps")
    if l < R + spec.L_eps - 1e-9:
        raise ValueError("need l >= R + L_eps")
    tol_disc = calibrate_tol_disc(profile, domain.h) if tol_disc is None else tol_disc
    cfg = cfg or StepperConfig.for_grid(domain.h, nl)
    de = spec.delta_eps
    u0 = init_plateau(domain, i, l, R, de, outside=1.0).values
    rep = SpreadingReport("spreading_upper", spec, 2 * tol_disc, 2 * de)
    s = domain.coord(i)
    inb = domain.in_branch(i)
    Tend = (R - spec.R_eps) / (c + eps)

    def visit(t, u):
        sel = inb & (np.abs(s - l) <= R - spec.R_eps - (c + eps) * t)
        if not sel.any():
            return
        w = float(u[sel].max())
        rep.checks.append(("shrinking 2delta_eps", float(t), int(sel.sum()), w,
                           w <= 2 * de + rep.slack))

    _march(u0, domain, nl, _record_times(Tend, record_every), cfg, visit)
    return rep


def check_spreading_ring(domain: BranchedDomain, R: float, eps: float, profile: WaveProfile,
                         record_every: float = 2.0, cfg: StepperConfig | None = None,
                         spec: CauchyBarrierSpec | None = None, tol_disc: float | None = None
                         ) -> SpreadingReport:
    """delta_eps on the junction and every branch below R, 1 beyond; bound 3 delta_eps."""
    nl = profile.nl
    c = profile.c_f
    spec = spec or cauchy_constants(profile, eps, domain.L)
    Rr = spec.R_eps_ring
    if R < Rr + domain.L - 1e-9:
        raise ValueError("need R >= R_eps + L")
    tol_disc = calibrate_tol_disc(profile, domain.h) if tol_disc is None else tol_disc
    cfg = cfg or StepperConfig.for_grid(domain.h, nl)
    de = spec.delta_eps
    ball = np.hypot(domain.x - domain.center[0], domain.y - domain.center[1]) <= domain.L
    low = ball.copy()
    for k in range(domain.m):
        low |= domain.in_branch(k) & (domain.coord(k) < R)
    for k in range(domain.m):
        if domain.branches[k].length <= R:
            raise ValueError("branches must be longer than R")
    u0 = np.where(low, de, 1.0)
    rep = SpreadingReport("spreading_ring", spec, 2 * tol_disc, 3 * de)
    Tend = (R - Rr - domain.L) / (c + eps)

    def visit(t, u):
        sel = ball.copy()
        for k in range(domain.m):
            sel |= domain.in_branch(k) & (domain.coord(k) <= R - Rr - (c + eps) * t)
        w = float(u[sel].max())
        rep.checks.append(("ring 3delta_eps", float(t), int(sel.sum()), w,
                           w <= 3 * de + rep.slack))

    _march(u0, domain, nl, _record_times(Tend, record_every), cfg, visit)
    return rep
