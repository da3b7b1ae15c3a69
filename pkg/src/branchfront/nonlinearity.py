"""Combustion-type reaction term f and the constants derived from it.

The default profile is ``f(u) = amplitude * (u - theta)**p * (1 - u)`` on
``(theta, 1)``, extended by ``0`` below ``theta`` and linearly with slope
``f'(1)`` above ``1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad


@dataclass(frozen=True)
class CombustionNonlinearity:
    theta: float = 0.3
    amplitude: float = 1.0
    exponent: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be nonnegative")
        if self.exponent < 2.0:
            raise ValueError("exponent must be >= 2 for a C1 junction at theta")

    @classmethod
    def from_dict(cls, d: dict) -> "CombustionNonlinearity":
        return cls(
            theta=float(d.get("theta", 0.3)),
            amplitude=float(d.get("amplitude", 1.0)),
            exponent=float(d.get("exponent", 2.0)),
        )

    def to_dict(self) -> dict:
        return {"theta": self.theta, "amplitude": self.amplitude, "exponent": self.exponent}

    @property
    def df1(self) -> float:
        """Slope f'(1) (negative unless the reaction is switched off)."""
        return -self.amplitude * (1.0 - self.theta) ** self.exponent

    def __call__(self, u):
        return eval_f(self, u)

    def f_scalar(self, u: float) -> float:
        """Plain-float evaluation for use inside ODE right-hand sides."""
        if u <= self.theta:
            return 0.0
        if u >= 1.0:
            return self.df1 * (u - 1.0)
        return self.amplitude * (u - self.theta) ** self.exponent * (1.0 - u)

    def scaled(self, factor: float) -> "CombustionNonlinearity":
        return CombustionNonlinearity(self.theta, self.amplitude * factor, self.exponent)


def _check_finite(u):
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("invalid state: non-finite value passed to the nonlinearity")
    return arr


def eval_f(nl: CombustionNonlinearity, u):
    """Reaction term, defined on the whole real line."""
    arr = _check_finite(u)
    th, a, p = nl.theta, nl.amplitude, nl.exponent
    inside = (arr > th) & (arr < 1.0)
    w = np.where(inside, arr, th)
    out = np.where(inside, a * (w - th) ** p * (1.0 - w), 0.0)
    out = np.where(arr > 1.0, nl.df1 * (arr - 1.0), out)
    return out if out.ndim else float(out)


def eval_df(nl: CombustionNonlinearity, u):
    """Exact derivative of :func:`eval_f`."""
    arr = _check_finite(u)
    th, a, p = nl.theta, nl.amplitude, nl.exponent
    inside = (arr > th) & (arr < 1.0)
    w = np.where(inside, arr, th)
    out = np.where(inside, a * (p * (w - th) ** (p - 1) * (1.0 - w) - (w - th) ** p), 0.0)
    out = np.where(arr >= 1.0, nl.df1, out)
    return out if out.ndim else float(out)


def df_critical_points(nl: CombustionNonlinearity) -> list[float]:
    """Points where f' may attain extrema: kinks and the interior zero of f''."""
    th, p = nl.theta, nl.exponent
    # f''(u) = a (u-th)^(p-2) [p(p-1)(1-u) - 2p(u-th)] vanishes at u*
    ustar = (p - 1.0 + 2.0 * th) / (p + 1.0)
    return [0.0, th, ustar, 1.0]


def lipschitz_bound(nl: CombustionNonlinearity, eps0: float, n_samples: int = 200_001) -> float:
    """sup |f'| over the open window (-2 eps0, 1 + 2 eps0)."""
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    lo, hi = -2.0 * eps0, 1.0 + 2.0 * eps0
    grid = np.linspace(lo, hi, n_samples)[1:-1]
    cands = [c for c in df_critical_points(nl) if lo < c < hi]
    values = np.abs(eval_df(nl, np.concatenate([grid, cands])))
    return float(values.max())


def _eps0_bound_holds(nl: CombustionNonlinearity, e: float, n_samples: int) -> bool:
    # closed interval: endpoints included so the bound also holds on the open one
    u = np.linspace(1.0 - 2.0 * e, 1.0 + 2.0 * e, n_samples)
    d = eval_df(nl, u)
    d1 = nl.df1
    return bool(np.all(d >= 1.5 * d1) and np.all(d <= 0.75 * d1))


def epsilon0(nl: CombustionNonlinearity, n_samples: int = 10_001, iters: int = 60) -> float:
    """Largest eps0 in (0, theta/2] with 3/2 f'(1) <= f' <= 3/4 f'(1) near 1."""
    if nl.df1 == 0.0:
        raise ValueError("f'(1) = 0: the reaction term is switched off")
    hi = nl.theta / 2.0
    if _eps0_bound_holds(nl, hi, n_samples):
        return hi
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _eps0_bound_holds(nl, mid, n_samples):
            lo = mid
        else:
            hi = mid
    return lo


def reaction_integral(nl: CombustionNonlinearity) -> float:
    """Quadrature of f over [0, 1]."""
    val, _ = quad(lambda s: eval_f(nl, s), nl.theta, 1.0, epsabs=1e-13, epsrel=1e-12)
    return float(val)
