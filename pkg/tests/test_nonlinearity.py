from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchfront.nonlinearity import (CombustionNonlinearity, epsilon0, eval_df, eval_f,
                                      lipschitz_bound, reaction_integral)

# frozen oracle: bisection on the eps0 bound, re-verified below by dense sampling
EPS0_DEFAULT = 0.023009508931267325


def test_f_values(nl):
    assert eval_f(nl, 0.2) == 0.0
    assert eval_f(nl, 1.0) == 0.0
    assert eval_f(nl, 1.5) == pytest.approx(-0.245, abs=1e-15)


def test_df_values(nl):
    assert eval_df(nl, 0.3) == 0.0
    assert eval_df(nl, 1.0) == pytest.approx(-0.49, abs=1e-15)
    assert eval_df(nl, 2.0) == pytest.approx(-0.49, abs=1e-15)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        CombustionNonlinearity(theta=0.0)
    with pytest.raises(ValueError):
        CombustionNonlinearity(theta=1.0)
    with pytest.raises(ValueError):
        CombustionNonlinearity(exponent=1.5)
    with pytest.raises(ValueError, match="invalid state"):
        eval_f(CombustionNonlinearity(), np.nan)


def test_lipschitz_bound_matches_dense_grid(nl):
    grid = np.linspace(-0.1, 1.1, 10**6)
    dense = float(np.abs(eval_df(nl, grid)).max())
    assert lipschitz_bound(nl, 0.05) == pytest.approx(dense, rel=1e-9)
    assert lipschitz_bound(nl, 0.05) == pytest.approx(0.49, rel=1e-12)


def test_lipschitz_zero_and_linear_in_amplitude():
    assert lipschitz_bound(CombustionNonlinearity(amplitude=0.0), 0.05) == 0.0
    a = lipschitz_bound(CombustionNonlinearity(amplitude=1.0), 0.05)
    b = lipschitz_bound(CombustionNonlinearity(amplitude=2.0), 0.05)
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_epsilon0_pinned(nl):
    e0 = epsilon0(nl)
    assert e0 == pytest.approx(EPS0_DEFAULT, rel=1e-9)
    assert e0 <= nl.theta / 2


def test_epsilon0_zero_reaction():
    with pytest.raises(ValueError):
        epsilon0(CombustionNonlinearity(amplitude=0.0))


def test_reaction_integral_closed_form(nl):
    # int_th^1 (u-th)^2 (1-u) du = (1-th)^4 / 12
    assert reaction_integral(nl) == pytest.approx((1 - nl.theta) ** 4 / 12, rel=1e-10)


params = st.builds(CombustionNonlinearity,
                   theta=st.floats(0.05, 0.8),
                   amplitude=st.floats(0.1, 5.0),
                   exponent=st.floats(2.0, 4.0))


@settings(max_examples=40, deadline=None)
@given(params)
def test_epsilon0_postcondition(nl):
    e0 = epsilon0(nl)
    assert 0 < e0 <= nl.theta / 2
    u = np.linspace(1 - 2 * e0, 1 + 2 * e0, 100_001)[1:-1]
    d = eval_df(nl, u)
    assert np.all(d >= 1.5 * nl.df1 - 1e-12)
    assert np.all(d <= 0.75 * nl.df1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(params, st.floats(-2.0, 3.0))
def test_f_structure(nl, u):
    v = eval_f(nl, u)
    if u <= nl.theta or u == 1.0:
        assert v == 0.0
    elif u < 1.0:
        assert v > 0.0
    else:
        assert v == pytest.approx(nl.df1 * (u - 1.0))
    assert eval_f(nl, u) == pytest.approx(nl.f_scalar(u), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(params, st.floats(-0.5, 1.5))
def test_df_matches_finite_difference(nl, u):
    h = 1e-6
    if min(abs(u - nl.theta), abs(u - 1.0)) < 1e-4:
        return
    fd = (eval_f(nl, u + h) - eval_f(nl, u - h)) / (2 * h)
    assert eval_df(nl, u) == pytest.approx(fd, abs=1e-5)
