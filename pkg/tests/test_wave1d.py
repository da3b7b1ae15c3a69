from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchfront.nonlinearity import CombustionNonlinearity
from branchfront.wave1d import (NoAdmissibleSpeed, compute_wave, decay_rates, lambda_of,
                                right_tail_rate, shoot_speed, simulate_speed_1d, unstable_rate)

# frozen shooting oracles, cross-checked by long-time 1D simulation
C_DEFAULT = 0.26343617170095535
C_THETA02 = 0.366993806639922
C_THETA04_P3 = 0.10500179980568354


def test_speed_pinned(nl):
    assert shoot_speed(nl) == pytest.approx(C_DEFAULT, rel=1e-9)


def test_other_speeds_pinned():
    assert shoot_speed(CombustionNonlinearity(theta=0.2)) == pytest.approx(C_THETA02, rel=1e-9)
    assert shoot_speed(CombustionNonlinearity(theta=0.4, exponent=3.0)) == pytest.approx(
        C_THETA04_P3, rel=1e-9)


def test_speed_scaling(nl):
    assert shoot_speed(nl.scaled(4.0)) == pytest.approx(2.0 * shoot_speed(nl), rel=1e-8)


def test_zero_reaction():
    with pytest.raises(NoAdmissibleSpeed, match="no admissible speed"):
        shoot_speed(CombustionNonlinearity(amplitude=0.0))


def test_invalid_tol(nl):
    with pytest.raises(ValueError):
        shoot_speed(nl, tol=0.0)


def test_lambda_values():
    c = C_DEFAULT
    assert lambda_of(0.0, c) == 0.0
    assert lambda_of(-c, c) == 0.0
    assert lambda_of(-0.5 * c, c) < 0
    assert lambda_of(1.0, 2.0) == 3.0


def test_profile_normalization(profile):
    assert float(profile.phi_at(0.0)) == pytest.approx(0.5, abs=1e-12)
    assert profile.max_residual < 1e-6


def test_right_tail(profile):
    c = profile.c_f
    d = float(profile.log_phi_at(25.0) - profile.log_phi_at(12.0))
    assert d == pytest.approx(-c * 13.0, rel=1e-2)
    assert float(profile.dphi_at(20.0) / profile.phi_at(20.0)) == pytest.approx(-c, rel=1e-2)
    assert right_tail_rate(profile) == pytest.approx(c, rel=1e-2)


def test_decay_rates(profile):
    lam, K1, K2, K3, K4 = decay_rates(profile)
    root = (-profile.c_f + math.sqrt(profile.c_f ** 2 - 4 * profile.nl.df1)) / 2
    assert lam == pytest.approx(root, rel=2e-2)
    assert root == pytest.approx(unstable_rate(profile.c_f, profile.nl.df1))
    assert 0 < K1 <= K2
    assert 0 < K3 <= K4


def test_profile_monotone_and_bounded(profile):
    assert np.all(np.diff(profile.phi) < 0)
    assert np.all((profile.phi > 0) & (profile.phi < 1))
    np.testing.assert_allclose(profile.phi + profile.omphi, 1.0, atol=1e-14)


@pytest.mark.slow
def test_simulation_agrees_with_shooting(nl):
    assert simulate_speed_1d(nl) == pytest.approx(C_DEFAULT, rel=5e-3)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.15, 0.6), st.floats(0.5, 3.0))
def test_speed_decreases_with_theta(theta, amp):
    lo = shoot_speed(CombustionNonlinearity(theta=theta, amplitude=amp))
    hi = shoot_speed(CombustionNonlinearity(theta=theta + 0.05, amplitude=amp))
    assert hi < lo


@settings(max_examples=5, deadline=None)
@given(st.floats(0.2, 0.5))
def test_profile_tails_property(theta):
    prof = compute_wave(CombustionNonlinearity(theta=theta))
    assert right_tail_rate(prof) == pytest.approx(prof.c_f, rel=1e-2)
    assert float(prof.phi_at(0.0)) == pytest.approx(0.5, abs=1e-12)


def test_x_window_must_lie_inside_domain(nl):
    with pytest.raises(ValueError):
        simulate_speed_1d(nl, length=100.0, x_window=(10.0, 50.0))
    with pytest.raises(ValueError):
        simulate_speed_1d(nl, length=100.0, x_window=(30.0, 90.0))
