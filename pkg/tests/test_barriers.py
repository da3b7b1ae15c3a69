from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import branchfront.barriers as B
from branchfront.geometry import BranchSpec, build_domain, strip
from branchfront.harness import load_config, sandwich
from branchfront.pde import StepperConfig

# frozen desk values on the audit domain (h = 0.25, width 4, theta 0.3)
EPS = 3.699359366348192e-05
RHO_SUB = 74.73069791247822
T_EPS = -536.0781185386252
TOL_DISC = 0.000129514272917337
R_EPS, L_EPS, R_RING = 252.95536974315618, 47.37178235748365, 336.3622930660431
DELTA_EPS = 5.1232799444390795e-09


@pytest.fixture(scope="module")
def audit(profile, configs_dir):
    from branchfront.geometry import domain_from_config
    cfg = load_config(configs_dir / "barrier_audit.toml")
    dom = domain_from_config(cfg.domain)
    consts = B.barrier_constants(profile, dom)
    sub = B.make_subsolution(profile, dom, [0], T=-10.0, consts=consts)
    sup = B.make_supersolution(profile, dom, [0], consts)
    return cfg, dom, consts, sub, sup


def test_constants_pinned(audit):
    _, _, consts, sub, sup = audit
    assert consts.eps == pytest.approx(EPS, rel=1e-6)
    assert sub.rho == pytest.approx(RHO_SUB, rel=1e-6)
    assert sup.T_eps == pytest.approx(T_EPS, rel=1e-6)
    assert all(q.holds for q in consts.inequalities)
    assert all(q.holds for q in sub.desk_inequalities())
    # eps is half the tightest bound
    assert consts.eps == pytest.approx(0.5 * min(consts.eps_bounds.values()), rel=1e-12)


def test_tol_disc_pinned(profile):
    assert B.calibrate_tol_disc(profile, 0.25) == pytest.approx(TOL_DISC, rel=1e-6)
    assert B.calibrate_tol_disc(profile, 0.125) < B.calibrate_tol_disc(profile, 0.25) / 3


def test_cauchy_constants_pinned(profile, audit):
    dom = audit[1]
    spec = B.cauchy_constants(profile, 0.25 * profile.c_f, dom.L)
    assert spec.R_eps == pytest.approx(R_EPS, rel=1e-6)
    assert spec.L_eps == pytest.approx(L_EPS, rel=1e-6)
    assert spec.R_eps_ring == pytest.approx(R_RING, rel=1e-6)
    assert spec.delta_eps == pytest.approx(DELTA_EPS, rel=1e-6)
    assert all(q.holds for q in spec.inequalities)
    with pytest.raises(ValueError):
        B.cauchy_constants(profile, profile.c_f, dom.L)


def test_smoothstep():
    s, ds, d2s = B.smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    np.testing.assert_allclose(s, [0, 0, 0.5, 1, 1])
    np.testing.assert_allclose(ds[[0, 1, 3, 4]], 0)
    assert ds.max() <= B.SMOOTH_D1


def test_zeta_cutoff(profile, nl):
    dom = strip(length=40.0, width=4.0, h=0.125)
    z = B.build_zeta(dom, 0, nl, profile.c_f, profile=profile)
    cells = np.flatnonzero(dom.in_branch(0))
    vals = z.values[cells]
    tr = dom.transverse(0)[cells]
    # constant along the axis: same transverse coordinate gives the same value
    order = np.argsort(tr)
    tr_s, v_s = tr[order], vals[order]
    same = np.isclose(np.diff(tr_s), 0.0)
    np.testing.assert_allclose(np.diff(v_s)[same], 0.0, atol=1e-12)
    assert z.margin >= 0
    assert z.normal_derivative == pytest.approx(1.0, abs=dom.h)


def test_subsolution_support_and_bounds(audit, profile):
    _, dom, _, sub, _ = audit
    s = dom.coord(0)
    for t in (-20.0, -10.0):
        u = B.eval_subsolution(sub, t, dom)
        inner = ~(dom.in_branch(0) & (s > dom.L))
        assert np.all(u[inner] == 0.0)
        ok = dom.in_branch(0)
        xi = sub.xi(t, s[ok])
        assert np.all(u[ok] <= np.asarray(profile.phi_at(xi)) + 1e-15)
    with pytest.raises(B.HorizonError):
        B.eval_subsolution(sub, 0.0, dom)


def test_subsolution_approaches_front_deep_in_branch(audit, profile):
    _, dom, _, sub, _ = audit
    e = np.asarray(dom.branches[0].direction)
    gaps = []
    for s in (100.0, 200.0, 300.0):
        t = (sub.rho - 1.0 - s) / profile.c_f  # xi stays O(1)
        x = dom.anchors[0] + s * e
        xi = sub.xi(t, s)
        gap = (float(profile.phi_at(xi)) - B.eval_subsolution(sub, t, x)) / float(
            profile.phi_pow(xi, sub.beta))
        assert gap == pytest.approx(sub.tilde_eps * sub.zeta[0](0.0) * math.exp(-sub.mu * (s - dom.L)),
                                    rel=1e-9)
        gaps.append(gap)
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_supersolution_dominates_subsolution(audit):
    _, dom, _, sub, sup = audit
    t_top = min(sub.T, sup.T_eps)
    for t in (t_top - 20.0, t_top):
        assert np.all(B.eval_supersolution(sup, t, dom) >= B.eval_subsolution(sub, t, dom))
    with pytest.raises(B.HorizonError):
        B.eval_supersolution(sup, sup.T_eps + 1.0, dom)


def test_supersolution_junction_value(audit, profile):
    _, dom, _, _, sup = audit
    t = sup.T_eps
    u = B.eval_supersolution(sup, t, dom.center)
    assert u == pytest.approx(sup.eps * float(profile.phi_pow(sup.xi_t(t), sup.beta)), rel=1e-12)


def test_supersolution_seam_continuity(audit):
    _, dom, _, _, sup = audit
    t = sup.T_eps
    for j in sup.J:
        e = np.asarray(dom.branches[j].direction)
        a = dom.anchors[j]
        for s in (dom.L, dom.L + 1.0):
            lo = B.eval_supersolution(sup, t, a + (s - 1e-9) * e)
            hi = B.eval_supersolution(sup, t, a + (s + 1e-9) * e)
            assert hi <= lo + 1e-9 or abs(hi - lo) < 1e-9


def test_verify_zero_field(audit, nl):
    dom = audit[1]
    rep = B.verify_differential_inequality(lambda t: np.zeros(dom.n_cells), 1, dom, nl,
                                           (0.0, 1.0), 1e-12, clamp=(-1.0, 2.0))
    assert rep.passed and rep.max_residual == 0.0


def test_verify_exact_front_in_strip(profile, nl):
    dom = strip(length=240.0, width=2.0, h=0.25)
    tol = B.calibrate_tol_disc(profile, dom.h)
    c = profile.c_f

    def w(t):
        return np.asarray(profile.phi_at(dom.x - c * t))

    for sign in (1, -1):
        rep = B.verify_differential_inequality(w, sign, dom, nl, (0.0, 10.0), tol,
                                               clamp=(1e-12, 1 - 1e-12))
        assert rep.passed, rep.max_residual


def test_audit_residuals(audit, nl):
    _, dom, _, sub, sup = audit
    tol = B.calibrate_tol_disc(sub.profile, dom.h)
    r_sub = B.verify_differential_inequality(lambda t: B.eval_subsolution(sub, t, dom), 1, dom,
                                             nl, (sub.T - 10.0, sub.T), tol)
    r_sup = B.verify_differential_inequality(lambda t: B.eval_supersolution(sup, t, dom), -1, dom,
                                             nl, (sup.T_eps - 10.0, sup.T_eps), tol)
    assert r_sub.passed and r_sup.passed
    assert "check_name,t,x,y,residual,tol,pass" in r_sub.to_csv()


@settings(max_examples=10, deadline=None)
@given(st.floats(-60.0, -10.0))
def test_exact_subsolution_residual_nonpositive(t):
    _, dom, _, sub, _ = _AUDIT
    res = B.subsolution_residual(sub, t, dom)
    assert np.nanmax(res) <= 0.0


@settings(max_examples=10, deadline=None)
@given(st.floats(-600.0, 0.0))
def test_exact_supersolution_residual_nonnegative(dt):
    _, dom, _, _, sup = _AUDIT
    res = B.supersolution_residual(sup, sup.T_eps + min(dt, 0.0), dom)
    assert np.nanmin(res) >= 0.0


def test_sandwich(audit, nl):
    cfg, dom, _, sub, sup = audit
    tol = B.calibrate_tol_disc(sub.profile, dom.h)
    rows = sandwich(sub, sup, dom, nl, StepperConfig.for_grid(dom.h, nl), 10.0, slack=2 * tol)
    assert len(rows) == 11
    assert all(r[3] for r in rows)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 40.0))
def test_h_eps_properties(eps):
    eps = eps * 1e-3
    h, H, h0 = B.h_eps(eps)
    r = np.linspace(0, H + 5, 4001)
    v = h(r)
    dv = np.gradient(v, r)
    assert np.all(v >= 0)
    assert np.all(np.diff(v) >= -1e-12)
    np.testing.assert_allclose(v[r >= H + 0.01], r[r >= H + 0.01], rtol=1e-9)
    assert np.all(dv <= 1 + 1e-6)


def _audit_fixture():
    from branchfront.geometry import domain_from_config
    from branchfront.nonlinearity import CombustionNonlinearity
    from branchfront.wave1d import compute_wave
    from conftest import CONFIGS
    prof = compute_wave(CombustionNonlinearity())
    cfg = load_config(CONFIGS / "barrier_audit.toml")
    dom = domain_from_config(cfg.domain)
    consts = B.barrier_constants(prof, dom)
    return (cfg, dom, consts, B.make_subsolution(prof, dom, [0], T=-10.0, consts=consts),
            B.make_supersolution(prof, dom, [0], consts))


_AUDIT = _audit_fixture()


def test_supersolution_requires_partition(profile, audit):
    dom = audit[1]
    with pytest.raises(ValueError):
        B.make_supersolution(profile, dom, [0, 1, 2], audit[2])
    with pytest.raises(ValueError):
        B.make_subsolution(profile, dom, [0], T=1.0, consts=audit[2])


def test_spreading_ring_small(profile):
    # a short ring run exercising the check on a compact domain
    eps = 0.25 * profile.c_f
    specs = [BranchSpec.from_angle(0.0, 4.0, 400.0), BranchSpec.from_angle(180.0, 4.0, 400.0)]
    dom = build_domain(specs, h=0.25)
    spec = B.cauchy_constants(profile, eps, dom.L)
    R = spec.R_eps_ring + dom.L + 2.0
    rep = B.check_spreading_ring(dom, R, eps, profile, spec=spec, record_every=1.0)
    assert rep.checks and rep.passed
    assert math.isfinite(rep.n_cells_checked)
