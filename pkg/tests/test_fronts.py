from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import distance_transform_edt, label

from branchfront import fronts as F
from branchfront.geometry import strip, y_junction
from branchfront.pde import Field, FieldHistory, StepperConfig, init_planar_front, run

# frozen regression floor: strip width 2, h 0.25, front from x0 = 50, records every 5
MARGIN_STRIP = 0.008297556573766648


@pytest.fixture(scope="module")
def strip_run(nl, profile):
    dom = strip(length=120.0, width=2.0, h=0.25)
    f0 = init_planar_front(dom, profile, 1, 50.0)
    return run(f0, nl, StepperConfig.for_grid(dom.h, nl, record_every=5.0), 150.0)


@pytest.fixture(scope="module")
def y_run(nl, profile):
    dom = y_junction(width=4.0, length=40.0, h=0.25, blend=2.0, angles=(0.0, 90.0, 270.0))
    f0 = init_planar_front(dom, profile, 0, 12.0)
    return run(f0, nl, StepperConfig.for_grid(dom.h, nl, record_every=10.0), 130.0)


def _sliding_history(dom, profile, j, tau, times):
    hist = FieldHistory(dom)
    s = dom.coord(j)
    for t in times:
        v = np.asarray(profile.phi_at(s - profile.c_f * t + tau))
        hist.append(Field(np.where(dom.in_branch(j), v, 1.0), t, dom))
    return hist


def test_interface_planar_front(profile):
    dom = strip(length=40.0, width=2.0, h=0.25)
    f = init_planar_front(dom, profile, 1, 10.0)
    iface = F.extract_interface(f)
    cols = np.unique(np.floor(dom.x[iface.cells] / dom.h))
    assert len(cols) == 2  # the two columns straddling the level
    assert len(iface) == 2 * dom.mask.any(axis=1).sum()


def test_interface_empty():
    dom = strip(length=20.0, width=2.0)
    assert F.extract_interface(Field(np.full(dom.n_cells, 0.9), 0.0, dom)).empty
    with pytest.raises(ValueError):
        F.extract_interface(Field(np.full(dom.n_cells, 0.9), 0.0, dom), level=1.0)


def test_interface_y_arcs_match_contour(y_run):
    dom = y_run.domain
    f = y_run.field_at(y_run.nearest(100.0))
    iface = F.extract_interface(f)
    dense = np.zeros(dom.shape, bool)
    dense[dom.cj[iface.cells], dom.ci[iface.cells]] = True
    _, n = label(dense, structure=np.ones((3, 3)))
    assert n == 2  # one arc in each outgoing branch
    # oracle: marching-squares contour of the bilinear field at h/2 resolution
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from scipy.interpolate import RegularGridInterpolator
    u = f.dense()
    # Neumann extension: outside cells copy the nearest active cell
    _, (jj, ii) = distance_transform_edt(np.isnan(u), return_indices=True)
    u = u[jj, ii]
    xs = (np.arange(dom.shape[1]) + dom.i0 + 0.5) * dom.h
    ys = (np.arange(dom.shape[0]) + dom.j0 + 0.5) * dom.h
    fine_x = np.arange(xs[0], xs[-1], 0.5 * dom.h)
    fine_y = np.arange(ys[0], ys[-1], 0.5 * dom.h)
    FX, FY = np.meshgrid(fine_x, fine_y)
    interp = RegularGridInterpolator((ys, xs), u)
    U = interp(np.column_stack([FY.ravel(), FX.ravel()])).reshape(FX.shape)
    U = np.where(dom.contains(FX, FY), U, np.nan)
    fig, ax = plt.subplots()
    cs = ax.contour(FX, FY, U, levels=[0.5])
    pts = np.concatenate([seg for seg in cs.allsegs[0] if len(seg)])
    plt.close(fig)
    cells = np.column_stack([dom.x[iface.cells], dom.y[iface.cells]])
    d1 = np.min(np.hypot(*(cells[:, None, :] - pts[None, :, :]).transpose(2, 0, 1)), axis=1)
    d2 = np.min(np.hypot(*(pts[:, None, :] - cells[None, :, :]).transpose(2, 0, 1)), axis=1)
    assert max(d1.max(), d2.max()) <= 2 * dom.h


def test_front_position_and_speed(strip_run, profile):
    dom = strip_run.domain
    p0 = F.branch_front_position(strip_run.field_at(0), 1)
    assert p0 == pytest.approx(50.0, abs=dom.h)
    k = strip_run.nearest(100.0)
    p = F.branch_front_position(strip_run.field_at(k), 1)
    assert (p0 - p) / 100.0 == pytest.approx(profile.c_f, rel=0.02)


def test_front_absent(strip_run):
    f = strip_run.field_at(0)
    cold = Field(np.zeros_like(f.values), 0.0, f.domain)
    with pytest.raises(F.FrontAbsent, match="front absent"):
        F.branch_front_position(cold, 0)
    ts, ps = F.position_series(strip_run, 0)
    assert len(ts) == 0


def test_regression_speed():
    assert F.regression_speed([0, 1, 2], [1, 3, 5]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        F.regression_speed([0], [1])


def test_global_mean_speed_strip(strip_run, profile):
    ts, ps = F.position_series(strip_run, 1)
    reg = -F.regression_speed(ts, ps)
    est = F.estimate_global_mean_speed(strip_run, gap_min=20.0)
    assert est.gamma == pytest.approx(profile.c_f, rel=0.03)
    assert est.gamma == pytest.approx(reg, rel=0.03)
    gamma, ci = est
    assert ci[0] <= ci[1]


def test_global_mean_speed_frozen(strip_run):
    f = strip_run.field_at(5)
    hist = FieldHistory(f.domain)
    for t in range(0, 100, 5):
        hist.append(Field(f.values, float(t), f.domain))
    assert F.estimate_global_mean_speed(hist, gap_min=20.0).gamma == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        F.estimate_global_mean_speed(hist, gap_min=50.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(-5.0, 5.0))
def test_fit_shift_self_fit(tau):
    dom, profile = _YDOM, _PROFILE
    hist = _sliding_history(dom, profile, 1, tau, [40.0, 50.0, 60.0])
    fit = F.fit_shift(hist, 1, profile, (40.0, 60.0), s_min=dom.L)
    assert fit.tau == pytest.approx(tau, abs=dom.h)
    assert fit.sup_err < 1e-3


def test_fit_shift_windows_agree(profile):
    dom = _YDOM
    hist = _sliding_history(dom, profile, 2, 1.7, np.arange(30.0, 90.0, 5.0))
    a = F.fit_shift(hist, 2, profile, (40.0, 60.0))
    b = F.fit_shift(hist, 2, profile, (65.0, 85.0))
    assert abs(a.tau - b.tau) <= 2 * dom.h
    with pytest.raises(ValueError):
        F.fit_shift(hist, 2, profile, (500.0, 600.0))


def test_classify(strip_run, y_run):
    probes = np.array([[-20.0, 0.0], [-25.0, 0.0]])
    assert F.classify_propagation(strip_run, probes, 0.3) == F.COMPLETE
    dom = y_run.domain
    probes = np.array([dom.far_point(1, 10.0), dom.far_point(2, 10.0)])
    assert F.classify_propagation(y_run, probes, 0.3) == F.COMPLETE
    # synthetic block: saturated incoming branch, far region at rest
    hist = FieldHistory(dom)
    hot = np.where(dom.in_branch(0) & (dom.coord(0) > dom.L), 1.0, 0.1)
    for t in (0.0, 10.0, 20.0, 30.0):
        hist.append(Field(hot, t, dom))
    far = np.concatenate([dom.branch_cells(1, 20.0), dom.branch_cells(2, 20.0)])
    inc = dom.branch_cells(0, 20.0)
    assert F.classify_propagation(hist, far[:3], 0.3, far_cells=far, incoming_cells=inc) == F.BLOCKED
    assert F.classify_propagation(hist, far[:3], 0.3) == F.UNDECIDED
    with pytest.raises(ValueError):
        F.classify_propagation(hist, np.array([[1e4, 0.0]]), 0.3)


def test_monotonicity_margin(strip_run):
    m = F.monotonicity_margin(strip_run, 0.1, 0.9)
    assert m > 0
    assert m == pytest.approx(MARGIN_STRIP, rel=1e-6)
    assert F.monotonicity_margin(strip_run, 0.05, 0.95) <= m <= F.monotonicity_margin(strip_run, 0.3, 0.7)
    f = strip_run.field_at(0)
    # 0.2 lies below theta, so the constant field is an equilibrium
    hist2 = FieldHistory(f.domain)
    for t in (0.0, 1.0, 2.0):
        hist2.append(Field(np.full(f.values.shape, 0.2), t, f.domain))
    assert F.monotonicity_margin(hist2, 0.1, 0.9) == 0.0
    with pytest.raises(ValueError):
        F.monotonicity_margin(hist2, 0.5, 0.6)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.02, 0.45), st.floats(0.0, 0.4))
def test_margin_nonincreasing_property(a, widen):
    h = _STRIP_RUN
    b = 1.0 - a
    a2, b2 = max(a - widen, 0.01), min(b + widen, 0.99)
    assert F.monotonicity_margin(h, a2, b2) <= F.monotonicity_margin(h, a, b)


def test_containment_table(strip_run):
    tab = F.containment_table(strip_run, [1.0, 5.0, 20.0], skip=2)
    eps = [e for _, e in tab]
    assert eps[0] >= eps[1] >= eps[2]
    assert eps[2] < 1e-3


def test_report_serialization(tmp_path):
    rep = F.FrontReport(positions={0: ([0.0, 1.0], [5.0, 5.25])}, speeds={0: 0.25})
    csv = rep.to_csv(tmp_path / "p.csv")
    assert csv.startswith("time,branch,position\r\n")
    assert (tmp_path / "p.csv").read_bytes() == csv.encode()
    data = json.loads(rep.to_json())
    assert data["gamma"] is None and data["speeds"]["0"] == 0.25
    F.plot_positions(rep, tmp_path / "p.svg")
    first = (tmp_path / "p.svg").read_bytes()
    F.plot_positions(rep, tmp_path / "p.svg")
    assert (tmp_path / "p.svg").read_bytes() == first


def _setup():
    from branchfront.nonlinearity import CombustionNonlinearity
    from branchfront.wave1d import compute_wave
    nl = CombustionNonlinearity()
    prof = compute_wave(nl)
    dom = y_junction(width=4.0, length=40.0, h=0.25, blend=2.0)
    s = strip(length=120.0, width=2.0, h=0.25)
    hist = run(init_planar_front(s, prof, 1, 50.0), nl,
               StepperConfig.for_grid(s.h, nl, record_every=5.0), 150.0)
    return prof, dom, hist


_PROFILE, _YDOM, _STRIP_RUN = _setup()
assert math.isfinite(_PROFILE.c_f)
