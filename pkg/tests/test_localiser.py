import math

import numpy as np
import pytest

import faultloc.localiser as loc
from faultloc.errors import AssumptionViolated, DomainViolation, GridMismatch, NumericalFailure
from faultloc.fault_estimator import estimate_fault_ports
from faultloc.line_model import modal_slowness
from faultloc.localiser import (FLAG_NO_ACTIVATION, CostProfile, LocaliserConfig, activation_filter,
                                activation_time, argmin_set, candidate_grid, check_recording,
                                cost_known, cost_passive, cost_surface, default_tail_guard,
                                lebesgue_weights, localise, localise_many, tilde_fault_voltage)
from faultloc.records import PortRecord
from faultloc.spectral import SpectralGrid, forward_transform, windowed_inverse
from faultloc.synthetic import exact_record, smooth_burst


def test_activation_time_step():
    dt = 1e-3
    i4 = np.zeros(100)
    i4[40:] = 2.0
    fte = activation_time(i4, dt, threshold=1e-6)
    assert fte.theta == pytest.approx(0.040)
    assert math.isinf(activation_time(np.zeros(10), dt, 1e-6).theta)
    two = np.zeros((100, 2))
    two[55:, 1] = 1.0
    assert activation_time(two, dt, 1e-6).theta == pytest.approx(0.055)


def test_activation_filter_is_causal():
    dt, n = 1e-5, 1 << 14
    g = SpectralGrid.for_record(n, dt, beta=1.0)
    x = smooth_burst(g.t, 0.05, 0.05) * np.sin(3e3 * g.t)
    y = windowed_inverse(forward_transform(x, g) * activation_filter(g.s, 2e4), g)
    y = y * np.exp(g.beta * g.t)
    assert np.abs(y[:5000]).max() <= 1e-12 * np.abs(y).max()
    assert np.all(activation_filter(g.s, None) == 1)
    assert abs(activation_filter(np.array([0.0]), 5.0)[0]) == pytest.approx(1.0)


def test_cost_known_split():
    dt = 0.1
    vf = np.array([1.0, 2.0, 3.0, 4.0])
    v4 = np.array([0.0, 0.0, 1.0, 1.0])
    # theta at sample 2: first two samples penalise vf, the rest vf - v4
    assert cost_known(vf, v4, 0.2, 10.0, 0.0, dt) == pytest.approx(dt * (1 + 4 + 4 + 9))
    assert cost_known(vf, v4, 0.0, 10.0, 0.0, dt) == pytest.approx(dt * (1 + 4 + 4 + 9))
    assert cost_known(vf, v4, math.inf, 10.0, 0.0, dt) == pytest.approx(dt * 30)
    assert cost_known(vf, vf, 0.0, 10.0, 0.0, dt) == 0.0
    # T cuts the integral
    assert cost_known(vf, v4, 0.0, 0.1, 0.0, dt) == pytest.approx(dt * 5)
    # beta re-weights the windowed samples
    w = cost_known(vf, 0 * v4, math.inf, 10.0, 1.0, dt)
    assert w == pytest.approx(dt * np.sum(vf ** 2 * np.exp(2 * dt * np.arange(4))))


def test_cost_passive_sign():
    g = SpectralGrid.for_record(8, 1.0, beta=0.1, omega_band=math.pi)
    I = np.ones((g.n_bins, 1), dtype=complex)
    assert cost_passive(I, -I, g) == 0.0
    assert cost_passive(I, 1j * I, g) == 0.0
    assert cost_passive(I, 2 * I, g) == pytest.approx(2 * g.d_omega * g.n_fft)
    with pytest.raises(GridMismatch):
        cost_passive(I, I[:3], g)


def test_tilde_fault_voltage_truncates():
    g = SpectralGrid.for_record(16, 1.0, beta=0.1)
    v = np.arange(16, dtype=float)
    V = tilde_fault_voltage(v, 4.0, g, n_samples=10)
    back = windowed_inverse(V, g)
    assert np.allclose(back[:4], 0) and np.allclose(back[4:10], v[4:10]) and np.allclose(back[10:], 0)


def test_argmin_ties_and_grid():
    assert argmin_set([3.0, 1.0, 2.0, 1.0]) == [1, 3]
    assert argmin_set([0.0, 0.0, 1.0]) == [0, 1]
    assert argmin_set([np.nan, np.inf]) == []
    g = candidate_grid((10.0, 9990.0), 100, inject=(7700.0,))
    assert g.size == 101 and 7700.0 in g and g[0] == 10.0 and g[-1] == 9990.0
    assert candidate_grid((0.0, 1.0), 3, inject=(0.5,)).size == 3
    with pytest.raises(DomainViolation):
        candidate_grid((0.0, 1.0), 3, inject=(2.0,))


def test_lebesgue_weights_sum():
    d = np.array([0.0, 1.0, 3.0, 10.0])
    w = lebesgue_weights(d, (0.0, 10.0))
    assert np.allclose(w, [0.5, 1.5, 4.5, 3.5]) and w.sum() == 10.0


def test_profile_error_and_fraction():
    p = CostProfile(d=np.array([0.0, 1.0, 2.0, 3.0]), theta=np.zeros(4), J=np.array([2.0, 1.0, 1.0, 3.0]),
                    Jt=np.array([0.0, 0.5, 1.0, 2.0]), flags=np.zeros(4, int), domain=(0.0, 3.0),
                    reference={"Jt_at_truth": 0.5}).finalise()
    assert p.argmin_J == [1, 2] and p.argmin_Jt == [0] and p.intersection == []
    assert p.error(1.0, "J") == 1.0
    assert p.error(0.0, "Jt") == 0.0
    assert p.sublevel_fraction() == pytest.approx(1.5 / 3)
    assert p.sublevel_fraction(10.0) == 1.0


def test_tail_guard_default(case_net):
    assert default_tail_guard(case_net) == pytest.approx(1.5 * 10e3 * modal_slowness(case_net.params))


@pytest.fixture(scope="module")
def exact_case():
    from faultloc.line_model import LineParameters
    from faultloc.network_model import FaultPhaseMask, NetworkAdmittance
    params = LineParameters.case_study()
    net = NetworkAdmittance(params, 10e3, FaultPhaseMask((1, 0, 0)), 10.0)
    rec, truth = exact_record(params, 10e3, 7.7e3, (1, 0, 0), 10.0, n_samples=1 << 13, t_f=4e-3,
                              width=4e-3, freq=2e3)
    return net, rec, truth


def test_zero_cost_at_truth_on_exact_data(exact_case):
    net, rec, truth = exact_case
    grid = candidate_grid(net.search_domain, 21, inject=(7.7e3,))
    cfg = LocaliserConfig(fault_time_bound=0.012, activation_cutoff=None)
    prof = localise(net, rec, phi=10.0, config=cfg, grid=grid, reference=(7.7e3, 4e-3))
    assert prof.minimisers("J") == [7.7e3]
    assert prof.reference["J_at_truth"] <= 1e-6 * np.median(prof.J)
    assert prof.reference["Jt_at_truth"] <= 1e-6 * np.median(prof.Jt)
    k = int(np.flatnonzero(prof.d == 7.7e3)[0])
    assert prof.theta[k] >= 4e-3 - rec.dt
    assert prof.meta["legs_in_batch"] == 1 and prof.meta["skipped_bins"] == 0


def test_batched_legs_match_single(exact_case):
    net, rec, _ = exact_case
    grid = np.array([3e3, 7.7e3])
    cfg = LocaliserConfig(fault_time_bound=0.012)
    a = localise_many(net, [rec, rec], [10.0, None], cfg, grid)
    b = localise(net, rec, phi=10.0, config=cfg, grid=grid)
    assert np.allclose(a[0].J, b.J, rtol=1e-12) and np.allclose(a[0].Jt, b.Jt, rtol=1e-12)
    assert np.all(np.isnan(a[1].J)) and np.allclose(a[1].Jt, b.Jt, rtol=1e-12)


def test_singleton_grid(exact_case):
    net, rec, _ = exact_case
    prof = localise(net, rec, phi=10.0, config=LocaliserConfig(fault_time_bound=0.012),
                    grid=[5e3], passive=False)
    assert prof.argmin_J == [0] and np.all(np.isnan(prof.Jt))
    assert prof.sublevel_fraction() != prof.sublevel_fraction()  # nan without a passive cost


def test_silent_record_flags_no_activation(case_net):
    n = 4096
    z = np.zeros((n, 3))
    rec = PortRecord(2e-6, z, np.zeros((n, 1)), z, z)
    prof = localise(case_net, rec, phi=1.0, grid=[5e3])
    assert prof.flags[0] & FLAG_NO_ACTIVATION


def test_localiser_preconditions(case_net, exact_case):
    _, rec, _ = exact_case
    with pytest.raises(DomainViolation):
        localise(case_net, rec, phi=1.0, grid=[])
    with pytest.raises(DomainViolation):
        localise(case_net, rec, phi=1.0, grid=[1.0])
    with pytest.raises(AssumptionViolated):
        localise(case_net, rec, phi=1.0, grid=[5e3], config=LocaliserConfig(tail_guard=1.0))
    short = PortRecord(rec.dt, rec.v1[:100], rec.i2[:100], rec.v3[:100], rec.i3[:100])
    with pytest.raises(GridMismatch):
        localise_many(case_net, [rec, short], [1.0, 1.0], grid=[5e3])
    bad = PortRecord(rec.dt, rec.v1[:, :2], rec.i2, rec.v3, rec.i3)
    with pytest.raises(GridMismatch):
        check_recording(bad, case_net)
    nanrec = PortRecord(rec.dt, rec.v1 * np.nan, rec.i2, rec.v3, rec.i3)
    with pytest.raises(NumericalFailure):
        check_recording(nanrec, case_net)
    check_recording(rec, case_net)


def test_split_identity(rng):
    g = SpectralGrid.for_record(256, 1e-3, beta=0.5)
    v = rng.normal(size=(256, 2))
    full = tilde_fault_voltage(v, 0.0, g)
    assert np.allclose(full, g.dt * np.fft.rfft(v, n=g.n_fft, axis=0))
    th = 0.1
    head = v.copy()
    head[100:] = 0
    split = tilde_fault_voltage(v, th, g) + g.dt * np.fft.rfft(head, n=g.n_fft, axis=0)
    assert np.abs(split - full).max() <= 1e-10 * np.abs(full).max()
    assert np.all(tilde_fault_voltage(v, 1.0, g) == 0)


def test_theta_monotone_in_threshold(rng):
    i4 = rng.normal(size=500) * np.linspace(0, 1, 500) ** 3
    th = [activation_time(i4, 1e-3, k).theta for k in (1e-6, 1e-3, 1e-1, 1.0, 10.0)]
    assert all(a <= b for a, b in zip(th, th[1:]))


def test_argmin_is_true_minimum(exact_case):
    net, rec, _ = exact_case
    grid = candidate_grid(net.search_domain, 7)
    prof = localise(net, rec, phi=10.0, config=LocaliserConfig(fault_time_bound=0.012), grid=grid)
    assert np.all(prof.J >= 0) and np.all(prof.Jt >= 0)
    assert prof.J[prof.argmin_J[0]] == prof.J.min() and prof.Jt[prof.argmin_Jt[0]] == prof.Jt.min()
    assert set(prof.intersection) == set(prof.argmin_J) & set(prof.argmin_Jt)


def test_flat_cost_after_true_time(exact_case):
    # on exact data J(ell, theta) stays at the quadrature floor for theta between t_f and theta_hat(ell)
    net, rec, truth = exact_case
    cfg = LocaliserConfig(fault_time_bound=0.012, activation_cutoff=None)
    prof = localise(net, rec, phi=10.0, config=cfg, grid=[7.7e3])
    th_hat = prof.theta[0]
    thetas = np.linspace(4e-3, th_hat, 5)
    J, Jt = cost_surface(net, rec, thetas, [7.7e3, 5e3], phi=10.0, config=cfg)
    assert np.all(J[0] <= 1e-9 * J[1].min())
    assert np.all(Jt[0] <= 1e-9 * Jt[1].min())


def test_true_fault_is_passive_per_bin(exact_case):
    net, rec, truth = exact_case
    g = SpectralGrid.for_record(rec.n_samples, rec.dt, beta=0.01)
    U = forward_transform(rec.stacked(), g)
    est = estimate_fault_ports(net, U, g.s, 7.7e3)
    v4 = windowed_inverse(est.V4[:, :1], g)
    k = int(round(4e-3 / g.dt))
    Vt = tilde_fault_voltage(v4, k * g.dt, g)
    inner = (np.conj(est.I4[:, :1]) * Vt).real[:, 0]
    assert inner.max() <= 1e-9 * np.abs(inner).max()


def test_frequency_blocks_match_single_pass(exact_case, monkeypatch):
    net, rec, _ = exact_case
    grid = [3e3, 7.7e3, 9e3]
    cfg = LocaliserConfig(fault_time_bound=0.012)
    a = localise(net, rec, phi=10.0, config=cfg, grid=grid)
    monkeypatch.setattr(loc, "STREAM_BUDGET", 1 << 20)
    b = localise(net, rec, phi=10.0, config=cfg, grid=grid)
    assert np.allclose(a.J, b.J, rtol=1e-10) and np.allclose(a.Jt, b.Jt, rtol=1e-10, atol=1e-30)
    assert np.array_equal(a.theta, b.theta)
