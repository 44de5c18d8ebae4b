import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from diukit.lyapunov import LyapunovConfig
from diukit.shearflow import (CharacteristicRootError, CylinderHistory, ShearParams,
                              characteristic_root, dde_heatmap, dde_integrate, dde_kick,
                              dde_lyapunov, delay_free_time_T_map, history_distance,
                              hyperbolicity_factor)

LAM, SIGMA, A = 0.1, 3.0, 0.1
SHORT = LyapunovConfig(cycles=100, burn_in=10)


def _closed_form(theta0, z0, t, lam=LAM, sigma=SIGMA):
    e = math.exp(-lam * t)
    return theta0 + t + sigma * z0 * (1 - e) / lam, z0 * e


# --- integration ------------------------------------------------------------

@pytest.mark.parametrize("t1", [0.5, 17.0, 300.0])
def test_delay_free_limit_matches_closed_form(t1):
    h = CylinderHistory.constant(0.0, 0.3, 0.7)
    out = dde_integrate(ShearParams(tau=0.0), h, t1)
    th, z = _closed_form(0.3, 0.7, t1)
    assert out.z_now[0] == pytest.approx(z, abs=1e-8)
    assert out.th_now[0] == pytest.approx(th, abs=1e-8)


def test_tiny_delay_matches_closed_form():
    tau = 1e-6
    out = dde_integrate(ShearParams(tau=tau), CylinderHistory.constant(tau, 0.2, 0.5, m=4), 1.0)
    th, z = _closed_form(0.2, 0.5, 1.0)
    assert abs(out.z_now[0] - z) < 1e-5
    assert abs(out.th_now[0] - th) < 1e-5


def test_constant_history_initial_slope():
    tau, c = 3.0, 0.8
    h = CylinderHistory.constant(tau, 0.0, c)
    dt = tau / h.m
    out = dde_integrate(ShearParams(tau=tau), h, dt)
    # z(t - tau) = c on the whole first step, so the step is exactly linear
    assert (out.z_now[0] - c) / dt == pytest.approx(-LAM * c, rel=1e-12)


def test_unstable_delay_grows():
    tau = 2.0 / LAM  # lambda * tau = 2 > pi/2
    root = characteristic_root(LAM, tau)
    assert root.gamma.real > 0
    h = CylinderHistory.constant(tau, 0.0, 1.0)
    p = ShearParams(tau=tau)
    z10 = abs(dde_integrate(p, h, 10 * tau).z_now[0])
    z20 = abs(dde_integrate(p, h, 20 * tau).z_now[0])
    assert z20 > z10


def _envelope(p, h, t0, omega):
    # max |z| over one full oscillation starting at t0
    t = t0 + np.linspace(0.0, 2 * math.pi / omega, 200)
    return max(abs(dde_integrate(p, h, s).z_now[0]) for s in t)


@pytest.mark.parametrize("tau", [5.0, 20.0])
def test_envelope_rate_matches_leading_root(tau):
    root = characteristic_root(LAM, tau)
    h = CylinderHistory.constant(tau, 0.0, 1.0, m=16)
    p = ShearParams(tau=tau)
    a = _envelope(p, h, 20 * tau, root.gamma.imag)
    b = _envelope(p, h, 30 * tau, root.gamma.imag)
    assert math.log(b / a) / (10 * tau) == pytest.approx(root.gamma.real, rel=0.05)


def test_mesh_refinement():
    tau = 12.0
    p = ShearParams(tau=tau)
    z = [dde_integrate(p, dde_kick(CylinderHistory.quadratic(tau, m), A), 10 * tau).z_now[0]
         for m in (64, 128)]
    assert abs(z[0] - z[1]) < 1e-6


def test_integrate_does_not_mutate_input_and_rejects_past():
    h = CylinderHistory.quadratic(2.0)
    before = h.nodes()
    dde_integrate(ShearParams(tau=2.0), h, 10.0)
    after = h.nodes()
    for x, y in zip(before, after):
        assert np.array_equal(x, y)
    with pytest.raises(ValueError):
        dde_integrate(ShearParams(tau=2.0), h, -1.0)


def test_history_window_endpoints_and_mesh():
    tau = 4.0
    h = CylinderHistory.quadratic(tau, m=8)
    ts, th, z = h.nodes()
    assert len(ts) == 9 and np.allclose(np.diff(ts), tau / 8)
    np.testing.assert_allclose(z[:, 0], ts ** 2, rtol=1e-12, atol=1e-12)
    # cubic interpolation reproduces the quadratic between nodes
    assert h.z_at(-1.3) == pytest.approx(1.69, rel=1e-12)
    with pytest.raises(ValueError):
        h.z_at(-5.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.5, 14.0))
def test_z_dynamics_ignore_theta_shift(shift, tau):
    p = ShearParams(tau=tau)
    a = CylinderHistory.quadratic(tau, m=16)
    b = CylinderHistory.from_function(tau, lambda s: (shift, s * s), m=16,
                                      derivative=lambda s: (0.0, 2 * s))
    za = dde_integrate(p, dde_kick(a, A), 3 * tau).nodes()[2]
    zb = dde_integrate(p, dde_kick(b, A), 3 * tau).nodes()[2]
    assert np.array_equal(za, zb)


def test_theta_reported_on_circle():
    h = dde_integrate(ShearParams(tau=1.0), CylinderHistory.constant(1.0, 0.9, 2.0), 37.3)
    th, _ = h.present
    assert 0.0 <= th < 1.0


def test_history_distance_uses_circle_metric():
    h = CylinderHistory.from_function(1.0, lambda s: (0.005, 0.0), m=4,
                                      derivative=lambda s: (0.0, 0.0)).stacked(2)
    h.th_now[1] = 0.995
    h._V[:, 4:6, 1] = 0.995  # theta values of the second copy, both piece ends
    assert history_distance(h) == pytest.approx(0.01, rel=1e-9)


# --- kicks ------------------------------------------------------------------

def test_kick_examples():
    h = CylinderHistory.constant(2.0, 0.25, 0.5)
    same = dde_kick(h, 0.0)
    assert same.present == h.present
    k = dde_kick(h, 0.1)
    assert k.present == (0.25, pytest.approx(0.6, abs=1e-15))
    # the past is untouched
    for x, y in zip(h.nodes(), k.nodes()):
        assert np.array_equal(x[:-1], y[:-1])
    h0 = CylinderHistory.constant(2.0, 0.0, 0.5)
    s = dde_kick(h0, 0.1, lambda th: math.sin(2 * math.pi * th))
    assert s.present == h0.present


def test_delay_free_map_agrees_with_integration():
    p = ShearParams(tau=0.0, T=23.0)
    theta, z = 0.1, 0.4
    h = CylinderHistory.constant(0.0, theta, z)
    for _ in range(20):
        h = dde_integrate(p, dde_kick(h, p.A), h.t + p.T)
        theta, z = delay_free_time_T_map(p, theta, z)
    assert h.present[1] == pytest.approx(z, abs=1e-10)
    assert (h.present[0] - theta + 0.5) % 1.0 - 0.5 == pytest.approx(0.0, abs=1e-8)


# --- characteristic equation -----------------------------------------------------

def test_root_delay_free():
    r = characteristic_root(LAM, 0.0)
    assert r.gamma == -0.1


def test_root_at_stability_boundary():
    r = characteristic_root(LAM, math.pi / (2 * LAM))
    assert abs(r.gamma.real) < 1e-8
    assert abs(r.gamma.imag) == pytest.approx(0.1, abs=1e-8)


@pytest.mark.parametrize("tau", [0.5, 1.0, 3.0])
def test_real_root_matches_lambert_w(tau):
    r = characteristic_root(LAM, tau)
    ref = lambertw(-LAM * tau, 0) / tau
    assert r.gamma.real == pytest.approx(ref.real, abs=1e-12)
    assert r.residual < 1e-12
    if tau == 1.0:
        assert r.gamma.real == pytest.approx(-0.11183, abs=5e-6)
        assert r.gamma.imag == 0.0


@pytest.mark.parametrize("tau", [1.0, 5.0, 12.0, 20.0, 40.0])
def test_root_has_largest_real_part(tau):
    # every root is W_k(-lam*tau)/tau; the principal branch has the largest real part
    r = characteristic_root(LAM, tau)
    others = [lambertw(-LAM * tau, k) / tau for k in range(-5, 6)]
    assert r.gamma.real == pytest.approx(max(g.real for g in others), abs=1e-10)
    g = r.gamma
    assert abs(g + LAM * np.exp(-g * tau)) < 1e-12


def test_stability_flip_at_quarter_period():
    lo, hi = 10.0, 20.0
    assert characteristic_root(LAM, lo).gamma.real < 0 < characteristic_root(LAM, hi).gamma.real
    while hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        if characteristic_root(LAM, mid).gamma.real < 0:
            lo = mid
        else:
            hi = mid
    assert abs(lo - math.pi / (2 * LAM)) < 1e-6


def test_root_nonconvergence_reports_last_iterate():
    with pytest.raises(CharacteristicRootError) as ei:
        characteristic_root(LAM, 7.0, max_iter=1)
    assert isinstance(ei.value.last, complex)


def test_root_rejects_bad_arguments():
    with pytest.raises(ValueError):
        characteristic_root(0.0, 1.0)
    with pytest.raises(ValueError):
        characteristic_root(LAM, -1.0)


# --- Lyapunov exponent ------------------------------------------------------------

@pytest.mark.parametrize("amp", [0.0, 0.1])
def test_delay_free_exponent_is_zero(amp):
    p = ShearParams(tau=0.0, A=amp, T=20.0)
    est = dde_lyapunov(p, CylinderHistory.constant(0.0, 0.0, 0.0), SHORT)
    assert abs(est.lambda_max) < 1e-3


@pytest.mark.parametrize("tau,T", [(0.5, 20.0), (5.0, 50.0), (12.0, 100.0)])
def test_stable_delay_exponent_matches_neutral_theta_direction(tau, T):
    # with a constant kick profile a uniform theta shift is an exact symmetry, so the
    # leading exponent is max(0, T * Re gamma) and is 0 below the stability boundary
    p = ShearParams(tau=tau, T=T)
    est = dde_lyapunov(p, CylinderHistory.quadratic(tau, 32), SHORT)
    assert characteristic_root(LAM, tau).gamma.real < 0
    assert abs(est.lambda_max) < 1e-3


def test_exponent_above_stability_boundary_tracks_root():
    # unkicked, resting base (z = 0): the base stays bounded, so the separation is
    # resolved in double precision while it grows at the unstable root's rate
    tau, T = 20.0, 10.0
    p = ShearParams(tau=tau, T=T, A=0.0)
    est = dde_lyapunov(p, CylinderHistory.constant(tau, 0.0, 0.0, 32),
                       LyapunovConfig(cycles=300, burn_in=100))
    assert est.lambda_max == pytest.approx(T * characteristic_root(LAM, tau).gamma.real,
                                           rel=0.02)


def test_dde_lyapunov_series_and_determinism():
    p = ShearParams(tau=2.0, T=10.0)
    a = dde_lyapunov(p, CylinderHistory.quadratic(2.0, 16), SHORT)
    b = dde_lyapunov(p, CylinderHistory.quadratic(2.0, 16), SHORT)
    assert len(a.log_growth) == SHORT.cycles
    assert a.lambda_max == float(np.mean(a.log_growth))
    assert a.log_growth.tobytes() == b.log_growth.tobytes()


# --- heatmap and parameters ---------------------------------------------------------

def test_heatmap_threads_and_csv(tmp_path):
    cfg = LyapunovConfig(cycles=20, burn_in=5)
    base = ShearParams()
    a = dde_heatmap(base, [0.5, 4.0], [5.0, 30.0], cfg, m=8, threads=1)
    b = dde_heatmap(base, [0.5, 4.0], [5.0, 30.0], cfg, m=8, threads=2)
    assert a.values.shape == (2, 2)
    assert a.values.tobytes() == b.values.tobytes()
    a.to_csv(tmp_path / "h.csv", zero_band=1e-3)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "tau,T,lambda_max,sign" and len(lines) == 5


def test_heatmap_signs_treat_nan_as_zero():
    from diukit.shearflow import DDEHeatmap
    h = DDEHeatmap(np.array([1.0]), np.array([1.0, 2.0, 3.0]),
                   np.array([[np.nan, -0.5, 2e-4]]))
    assert h.signs(1e-3).tolist() == [[0, -1, 0]]
    assert h.signs().tolist() == [[0, -1, 1]]


def test_hyperbolicity_factor():
    assert hyperbolicity_factor(0.1, 3.0, 0.1) == pytest.approx(3.0)
    assert hyperbolicity_factor(0.0, 3.0, 0.1) == 0.0
    assert hyperbolicity_factor(1.0, 1.0, 1.0) == 1.0
    with pytest.raises(ValueError):
        hyperbolicity_factor(1.0, 1.0, 0.0)


@pytest.mark.parametrize("kw", [dict(lam=0.0), dict(tau=-1.0), dict(T=0.0), dict(A=math.inf)])
def test_shear_params_validation(kw):
    with pytest.raises(ValueError):
        ShearParams(**kw)
