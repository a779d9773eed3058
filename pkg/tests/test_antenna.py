import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from emffarray import antenna as ant
from oracles import array_factor_sum, sidelobe_peak_scan

# frozen from oracles.sidelobe_peak_scan (dense scan + bounded refine)
U_PSL_5 = 0.9117382909712942
B_ENV_5 = 0.0625
B_ENV_93 = 0.047227189170245855
# root of tan(x) = x in (pi, 3*pi/2); large-array envelope limit 1/(1+x^2)
XSTAR = 4.493409457909064
B_LIMIT = 1.0 / (1.0 + XSTAR**2)


def case1_geometry(n_side=93):
    return ant.ArrayGeometry(n_side=n_side, spacing=0.15, wavelength=0.30,
                             theta0=math.pi / 6, phi0=math.pi / 4,
                             altitude=5e5)


def test_geometry_validation():
    with pytest.raises(ValueError):
        ant.ArrayGeometry(4, 0.15, 0.30, 0.0, 0.0, 5e5)
    with pytest.raises(ValueError):
        ant.ArrayGeometry(-3, 0.15, 0.30, 0.0, 0.0, 5e5)
    with pytest.raises(ValueError):
        ant.ArrayGeometry(5, -0.15, 0.30, 0.0, 0.0, 5e5)
    with pytest.raises(ValueError):
        ant.ArrayGeometry(5, 0.15, 0.30, 0.0, 0.0, 0.0)
    # spacing above half a wavelength invites grating lobes: warn, don't fail
    with pytest.warns(UserWarning):
        ant.ArrayGeometry(5, 0.20, 0.30, 0.0, 0.0, 5e5)
    ant.ArrayGeometry(3, 0.15, 0.30)  # minimal proper array is fine


def test_array_factor_main_beam_is_one():
    for n in (1, 5, 93):
        g = ant.ArrayGeometry(n, 0.15, 0.30, math.pi / 6, math.pi / 4, 5e5)
        assert_allclose(ant.array_factor(g, g.theta0, g.phi0), 1.0, rtol=1e-12)


def test_array_factor_single_element_flat():
    g = ant.ArrayGeometry(1, 0.15, 0.30, 0.0, 0.0, 5e5)
    th = np.linspace(-np.pi / 2, np.pi / 2, 41)
    ph = np.linspace(0, 2 * np.pi, 41)
    assert_allclose(ant.array_factor(g, th, ph), np.ones(41), rtol=1e-15)


def test_array_factor_first_null():
    # choose theta so that u_x = u_y = pi/5 on the diagonal cut
    g = ant.ArrayGeometry(5, 0.15, 0.30, 0.0, 0.0, 5e5)
    k = math.pi / g.wavelength
    theta = math.asin(math.sqrt(2) * (math.pi / 5) / (k * g.spacing))
    assert abs(ant.array_factor(g, theta, math.pi / 4)) < 1e-12


def test_array_factor_matches_element_sum():
    rng = np.random.default_rng(11)
    for n in (3, 5, 9):
        g = ant.ArrayGeometry(n, 0.15, 0.30, math.pi / 6, math.pi / 4, 5e5)
        for _ in range(40):
            th = rng.uniform(-np.pi / 2, np.pi / 2)
            ph = rng.uniform(0, 2 * np.pi)
            ref = array_factor_sum(n, g.spacing, g.wavelength,
                                   g.theta0, g.phi0, th, ph)
            assert_allclose(abs(ant.array_factor(g, th, ph)), ref,
                            rtol=1e-10, atol=1e-12)


def test_array_factor_bounded_by_one():
    th = np.linspace(-np.pi / 2, np.pi / 2, 601)
    ph = np.linspace(0, 2 * np.pi, 601)
    T, P = np.meshgrid(th, ph)
    for n in (5, 37, 93):
        g = ant.ArrayGeometry(n, 0.15, 0.30, math.pi / 6, math.pi / 4, 5e5)
        a = ant.array_factor(g, T, P)
        assert np.max(np.abs(a)) <= 1.0 + 1e-12


def test_array_factor_series_guard_near_zero():
    g = ant.ArrayGeometry(9, 0.15, 0.30, 0.0, 0.0, 5e5)
    # u passes through zero smoothly; tiny angles must not blow up
    for th in (0.0, 1e-12, 1e-9, -1e-9):
        assert_allclose(ant.array_factor(g, th, 0.3), 1.0, atol=1e-10)


def test_grating_lobe_when_spacing_exceeds_half_wavelength():
    # d = 0.4 > lambda/2 puts u = +-pi inside visible space: a full-height
    # secondary lobe appears, which is exactly why the constructor warns.
    with pytest.warns(UserWarning):
        g = ant.ArrayGeometry(5, 0.40, 0.30, 0.0, 0.0, 5e5)
    theta_g = math.asin(g.wavelength / g.spacing)  # u_x = pi at phi = 0
    assert_allclose(abs(ant.array_factor(g, theta_g, 0.0)), 1.0, rtol=1e-9)


def test_no_grating_lobe_dense_scan_at_half_wavelength():
    g = case1_geometry(7)
    th = np.linspace(-np.pi / 2, np.pi / 2, 1201)
    ph = np.linspace(0, 2 * np.pi, 1201)
    T, P = np.meshgrid(th, ph)
    a = np.abs(ant.array_factor(g, T, P))
    # blank out the main-beam neighbourhood, then nothing reaches |A| = 1
    sin_t = np.sin(T)
    bx = sin_t * np.cos(P) - math.sin(g.theta0) * math.cos(g.phi0)
    by = sin_t * np.sin(P) - math.sin(g.theta0) * math.sin(g.phi0)
    off_beam = np.hypot(bx, by) > 0.5 / g.n_side
    assert np.max(a[off_beam]) < 0.999


def test_directivity_gain():
    assert ant.directivity_gain(1) == 1.0
    assert ant.directivity_gain(93) == 8649.0
    assert ant.directivity_gain(131) == 17161.0
    assert_allclose(ant.to_db(ant.directivity_gain(93)), 39.37, atol=0.005)
    assert abs(ant.to_db(ant.directivity_gain(93)) - 39.4) <= 0.05
    assert abs(ant.to_db(ant.directivity_gain(131)) - 42.4) <= 0.1
    with pytest.raises(ValueError):
        ant.directivity_gain(0)


def test_eirp_values_and_scaling():
    assert ant.eirp(0.7, 1) == 0.7
    assert_allclose(ant.eirp(0.2, 37), 0.2 * 37**4, rtol=1e-15)
    assert abs(ant.to_db(ant.eirp(0.2, 37)) - 56.0) <= 0.5
    assert_allclose(ant.eirp(0.3, 74) / ant.eirp(0.3, 37), 16.0, rtol=1e-13)
    with pytest.raises(ValueError):
        ant.eirp(-1.0, 5)


def test_first_null_footprint_frozen_case():
    theta_n1, d_fp = ant.first_null_footprint(case1_geometry())
    assert_allclose(theta_n1, 0.5590878990591026, rtol=1e-12)
    assert_allclose(d_fp, 35489.12346080379, rtol=1e-12)
    # published figure uses a slightly different convention; stay within 5%
    assert abs(d_fp - 34.7e3) / 34.7e3 < 0.05


def test_footprint_monotone_and_limits():
    fps = [ant.first_null_footprint(case1_geometry(n))[1]
           for n in range(25, 144, 2)]
    assert all(a > b for a, b in zip(fps, fps[1:]))
    d_list = [ant.first_null_footprint(
        ant.ArrayGeometry(93, d, 0.30, math.pi / 6, math.pi / 4, 5e5))[1]
        for d in (0.05, 0.10, 0.15)]
    assert d_list[0] > d_list[1] > d_list[2]
    # huge array: first null collapses onto the beam direction
    th_big, fp_big = ant.first_null_footprint(case1_geometry(100001))
    assert abs(th_big - math.pi / 6) < 1e-4
    assert fp_big < 100.0


def test_footprint_boundary_and_error():
    # sqrt(2)*lambda/(n*d) = 1 with theta0 = 0 sits exactly at the edge
    lam, n = 0.30, 3
    d = math.sqrt(2) * lam / n
    g = ant.ArrayGeometry(n, d, lam, 0.0, 0.0, 5e5)
    theta_n1, _ = ant.first_null_footprint(g)
    assert_allclose(theta_n1, math.pi / 2, rtol=1e-12)
    with pytest.raises(ant.BeamEdgeError):
        ant.first_null_footprint(ant.ArrayGeometry(3, 0.15, 0.30,
                                                   math.pi / 6, 0.0, 5e5))


def test_peak_sidelobe_small_array():
    sol = ant.solve_peak_sidelobe(5)
    assert_allclose(sol.u_psl, U_PSL_5, rtol=1e-9)
    assert_allclose(sol.envelope, B_ENV_5, rtol=1e-9)
    assert_allclose(sol.envelope_db, -12.0412, atol=5e-4)
    assert math.pi / 5 < sol.u_psl < 2 * math.pi / 5
    # stationarity residual far tighter than the 1e-5 budget
    n, u = 5, sol.u_psl
    assert abs(n * math.sin(u) * math.cos(n * u)
               - math.cos(u) * math.sin(n * u)) < 1e-10


def test_peak_sidelobe_case1_value():
    sol = ant.solve_peak_sidelobe(93)
    assert_allclose(sol.envelope, B_ENV_93, rtol=1e-9)
    assert abs(sol.envelope_db - (-13.3)) <= 0.1
    assert_allclose(sol.envelope_db, -13.2581, atol=5e-4)


def test_peak_sidelobe_matches_scan_oracle():
    for n in (7, 37, 101):
        u_ref, b_ref = sidelobe_peak_scan(n)
        sol = ant.solve_peak_sidelobe(n)
        assert_allclose(sol.u_psl, u_ref, rtol=1e-7)
        assert_allclose(sol.envelope, b_ref, rtol=1e-9)


def test_peak_sidelobe_envelope_monotone_to_limit():
    levels = [ant.solve_peak_sidelobe(n).envelope for n in range(5, 102, 2)]
    assert all(a > b for a, b in zip(levels, levels[1:]))
    db_at_101 = 10 * math.log10(levels[-1])
    assert abs(db_at_101 - 10 * math.log10(B_LIMIT)) < 0.05
    # every envelope stays above the infinite-array floor
    assert min(levels) > B_LIMIT


def test_peak_sidelobe_continuous_count():
    # fractional counts must work; the optimizer relaxes the integer grid
    sol = ant.solve_peak_sidelobe(10.5)
    assert math.pi / 10.5 < sol.u_psl < 2 * math.pi / 10.5
    lo = ant.solve_peak_sidelobe(9).envelope
    hi = ant.solve_peak_sidelobe(11).envelope
    assert hi < sol.envelope < lo


def test_peak_sidelobe_rejects_tiny_count():
    for bad in (1, 2, 2.9):
        with pytest.raises(ValueError):
            ant.solve_peak_sidelobe(bad)


def test_link_indicator_case1():
    p_r = ant.dbm_to_watts(-87.2)
    lb = ant.link_indicator_d2d(p_r, ant.from_db(0.0), 0.5, 5e5, 0.30)
    assert_allclose(lb.path_loss, 438649084492860.4, rtol=1e-12)
    assert_allclose(lb.indicator, 417.91429973584275, rtol=1e-12)
    assert_allclose(lb.indicator, 417.9, rtol=1e-3)
    assert lb.indicator == (lb.attenuation * lb.required_power
                            * lb.path_loss / lb.receive_gain)


def test_link_indicator_identities():
    lb = ant.link_indicator_d2d(2e-12, 1.0, 1.0, 5e5, 0.30)
    assert_allclose(lb.indicator, 2e-12 * lb.path_loss, rtol=1e-15)
    half = ant.link_indicator_d2d(2e-12, 1.0, 1.0, 5e5, 0.15)
    assert_allclose(half.path_loss / lb.path_loss, 4.0, rtol=1e-13)
    with pytest.raises(ValueError):
        ant.link_indicator_d2d(2e-12, 1.0, 1.5, 5e5, 0.30)
    with pytest.raises(ValueError):
        ant.link_indicator_d2d(-2e-12, 1.0, 0.5, 5e5, 0.30)


def test_transmit_power_case1():
    p_r = ant.dbm_to_watts(-87.2)
    lb = ant.link_indicator_d2d(p_r, 1.0, 0.5, 5e5, 0.30)
    sll = ant.solve_peak_sidelobe(93)
    p_t = ant.transmit_power_from_sll(lb.indicator, 93, sll)
    assert_allclose(p_t, 0.00011829416935109275, rtol=1e-9)
    assert_allclose(p_t, 1.18e-4, rtol=5e-3)


def test_main_beam_eirp_independent_of_count():
    p_r = ant.dbm_to_watts(-87.2)
    lb = ant.link_indicator_d2d(p_r, 1.0, 0.5, 5e5, 0.30)
    for n in range(25, 144, 2):
        sll = ant.solve_peak_sidelobe(n)
        p_t = ant.transmit_power_from_sll(lb.indicator, n, sll)
        eirp_db = ant.to_db(ant.eirp(p_t, n))
        assert abs(eirp_db - 39.5) <= 0.2


def test_sidelobe_equality_round_trip():
    for n in (5, 37, 93):
        sll = ant.solve_peak_sidelobe(n)
        for i_r in (1.0, 417.9):
            p_t = ant.transmit_power_from_sll(i_r, n, sll)
            assert_allclose(ant.eirp(p_t, n) * sll.envelope, i_r, rtol=1e-14)


def test_db_helpers():
    assert_allclose(ant.to_db(1000.0), 30.0, rtol=1e-15)
    assert_allclose(ant.from_db(30.0), 1000.0, rtol=1e-15)
    assert_allclose(ant.watts_to_dbm(1.0), 30.0, rtol=1e-15)
    assert_allclose(ant.dbm_to_watts(-30.0), 1e-6, rtol=1e-15)
    assert_allclose(ant.dbm_to_watts(ant.watts_to_dbm(0.123)), 0.123,
                    rtol=1e-14)
    with pytest.raises(ValueError):
        ant.to_db(0.0)
