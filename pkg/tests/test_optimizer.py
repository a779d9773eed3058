import math

import numpy as np
import pytest

import emffarray.optimizer as opt
import emffarray.sizing as sz
from emffarray import antenna
from emffarray.formation import ControlIndexModel

CONSTS = sz.SizingConstants()


def quad_model(d_sat, c2, build_mass=0.35, n_max=46.0):
    ns = (3.0, 6.0, 10.0, 15.0, 22.0, 31.0, n_max)
    return ControlIndexModel(
        d_sat=d_sat, coeffs=(0.0, 0.0, c2, 0.0, 0.0),
        sample_points=tuple((n, c2 * n * n) for n in ns),
        residual=0.0, build_mass=build_mass)


MODEL15 = quad_model(0.15, 2.8e-7)
MODEL60_HOSTILE = quad_model(0.60, 2.8e-7 * 1024.0)


def case1(m_sys_target, mu_mar, n_gs=6, seed=0, model=MODEL15):
    return opt.CaseConfig(d_sat=0.15, m_sys_target=m_sys_target,
                          mode="sidelobe", mu_mar=mu_mar,
                          index_model=model, n_gs=n_gs, seed=seed)


class ConstantXi:
    """Stand-in RNG whose uniform draws are a fixed fraction of the range."""

    def __init__(self, frac):
        self.frac = frac

    def uniform(self, lo, hi, size=None):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        out = lo + self.frac * (hi - lo)
        if size is not None:
            out = np.broadcast_to(out, size).copy()
        return out


def test_case_config_validation():
    with pytest.raises(ValueError):
        opt.CaseConfig(d_sat=0.15, m_sys_target=500.0, mode="bogus")
    with pytest.raises(ValueError):
        opt.CaseConfig(d_sat=0.15, m_sys_target=500.0, mode="prescribed")
    with pytest.raises(ValueError):
        opt.CaseConfig(d_sat=0.0, m_sys_target=500.0, mode="sidelobe")
    with pytest.warns(UserWarning):
        opt.CaseConfig(d_sat=0.60, m_sys_target=500.0, mode="prescribed",
                       transmit_power=0.1)
    cfg = opt.CaseConfig(d_sat=0.15, m_sys_target=500.0, mode="sidelobe")
    assert cfg.link is not None
    assert cfg.link.indicator == pytest.approx(417.91429973584275, rel=1e-12)


def test_warm_start_lower_corner():
    case = case1(3000.0, 0.25)
    ws = opt.warm_start_sample(case, ConstantXi(0.0))
    d = ws.design
    assert d.a_sat == pytest.approx(CONSTS.a_sat_min)
    assert d.a_coil == pytest.approx(CONSTS.a_coil_min)
    assert d.q_coil == pytest.approx(CONSTS.q_coil_min)
    assert d.n == pytest.approx(CONSTS.n_min)
    assert ws.m_sys == pytest.approx(3000.0 * (1.0 - CONSTS.gamma_sys))
    n_l = 2.0 * d.n + 1.0
    assert d.u_psl == pytest.approx(-(2.0 - CONSTS.gamma_u) * math.pi / n_l)


def test_warm_start_upper_corner():
    case = case1(3000.0, 0.25)
    ws = opt.warm_start_sample(case, ConstantXi(1.0))
    d = ws.design
    assert d.a_sat == pytest.approx(min(0.15 / 2.0, CONSTS.side_cap / 2.0))
    assert d.a_coil == pytest.approx(0.15 / CONSTS.k_F)  # d/k_F caps the draw
    assert ws.m_sys == pytest.approx(3000.0 * (1.0 + CONSTS.gamma_sys))
    m_sat_min = sz.mass_lower_bound(CONSTS.a_sat_min, CONSTS)
    n_hi = (math.sqrt(ws.m_sys / m_sat_min) - 1.0) / 2.0
    assert d.n == pytest.approx(n_hi)
    n_l = 2.0 * d.n + 1.0
    assert d.u_psl == pytest.approx(-(1.0 + CONSTS.gamma_u) * math.pi / n_l)
    budget = (1.0 - CONSTS.eta_str) * sz.mass_upper_bound(d.a_sat, CONSTS)
    zero_coil = sz.component_masses(
        sz.SatelliteDesign(a_sat=d.a_sat, a_coil=d.a_coil, q_coil=0.0,
                           n=3.0, u_psl=-0.1), CONSTS)
    budget -= zero_coil.m_sap + zero_coil.m_bat + CONSTS.m_bus
    q_hi = budget / (6.0 * math.pi**2 * CONSTS.rho_c * d.a_coil)
    assert d.q_coil == pytest.approx(min(q_hi, opt.Q_COIL_CAP), rel=1e-12)


def test_warm_start_population_inside_box():
    case = case1(3000.0, 0.25)
    rng = np.random.default_rng(7)
    m_sat_min = sz.mass_lower_bound(CONSTS.a_sat_min, CONSTS)
    for _ in range(10_000):
        ws = opt.warm_start_sample(case, rng)
        d = ws.design
        assert CONSTS.a_sat_min <= d.a_sat <= 0.15 / 2.0 + 1e-15
        assert d.a_sat <= CONSTS.side_cap / 2.0
        assert CONSTS.a_coil_min <= d.a_coil <= 0.15 / 2.0 - CONSTS.r_mar
        assert CONSTS.q_coil_min <= d.q_coil <= opt.Q_COIL_CAP
        assert CONSTS.n_min <= d.n
        assert (2.0 * d.n + 1.0)**2 * m_sat_min <= ws.m_sys * (1.0 + 1e-12)
        assert abs(ws.m_sys - 3000.0) <= CONSTS.gamma_sys * 3000.0 + 1e-9
        n_l = 2.0 * d.n + 1.0
        assert math.pi / n_l < abs(d.u_psl) < 2.0 * math.pi / n_l
        assert d.u_psl < 0.0


def test_warm_start_failure_is_reported():
    case = case1(1.0, 0.0)  # cannot host the minimum grid at minimum mass
    with pytest.raises(opt.WarmStartError):
        opt.warm_start_sample(case, np.random.default_rng(0))


def test_tiny_target_infeasible_cell():
    res = opt.global_search(case1(1.0, 0.0, n_gs=3))
    assert not res.feasible
    assert res.reason is not None


def test_case1_small_target_quality():
    res = opt.global_search(case1(500.0, 0.0, n_gs=8, seed=1))
    assert res.feasible
    n_l = res.design.n_side
    assert n_l == int(n_l) and int(n_l) % 2 == 1
    assert 37 <= n_l <= 45
    assert abs(res.masses.m_sat - 0.293) <= 0.15 * 0.293
    assert res.margins_scaled_min >= -1e-6
    # independent re-check through the sizing report
    report = sz.check_constraints(
        res.design, res.masses, res.powers, d_sat=0.15, m_sys=res.m_sys,
        m_sys_target=500.0, consts=CONSTS)
    assert report["power"] >= -1e-6
    assert report["mass_upper"] >= -1e-6 * res.masses.m_sat
    assert report["mass_consistency"] >= -1e-6
    assert report["system_mass"] >= -1e-6


def test_reproducible_and_monotone_in_starts():
    a = opt.global_search(case1(500.0, 0.0, n_gs=4, seed=3))
    b = opt.global_search(case1(500.0, 0.0, n_gs=4, seed=3))
    assert a.design == b.design
    assert a.m_sys == b.m_sys
    wider = opt.global_search(case1(500.0, 0.0, n_gs=8, seed=3))
    assert wider.objective >= a.objective


def test_single_start_equals_local_solve():
    case = case1(500.0, 0.0, n_gs=1, seed=5)
    res = opt.global_search(case)
    ws = opt.warm_start_sample(case, np.random.default_rng(5))
    direct = opt.local_solve(ws, case)
    assert direct.design == res.design
    assert direct.feasible == res.feasible


def test_prescribed_mode_hostile_index_infeasible():
    case = opt.CaseConfig(d_sat=0.60, m_sys_target=6000.0, mode="prescribed",
                          transmit_power=0.4, mu_mar=0.25,
                          index_model=MODEL60_HOSTILE, n_gs=4, seed=0)
    res = opt.global_search(case)
    assert not res.feasible
    assert res.worst_violation is not None and res.worst_violation < 0.0


def test_evaluate_design_plumbing_and_margin_flip():
    case = opt.CaseConfig(d_sat=0.15, m_sys_target=600.0, mode="prescribed",
                          transmit_power=1e-4, mu_mar=0.0, n_gs=1)
    base = sz.SatelliteDesign(a_sat=0.045, a_coil=0.037, q_coil=1.47e-6,
                              n=20.0, u_psl=-0.1)
    m_sys = sz.component_masses(base, CONSTS).m_sat * base.n_all
    case = opt.CaseConfig(d_sat=0.15, m_sys_target=m_sys, mode="prescribed",
                          transmit_power=1e-4, mu_mar=0.0, n_gs=1)
    res = opt.evaluate_design(base, case, m_sys=m_sys)
    assert res.feasible
    assert res.eirp == antenna.eirp(1e-4, 41)
    assert res.gain == antenna.directivity_gain(41)
    assert res.transmit_power == 1e-4
    bumped = sz.SatelliteDesign(a_sat=0.045, a_coil=0.038, q_coil=1.47e-6,
                                n=20.0, u_psl=-0.1)
    res2 = opt.evaluate_design(bumped, case,
                               m_sys=sz.component_masses(bumped).m_sat * 1681)
    flips = [name for name in res.margins.as_dict()
             if (res.margins[name] >= 0.0) != (res2.margins[name] >= 0.0)]
    assert flips == ["coil_spacing"]
    assert not res2.feasible


def test_extrapolation_flagged():
    tiny = ControlIndexModel(
        d_sat=0.15, coeffs=(0.0, 0.0, 2.8e-7, 0.0, 0.0),
        sample_points=((3.0, 2.5e-6), (4.0, 4.5e-6), (5.0, 7e-6),
                       (6.0, 1e-5), (8.0, 1.8e-5)),
        residual=0.0, build_mass=0.35)
    case = opt.CaseConfig(d_sat=0.15, m_sys_target=600.0, mode="prescribed",
                          transmit_power=1e-4, mu_mar=0.0, index_model=tiny)
    d = sz.SatelliteDesign(a_sat=0.045, a_coil=0.037, q_coil=1.47e-6,
                           n=20.0, u_psl=-0.1)
    res = opt.evaluate_design(d, case)
    assert res.extrapolated
    in_range = opt.evaluate_design(
        sz.SatelliteDesign(a_sat=0.045, a_coil=0.037, q_coil=1.47e-6,
                           n=5.0, u_psl=-0.1), case)
    assert not in_range.extrapolated


def test_monotone_in_system_mass():
    sizes = []
    for target in (500.0, 3000.0):
        res = opt.global_search(case1(target, 0.25, n_gs=6, seed=2))
        assert res.feasible
        sizes.append(res.design.n_all)
    assert sizes[1] >= sizes[0]
