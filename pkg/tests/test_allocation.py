"""Dual certificates and primal recovery for the pair allocation problem."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from emffarray.allocation import (
    KAPPA,
    AllocationResult,
    DualResult,
    WrenchTarget,
    allocate,
    required_moment,
    solve_dual,
    solve_primal,
)
from emffarray.magnetics import MU0, InteractionGeometry, interaction_matrix

import oracles


def pair_matrix(r_jk):
    return interaction_matrix(InteractionGeometry(np.asarray(r_jk, dtype=float)))


def forward_target(Q, rng, scale=1.0):
    """A feasible wrench target plus the cost of the generating amplitudes."""
    v = rng.normal(size=12) * scale
    u = KAPPA * Q @ (np.kron(v[3:6], v[:3]) + np.kron(v[9:], v[6:9]))
    return u, 0.5 * v @ v


def random_rotation(rng):
    A = rng.normal(size=(3, 3))
    Qr, R = np.linalg.qr(A)
    Qr = Qr * np.sign(np.diag(R))
    if np.linalg.det(Qr) < 0:
        Qr[:, 0] = -Qr[:, 0]
    return Qr


def test_coaxial_force_analytic():
    # axial attraction at separation d: the cheapest realization keeps both
    # moments on the line of sight, costing 4*pi*d^4*|F| / (3*mu0)
    d = 0.15
    Q = pair_matrix([d, 0.0, 0.0])
    F = -3.0 * MU0 * 2.0 / (4.0 * np.pi * d**4)
    u = np.array([F, 0.0, 0.0, 0.0, 0.0, 0.0])
    dual = solve_dual(Q, u)
    assert_allclose(dual.J_d, 2.0, rtol=1e-6)
    sol = solve_primal(Q, u)
    assert sol.converged
    assert_allclose(sol.J_p, 2.0, rtol=1e-6)
    assert sol.residual <= 1e-8 * (1 + np.linalg.norm(u))


def test_required_moment():
    assert_allclose(required_moment(2.0), np.sqrt(2.0), rtol=1e-15)
    assert required_moment(0.0) == 0.0
    with pytest.raises(ValueError):
        required_moment(-1e-9)


def test_zero_target():
    Q = pair_matrix([0.2, 0.0, 0.0])
    dual = solve_dual(Q, np.zeros(6))
    assert dual.J_d == 0.0
    assert dual.sigma_max == 0.0
    sol = solve_primal(Q, np.zeros(6))
    assert sol.converged
    assert sol.J_p == 0.0
    assert sol.residual == 0.0


def test_target_validation():
    with pytest.raises(ValueError):
        WrenchTarget(np.zeros(5))
    Q = pair_matrix([0.2, 0.0, 0.0])
    with pytest.raises(ValueError):
        solve_dual(Q, np.zeros((2, 3)))


def test_dual_certificate_is_feasible_and_consistent():
    rng = np.random.default_rng(7)
    Q = pair_matrix([0.12, -0.07, 0.05])
    for _ in range(8):
        u, _ = forward_target(Q, rng)
        dual = solve_dual(Q, u)
        assert dual.sigma_max <= 1.0 + 1e-9
        assert_allclose(dual.J_d, -dual.lambda_ @ u / KAPPA, rtol=1e-12)
        assert dual.J_d > 0.0


def test_duality_gap_closes_on_feasible_targets():
    rng = np.random.default_rng(42)
    geoms = [[0.15, 0.0, 0.0], [0.0, 0.3, 0.0], [0.2, 0.2, -0.1],
             [-0.05, 0.11, 0.23]]
    for r in geoms:
        Q = pair_matrix(r)
        for _ in range(5):
            u, J_gen = forward_target(Q, rng)
            dual = solve_dual(Q, u)
            sol = solve_primal(Q, u)
            assert sol.converged
            assert sol.residual <= 1e-8 * (1 + np.linalg.norm(u))
            # generating amplitudes are feasible, so never beaten
            assert sol.J_p <= J_gen * (1 + 1e-9)
            # weak duality plus a closed gap
            assert dual.J_d <= sol.J_p * (1 + 1e-9)
            assert (sol.J_p - dual.J_d) <= 1e-5 * max(dual.J_d, 1e-12)


def test_matches_bruteforce_oracle():
    rng = np.random.default_rng(3)
    Q = pair_matrix([0.18, 0.04, -0.09])
    for k in range(3):
        u, _ = forward_target(Q, rng)
        sol = solve_primal(Q, u)
        J_bf = oracles.primal_bruteforce(Q, u, n_starts=16, seed=100 + k)
        assert np.isfinite(J_bf)
        assert_allclose(sol.J_p, J_bf, rtol=1e-4)


def test_rotation_invariance():
    rng = np.random.default_rng(11)
    r = np.array([0.21, -0.05, 0.13])
    Q = pair_matrix(r)
    u, _ = forward_target(Q, rng)
    base = solve_dual(Q, u).J_d
    for _ in range(4):
        R = random_rotation(rng)
        u_rot = np.concatenate([R @ u[:3], R @ u[3:]])
        J_rot = solve_dual(pair_matrix(R @ r), u_rot).J_d
        assert_allclose(J_rot, base, rtol=1e-8)


def test_cost_is_degree_one_in_target():
    rng = np.random.default_rng(23)
    Q = pair_matrix([0.0, 0.0, 0.25])
    u, _ = forward_target(Q, rng)
    J1 = solve_dual(Q, u).J_d
    for alpha in (0.1, 2.0, 7.5):
        assert_allclose(solve_dual(Q, alpha * u).J_d, alpha * J1, rtol=1e-8)
        sol = solve_primal(Q, alpha * u)
        assert_allclose(sol.J_p, alpha * J1, rtol=1e-5)


def test_canonical_sign_and_warm_restart():
    rng = np.random.default_rng(5)
    Q = pair_matrix([0.16, 0.0, 0.12])
    u, _ = forward_target(Q, rng)
    sol = solve_primal(Q, u)
    nz = np.flatnonzero(np.abs(sol.c_k) > 0)
    if nz.size:
        assert sol.c_k[nz[0]] >= 0.0
    again = solve_primal(Q, u, seed=sol)
    assert_allclose(again.J_p, sol.J_p, rtol=1e-10)
    assert again.converged


def test_accepts_wrench_target_wrapper():
    Q = pair_matrix([0.15, 0.0, 0.0])
    rng = np.random.default_rng(9)
    u, _ = forward_target(Q, rng)
    assert_allclose(solve_dual(Q, WrenchTarget(u)).J_d, solve_dual(Q, u).J_d,
                    rtol=1e-12)


def test_combined_call_certifies_both_sides():
    Q = pair_matrix([0.09, -0.21, 0.04])
    rng = np.random.default_rng(31)
    for _ in range(4):
        u, J_gen = forward_target(Q, rng)
        dual, primal = allocate(Q, u)
        assert isinstance(dual, DualResult)
        assert isinstance(primal, AllocationResult)
        assert primal.converged
        assert primal.J_p <= J_gen * (1 + 1e-9)
        assert (primal.J_p - dual.J_d) <= 1e-5 * dual.J_d
