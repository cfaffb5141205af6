import math
import warnings

import numpy as np
import pytest

from cpms.complex_monotone import catalog, make_beta
from cpms.errors import ConfigurationError, PicardError
from cpms.galerkin_solver import (OUTSIDE_THEOREM, Problem, SolverConfig, cauchy_study,
                                  fitted_energy_constant, solve_fixed_law, solve_mckean_vlasov,
                                  step)
from cpms.mean_field import make_drift
from cpms.noise import make_noise, sample_ensemble
from cpms.spectral_space import Norm, build_space

CAT = catalog()
SP = build_space(1.0, 8)


def test_step_dt_zero_is_identity(rng):
    Y = rng.standard_normal((3, 8)) + 0j
    out = step(Y, 0.0, 0.0, None, None, None, CAT["power_phase_2"], None, space=SP)
    assert np.array_equal(out, Y)


def test_explicit_linear_step(rng):
    c = 0.3 + 0.2j
    Y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    dt = 1e-5
    out = step(Y, 0.0, dt, None, None, None, make_beta("linear", {"c": c}), None, "explicit", space=SP)
    assert np.allclose(out, (1 - dt * SP.eigenvalues * c) * Y, rtol=1e-12, atol=1e-14)


def test_semi_implicit_linear_step(rng):
    c = 0.1 + 1j
    Y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    dt = 1e-3
    out, it = step(Y, 0.0, dt, None, None, None, make_beta("linear", {"c": c}), None, space=SP,
                   return_iterations=True)
    assert np.allclose(out, Y / (1 + dt * SP.eigenvalues * c), rtol=1e-10, atol=1e-14)
    assert it <= 3


def test_explicit_cfl_and_infinite_lipschitz_rejected():
    Y = np.ones(8, dtype=complex)
    with pytest.raises(ConfigurationError):
        step(Y, 0, 1e-2, None, None, None, CAT["linear_1"], None, "explicit", space=SP)
    with pytest.raises(ConfigurationError):
        step(Y, 0, 1e-9, None, None, None, CAT["power_phase_2"], None, "explicit", space=SP)


def test_preconditioned_matches_newton(rng):
    Y = 0.5 * (rng.standard_normal((2, 8)) + 1j * rng.standard_normal((2, 8))) / np.arange(1, 9)
    b = CAT["modulus_rational"]
    a = step(Y, 0, 1e-3, None, None, None, b, None, space=SP, tol_inner=1e-12)
    p = step(Y, 0, 1e-3, None, None, None, b, None, space=SP, inner="preconditioned",
             tol_inner=1e-12, max_inner=5000)
    assert np.max(np.abs(a - p)) <= 1e-9


def test_linear_exact_solution():
    sp = build_space(1.0, 16, 128)
    cfg = SolverConfig(T=0.1, dt=1e-4)
    traj = solve_fixed_law(sp.mode(1).coeffs, CAT["linear_0.1+1i"], None, None, None, cfg, space=sp)
    exact = np.exp(-(0.1 + 1j) * np.pi ** 2 * 0.1)
    got = traj.X[-1, 0, 0]
    assert abs(got - exact) / abs(exact) <= 1e-3
    assert abs(abs(got) - math.exp(-0.1 * np.pi ** 2 * 0.1)) <= 1e-3
    assert np.max(np.abs(traj.X[-1, 0, 1:])) <= 1e-14


def test_zero_data_stays_zero():
    cfg = SolverConfig(T=0.01, dt=1e-3)
    traj = solve_fixed_law(np.zeros(8), CAT["strictified_pp2"], None, None, None, cfg, space=SP)
    assert np.all(traj.X == 0)
    assert traj.fitted_C == 0.0


def _smooth():
    j = np.arange(1, 9)
    return (1.0 + 0.5j) / j ** 3


def test_dissipation_strictly_monotone_beta():
    cfg = SolverConfig(T=0.05, dt=1e-3)
    traj = solve_fixed_law(_smooth(), CAT["strictified_pp2"], None, None, None, cfg, space=SP)
    h = traj.hminus[:, 0]
    assert np.all(np.diff(h) <= 0)
    fine = solve_fixed_law(_smooth(), CAT["strictified_pp2"], None, None, None,
                           SolverConfig(T=0.05, dt=1e-4), space=SP)
    # the coarse run tracks the tiny-dt reference at the shared times
    assert np.max(np.abs(fine.hminus[::10, 0] - h)) <= 5e-3 * h[0]
    assert np.all(np.diff(fine.hminus[:, 0]) <= 0)


def test_energy_record_holds_with_fitted_constant(rng):
    sp = SP
    g = make_noise(1.0, 3.0, 0.5, 8)
    cfg = SolverConfig(T=0.05, dt=1e-3, M=3, seed=4)
    drift = make_drift("linear_in_mean", {"a": 0.5, "source": [0.2]}, sp)
    W = sample_ensemble(g, sp, cfg.times(), cfg.seed, cfg.M)
    traj = solve_fixed_law(np.tile(_smooth(), (3, 1)), CAT["modulus_rational"], drift, W, None, cfg,
                           space=sp)
    C = traj.fitted_C
    assert math.isfinite(C)
    y2 = traj.hminus ** 2
    f0 = traj.drift_zero_l2[:, None] ** 2
    w2 = sp.norms(traj.W, Norm.L2) ** 2
    lhs = y2[1:]
    rhs = (1 + C * cfg.dt) * y2[:-1] + C * cfg.dt * (f0[:-1] + w2[1:])
    assert np.all(lhs <= rhs + 1e-13 * (1 + y2[:-1]))
    assert np.all(np.isfinite(traj.beta_h1_integral))
    assert fitted_energy_constant(np.array([[1.0], [0.5]]), np.zeros(2), np.zeros((2, 1)), 0.1) == 0.0


def test_bitwise_determinism():
    g = make_noise(1.0, 3.0, 0.5, 8)
    cfg = SolverConfig(T=0.02, dt=1e-3, M=2, seed=11)
    runs = []
    for _ in range(2):
        W = sample_ensemble(g, SP, cfg.times(), cfg.seed, 2)
        runs.append(solve_fixed_law(np.tile(_smooth(), (2, 1)), CAT["strictified_pp2"], None, W, None,
                                    cfg, space=SP).X)
    assert runs[0].tobytes() == runs[1].tobytes()


def test_inner_tolerance_uniqueness_proxy():
    out = []
    for tol in (1e-10, 1e-12):
        cfg = SolverConfig(T=0.02, dt=1e-3, tol_inner=tol)
        out.append(solve_fixed_law(_smooth(), CAT["strictified_pp2"], None, None, None, cfg, space=SP).X)
    S = 20
    assert np.max(np.abs(out[0] - out[1])) <= 10 * 1e-10 * S


def test_law_free_drift_single_effective_iteration():
    drift = make_drift("spectral_linear", {"theta1": 0.5 * np.eye(8)}, SP)
    cfg = SolverConfig(T=0.02, dt=1e-3, M=2)
    res = solve_mckean_vlasov(np.tile(_smooth(), (2, 1)), CAT["linear_1"], drift, None, cfg, space=SP)
    assert res.report.distances[1] == 0.0
    assert res.report.iterations == 2


def test_synchronized_mean_field_closed_form():
    sp = build_space(1.0, 8)
    b, c = 1.0, 1.0
    drift = make_drift("linear_in_mean", {"a": 0.0, "b": b}, sp)
    cfg = SolverConfig(T=0.1, dt=1e-4, M=3, tol_law=1e-12)
    X0 = np.zeros((3, 8), dtype=complex)
    X0[:, 0] = 1 + 0.5j
    res = solve_mckean_vlasov(X0, make_beta("linear", {"c": c}), drift, None, cfg, space=sp)
    X = res.trajectory.X
    assert np.all(X[:, 0] == X[:, 1]) and np.all(X[:, 1] == X[:, 2])
    exact = (1 + 0.5j) * np.exp((b - np.pi ** 2 * c) * 0.1)
    assert abs(X[-1, 0, 0] - exact) / abs(exact) <= 1e-3


def test_picard_contraction_ratio():
    sp = build_space(1.0, 8)
    drift = make_drift("spectral_linear", {"theta2": 0.5 * np.eye(8)}, sp)
    g = make_noise(1.0, 3.0, 0.5, 8)
    cfg = SolverConfig(T=0.05, dt=1e-3, M=8, tol_law=1e-8, seed=3)
    X0 = np.tile(_smooth(), (8, 1))
    res = solve_mckean_vlasov(X0, CAT["strictified_pp2"], drift, g, cfg, space=sp)
    rep = res.report
    assert rep.c == pytest.approx(9.0)
    assert rep.theoretical_ratio == pytest.approx(0.125)
    assert rep.converged and rep.empirical_ratio <= 0.175
    assert rep.flags == []


def test_alpha_zero_flagged_and_picard_failure():
    sp = build_space(1.0, 4)
    drift = make_drift("spectral_linear", {"theta2": 0.5 * np.eye(4)}, sp)
    g = make_noise(1.0, 3.0, 0.5, 4)
    X0 = np.tile(_smooth()[:4], (3, 1))
    with pytest.warns(UserWarning, match="outside theorem"):
        res = solve_mckean_vlasov(X0, CAT["linear_1i"], drift, g, SolverConfig(T=0.01, dt=1e-3, M=3),
                                  space=sp)
    assert OUTSIDE_THEOREM in res.report.flags
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(PicardError) as info:
            solve_mckean_vlasov(X0, CAT["linear_1"], drift, g,
                                SolverConfig(T=0.01, dt=1e-3, M=3, max_picard=1), space=sp)
    assert len(info.value.history) == 1


def test_cauchy_levels():
    cfg = SolverConfig(T=0.02, dt=1e-3)
    lin = Problem(1.0, [1.0, 0.5j], CAT["linear_1"])
    for row in cauchy_study(lin, [4, 8, 16], cfg):
        assert row["sup_hminus"] <= 1e-12
    zero = Problem(1.0, [0.0], CAT["strictified_pp2"])
    assert all(r["sup_hminus"] == 0 for r in cauchy_study(zero, [4, 8], cfg))
    smooth = Problem(1.0, lambda j: (1 + 0.5j) / j ** 3, CAT["strictified_pp2"])
    rows = cauchy_study(smooth, [8, 16, 32], cfg)
    assert rows[0]["sup_hminus"] > rows[1]["sup_hminus"]


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(T=0.1, dt=0.03)
    with pytest.raises(ConfigurationError):
        SolverConfig(scheme="rk4")
    with pytest.raises(ConfigurationError):
        SolverConfig(M=0)
