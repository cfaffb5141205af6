import numpy as np
import pytest
from scipy.integrate import trapezoid

from cpms.complex_monotone import catalog, make_beta
from cpms.errors import ConfigurationError
from cpms.galerkin_solver import SolverConfig, Trajectory, solve_fixed_law
from cpms.mean_field import make_drift
from cpms.noise import make_noise, sample_ensemble
from cpms.spectral_space import build_space
from cpms.variational_control import (ControlPath, assemble_control, certify, evaluate_cost,
                                      state_from_control)

CAT = catalog()
BETA = make_beta("linear", {"c": 0.1 + 1j})


@pytest.fixture(scope="module")
def solved():
    sp = build_space(1.0, 16, 128)
    cert, traj, ctrl = certify(sp.mode(1).coeffs, BETA, None, SolverConfig(T=0.1, dt=1e-4), space=sp)
    return sp, cert, traj, ctrl


def _traj(times, X, sp):
    X = np.asarray(X, dtype=complex)[:, None, :]
    return Trajectory(times, X, X, np.zeros_like(X), sp)


def test_zero_and_constant_paths():
    sp = build_space(1.0, 4)
    t = np.linspace(0, 0.1, 11)
    ctrl = assemble_control(_traj(t, np.zeros((11, 4)), sp), BETA)
    assert np.all(ctrl.v == 0)
    x0 = np.array([1.0, 0.5j, 0, 0])
    c = 0.3 + 0.2j
    for rule in ("right", "left", "trapezoid"):
        ctrl = assemble_control(_traj(t, np.tile(x0, (11, 1)), sp), make_beta("linear", {"c": c}),
                                rule=rule)
        assert np.allclose(ctrl.v, t[:, None] * c * x0, rtol=1e-13, atol=1e-16)


def test_control_derivative_second_order():
    sp = build_space(1.0, 4)
    b = CAT["modulus_rational"]

    def err(S):
        t = np.linspace(0, 0.5, S + 1)
        X = np.outer(np.cos(3 * t) + 1j * np.sin(2 * t), [1.0, 0.3, 0.1j, 0])
        ctrl = assemble_control(_traj(t, X, sp), b, rule="trapezoid")
        from cpms.galerkin_solver import _Operator
        exact = _Operator(sp, b).apply(X)
        return np.max(np.abs(ctrl.dv - exact))

    e1, e2 = err(50), err(100)
    assert e1 / e2 >= 3.5


def test_noise_rejected():
    sp = build_space(1.0, 4)
    g = make_noise(1.0, 3.0, 1.0, 4)
    cfg = SolverConfig(T=0.01, dt=1e-3)
    W = sample_ensemble(g, sp, cfg.times(), 0, 1)
    traj = solve_fixed_law(sp.mode(1).coeffs, BETA, None, W, None, cfg, space=sp)
    with pytest.raises(ConfigurationError, match="g=0"):
        assemble_control(traj, BETA)


def test_solution_passes(solved):
    sp, cert, traj, ctrl = solved
    assert cert.verdict
    assert cert.ratio <= 1e-3
    assert cert.residual <= 1e-6 * (1 + cert.y0_norm)
    assert cert.J >= -1e-10


def test_engine_matches_closed_form(solved):
    sp, cert, traj, ctrl = solved
    y = traj.X[:, 0] @ sp.synthesis.T
    dv = ctrl.dv @ sp.synthesis.T
    c = BETA.params["c"]
    closed = trapezoid(sp.h * np.sum(np.abs(dv - c * y) ** 2 / (4 * c.real), axis=1), traj.times)
    assert cert.J == pytest.approx(closed, abs=1e-8)


def test_perturbed_control_fails(solved):
    sp, cert, traj, ctrl = solved
    v = ctrl.v + 0.01 * traj.times[:, None] * np.eye(16)[0]
    pert = ControlPath(ctrl.times, v, np.gradient(v, ctrl.times, axis=0, edge_order=2), sp)
    bad = evaluate_cost(traj.X[:, 0], pert, BETA, None, traj.X[0, 0])
    assert not bad.verdict
    assert bad.J >= 10 * cert.J


def test_minimality_against_smooth_perturbations(solved, rng):
    sp, cert, traj, ctrl = solved
    t = traj.times
    for delta in (1e-2, 1e-1):
        for _ in range(10):
            k = rng.integers(1, 4)
            shape = np.sin(k * np.pi * t / t[-1])[:, None]
            direction = (rng.standard_normal(16) + 1j * rng.standard_normal(16)) / np.arange(1, 17) ** 2
            v = ctrl.v + delta * shape * direction
            p = ControlPath(t, v, np.gradient(v, t, axis=0, edge_order=2), sp)
            assert evaluate_cost(traj.X[:, 0], p, BETA, None, traj.X[0, 0]).J > cert.J


def test_integration_by_parts_forms_agree():
    sp = build_space(1.0, 8)
    drift = make_drift("spectral_linear", {"theta1": 0.3 * np.eye(8)}, sp)
    for dt in (1e-3, 5e-4):
        cert, _, _ = certify(sp.mode(1).coeffs + 0.2 * sp.mode(2).coeffs, CAT["modulus_rational"], drift,
                             SolverConfig(T=0.05, dt=dt), space=sp)
        assert abs(cert.J - cert.J_problem) <= 20 * dt * cert.normalizer


def test_zero_data_is_exact():
    sp = build_space(1.0, 4)
    cert, _, _ = certify(np.zeros(4), BETA, None, SolverConfig(T=0.01, dt=1e-3), space=sp)
    assert cert.J == 0.0 and cert.verdict


def test_state_from_control_roundtrip(solved):
    sp, cert, traj, ctrl = solved
    y = state_from_control(ctrl.v, traj.X[0, 0], None, traj.times, sp)
    assert np.max(np.abs(y - traj.X[:, 0])) <= 1e-12


def test_non_monotone_map_is_reported_unbounded():
    sp = build_space(1.0, 8)
    j = np.arange(1, 9)
    cert, _, _ = certify(1.0 / j ** 3, CAT["strictified_pp2"], None, SolverConfig(T=0.02, dt=1e-3),
                         space=sp)
    assert cert.unbounded_points > 0 and not cert.verdict
