import math

import numpy as np
import pytest

from cpms.errors import ConfigurationError
from cpms.feynman_path import (Action, FeynmanParams, Grid, constant_action, first_order_step,
                               linear_tilde_action, phi_transform_check, propagate_step,
                               residual_at, residual_slope)


def _grid(eps, a=-1.5, b=1.5):
    return Grid.covering(a, b, math.sqrt(eps) / 8)


def test_constant_wave_is_fixed(backend):
    p = FeynmanParams(1e-2, linear_tilde_action(0.5))
    g = _grid(p.eps)
    step = propagate_step(np.full(g.n, 2.0 + 1j), p, g, backend=backend)
    assert np.nanmax(np.abs(step.values[step.window] - (2.0 + 1j))) <= 1e-14


@pytest.mark.parametrize("poly", [lambda x: x ** 2 + 0j, lambda x: 1 + x / 2 + x ** 2 / 4 + x ** 3 / 8 + 0j])
def test_free_average_of_polynomials(poly, backend):
    # with no action the step is the uniform average over [-sqrt(eps), sqrt(eps)]
    p = FeynmanParams(4e-2, constant_action(0.0))
    g = _grid(p.eps)
    x = g.x
    psi = poly(x)
    h = 1e-4
    d2 = (poly(x + h) - 2 * psi + poly(x - h)) / h ** 2
    step = propagate_step(psi, p, g, backend=backend)
    w = step.window
    assert np.max(np.abs(step.values[w] - psi[w] - p.eps * d2[w] / 6)) <= 1e-7


def test_series_oracle_is_second_order():
    act = linear_tilde_action(0.5)
    errs = []
    for eps in (1e-2, 1e-3):
        p = FeynmanParams(eps, act)
        g = _grid(eps)
        psi = np.exp(-g.x ** 2) + 0j
        step = propagate_step(psi, p, g)
        w = step.window.copy()
        w[:4] = w[-4:] = False
        errs.append(np.max(np.abs(step.values[w] - first_order_step(psi, p, g)[w])))
    assert errs[0] / errs[1] >= 50


def test_quadrature_order_refinement():
    act = linear_tilde_action(0.5)
    r16, _ = residual_at("gaussian", FeynmanParams(1e-2, act, Q=16))
    r32, _ = residual_at("gaussian", FeynmanParams(1e-2, act, Q=32))
    assert abs(r16 - r32) <= 1e-10


def test_finite_difference_second_derivative_fallback():
    c = 0.3j
    exact = Action(lambda z: c / z, lambda z: -c / z ** 2)
    approx = Action(lambda z: c / z)
    z = np.array([1.0 + 0.5j, 2.0 - 1j])
    assert np.allclose(exact.second(z), approx.second(z), rtol=1e-6)


def test_coarse_grid_rejected():
    p = FeynmanParams(1e-2, constant_action(0))
    g = Grid(-1.0, 0.02, 101)
    with pytest.raises(ConfigurationError, match="sqrt"):
        propagate_step(np.ones(g.n), p, g)


def test_vanishing_wave_rejected():
    act = linear_tilde_action(0.5)
    with pytest.raises(ConfigurationError, match="log"):
        residual_at(lambda x: x + 0j, FeynmanParams(1e-2, act))


def test_bad_parameters_rejected():
    with pytest.raises(ConfigurationError):
        FeynmanParams(0.0, constant_action(0))
    with pytest.raises(ConfigurationError):
        FeynmanParams(1e-2, constant_action(0), hbar=-1)
    with pytest.raises(ConfigurationError, match="decreasing"):
        residual_slope(constant_action(0), eps_list=(1e-3, 1e-2, 1e-4))


def test_slope_report(backend):
    rep = residual_slope(linear_tilde_action(0.5), backend=backend)
    assert rep.decays
    assert 1.9 <= rep.slope <= 2.1
    assert len(list(rep.rows())) == 3
    assert set(rep.to_dict()) >= {"slope", "eps", "residuals"}


def test_cubic_profile_without_action():
    r, _ = residual_at("cubic", FeynmanParams(1e-2, constant_action(0.0)))
    assert r <= 1e-13


def test_transformed_residual_identity(backend):
    assert phi_transform_check("gaussian", 0.5, 1e-2, backend=backend) <= 1e-10


def test_backends_agree():
    from cpms._kernels import available_backends
    if len(available_backends()) < 2:
        pytest.skip("compiled kernels not built")
    act = linear_tilde_action(0.5)
    a = residual_at("gaussian", FeynmanParams(1e-3, act), backend="python")[0]
    b = residual_at("gaussian", FeynmanParams(1e-3, act), backend="compiled")[0]
    assert a == pytest.approx(b, rel=1e-9)
