import itertools
import math

import numpy as np
import pytest

from cpms.errors import ConfigurationError
from cpms.mean_field import (EmpiricalLaw, LawPath, audit_drift, make_drift, path_distance,
                             wasserstein2, weighted_time_integral)
from cpms.spectral_space import Norm, build_space

SP = build_space(1.0, 4)


def _ens(rng, M, sp=SP):
    return rng.standard_normal((M, sp.N)) + 1j * rng.standard_normal((M, sp.N))


def _brute(x, y, sp=SP):
    w = 1.0 / sp.eigenvalues
    best = math.inf
    for perm in itertools.permutations(range(x.shape[0])):
        d = x - y[list(perm)]
        best = min(best, float(np.sum(w * np.abs(d) ** 2)) / x.shape[0])
    return math.sqrt(best)


def test_single_particle_is_norm(rng, backend):
    x, y = _ens(rng, 1), _ens(rng, 1)
    d = wasserstein2(EmpiricalLaw(x, SP), EmpiricalLaw(y, SP), backend=backend)
    assert d == pytest.approx(SP.norms(x[0] - y[0], Norm.HminusOne), rel=1e-14)


def test_permutation_gives_zero(rng, backend):
    x = _ens(rng, 6)
    assert wasserstein2(EmpiricalLaw(x, SP), EmpiricalLaw(x[::-1], SP), backend=backend) == 0.0


@pytest.mark.parametrize("M", [2, 3, 4, 5, 6])
def test_against_permutations(M, rng, backend):
    for _ in range(20):
        x, y = _ens(rng, M), _ens(rng, M)
        d = wasserstein2(EmpiricalLaw(x, SP), EmpiricalLaw(y, SP), backend=backend)
        assert abs(d - _brute(x, y)) <= 1e-12


def test_metric_axioms(rng, backend):
    for _ in range(1000):
        x, y, z = (EmpiricalLaw(_ens(rng, 4), SP) for _ in range(3))
        dxy = wasserstein2(x, y, backend=backend)
        assert dxy == wasserstein2(y, x, backend=backend)
        assert dxy <= wasserstein2(x, z, backend=backend) + wasserstein2(z, y, backend=backend) + 1e-10


def test_size_mismatch_rejected(rng):
    with pytest.raises(ConfigurationError):
        wasserstein2(EmpiricalLaw(_ens(rng, 2), SP), EmpiricalLaw(_ens(rng, 3), SP))


def test_path_distance_values(rng):
    t = np.linspace(0, 1, 2001)
    base = _ens(rng, 3)
    P = LawPath(t, np.broadcast_to(base, (t.size, 3, SP.N)).copy(), SP)
    assert path_distance(P, P, 1.0) == 0.0
    ones = np.ones(t.size)
    assert weighted_time_integral(ones, 0.0, t) == pytest.approx(1.0, rel=1e-12)
    assert weighted_time_integral(ones, 9.0, t) == pytest.approx((1 - math.exp(-9)) / 9, rel=1e-5)


def test_path_distance_monotone_in_c(rng):
    t = np.linspace(0, 0.5, 11)
    a = LawPath(t, rng.standard_normal((11, 3, SP.N)) + 0j, SP)
    b = LawPath(t, rng.standard_normal((11, 3, SP.N)) + 0j, SP)
    vals = [path_distance(a, b, c) for c in (0.0, 0.5, 1, 4, 9, 30)]
    assert all(v2 <= v1 for v1, v2 in zip(vals, vals[1:]))


def test_zero_drift(rng):
    f = make_drift("zero", {}, SP)
    assert f.lipschitz == 0
    assert np.all(f.evaluate(0.3, _ens(rng, 2), _ens(rng, 3)) == 0)


def test_linear_in_mean_dirac(rng):
    f = make_drift("linear_in_mean", {"a": 0.0, "b": 1.0}, SP)
    y = _ens(rng, 1)
    x = _ens(rng, 1)
    assert np.allclose(f.evaluate(0.0, x[0], EmpiricalLaw(y, SP)), y[0])


def test_spectral_linear_diagonal(rng):
    f = make_drift("spectral_linear", {"theta1": 0.5 * np.eye(4)}, SP)
    x = _ens(rng, 5)
    assert np.allclose(f.evaluate(0.0, x, _ens(rng, 2)), 0.5 * x)
    assert f.lipschitz == pytest.approx(0.5)
    assert not f.depends_on_law
    mu = EmpiricalLaw(_ens(rng, 3), SP)
    for _ in range(100):
        x, y = _ens(rng, 1)[0], _ens(rng, 1)[0]
        r = SP.norms(f.evaluate(0, x, mu) - f.evaluate(0, y, mu), Norm.HminusOne) / SP.norms(x - y, Norm.HminusOne)
        assert r == pytest.approx(0.5, rel=1e-12)
    assert audit_drift(f, draws=300)["HminusOne"] <= f.lipschitz + 1e-10


def test_cylindrical_single_entry_bound():
    theta = np.zeros((4, 4))
    theta[0, 0] = 1.0
    f = make_drift("cylindrical", {"theta": theta}, SP)
    assert f.lipschitz == pytest.approx(math.sqrt(2 * SP.L / SP.eigenvalues[0]))
    audit = audit_drift(f, draws=200)
    assert audit["HminusOne"] <= f.lipschitz + 1e-10


def test_cylindrical_upper_triangle_rejected():
    theta = np.zeros((4, 4))
    theta[0, 2] = 1.0
    with pytest.raises(ConfigurationError):
        make_drift("cylindrical", {"theta": theta}, SP)


CATALOG = [
    ("linear_in_mean", {"a": 0.3 - 0.2j, "b": 0.4j, "source": [0.1, 0.2j]}),
    ("spectral_linear", {"theta1": [[0.2, 0.1], [0.0, 0.3j]], "theta2": [[0.1, 0.0], [0.2, 0.1]]}),
    ("cylindrical", {"theta": [[1.0, 0, 0, 0], [0.5, 0.3, 0, 0], [0, 0.1, 0.2, 0], [0, 0, 0, 0.1]]}),
    ("spectral_linear", {"theta2": 0.5 * np.eye(4), "modulation": {"amplitude": 0.8, "frequency": 2.0}}),
]


@pytest.mark.parametrize("kind,params", CATALOG)
def test_catalog_audits(kind, params):
    f = make_drift(kind, params, SP)
    audit = audit_drift(f, draws=1000, seed=3)
    assert audit["HminusOne"] <= f.lipschitz + 1e-10
    assert audit["L2"] <= f.lipschitz_l2 + 1e-10
    assert audit["zero_HminusOne"] <= f.norm0 + 1e-10
    assert audit["zero_L2"] <= f.norm0 + 1e-10


def test_modulation_amplitude_checked():
    with pytest.raises(ConfigurationError):
        make_drift("spectral_linear", {"theta2": np.eye(2), "modulation": {"amplitude": 2}}, SP)
