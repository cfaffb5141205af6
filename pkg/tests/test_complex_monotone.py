import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import fsolve, minimize

from cpms._kernels import available_backends, get_backend
from cpms.complex_monotone import catalog, check_monotone, fitzpatrick, make_beta, resolvent
from cpms.errors import ConfigurationError

CAT = catalog()
MONOTONE = ["linear_1", "linear_0.1+1i", "linear_1i", "power_phase_1", "modulus_rational"]
STRICT = ["linear_1", "linear_0.1+1i", "modulus_rational"]


def test_declared_constants():
    b = make_beta("linear", {"c": 0.1 + 1j})
    assert b.alpha == pytest.approx(0.1)
    assert b.lipschitz == pytest.approx(math.sqrt(1.01))
    assert make_beta("power_phase", {"p": 2}).alpha == 0.0
    s = make_beta("strictified", {"base": {"kind": "power_phase", "p": 2}, "eps": 0.5})
    assert s.alpha == 0.5


def test_sampled_lipschitz_within_declared(rng):
    for name in ("linear_0.1+1i", "modulus_rational", "power_phase_1"):
        b = CAT[name]
        z = 3 * (rng.standard_normal(5000) + 1j * rng.standard_normal(5000))
        w = 3 * (rng.standard_normal(5000) + 1j * rng.standard_normal(5000))
        ratio = np.abs(b(z) - b(w)) / np.abs(z - w)
        assert ratio.max() <= b.lipschitz * (1 + 1e-12)


@pytest.mark.parametrize("kind,params,field", [
    ("linear", {"c": -1.0}, "c"),
    ("power_phase", {"p": 0.5}, "p"),
    ("strictified", {"base": {"kind": "linear", "c": 1}, "eps": 0.0}, "eps"),
    ("modulus", {"profile": "rational", "c0": 1.0, "c1": 1j}, "c1"),
    ("unknown", {}, "kind"),
])
def test_rejections(kind, params, field):
    with pytest.raises(ConfigurationError) as info:
        make_beta(kind, params)
    assert info.value.field == field


def test_check_monotone_linear():
    assert abs(check_monotone(CAT["linear_1"]) - 1.0) <= 1e-14
    neg = make_beta("linear", {"c": -1.0}, check=False)
    assert check_monotone(neg) <= -1 + 1e-12


def test_check_monotone_matches_closed_form():
    # for i|z|^{p-1} z the form Re<b(z)-b(w), z-w> equals (|z|^{p-1}-|w|^{p-1}) Im(z conj(w));
    # the sampler must report exactly the minimum of that quotient on its own pairs
    from cpms.complex_monotone import _sample_points
    n = 10_000
    for p in (1, 2, 3):
        rng = np.random.default_rng(0)
        z = _sample_points(rng, n)
        near = z + 0.05 * (1 + np.abs(z)) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        far = _sample_points(rng, n)
        w = np.where(np.arange(n) % 2 == 0, near, far)
        form = (np.abs(z) ** (p - 1) - np.abs(w) ** (p - 1)) * (z * np.conj(w)).imag
        oracle = np.min(form / np.abs(z - w) ** 2)
        got = check_monotone(CAT[f"power_phase_{p}"], n, 0)
        assert got == pytest.approx(oracle, rel=1e-9, abs=1e-15)


def test_resolvent_examples(backend):
    assert resolvent(make_beta("linear", {"c": 2}), 1.0, 3 + 3j, backend=backend) == pytest.approx(1 + 1j)
    assert resolvent(CAT["linear_1i"], 1.0, 1.0, backend=backend) == pytest.approx((1 - 1j) / 2)
    z = resolvent(CAT["power_phase_2"], 1.0, 2.0, backend=backend)
    assert abs(z + 1j * abs(z) * z - 2) <= 1e-12


def test_resolvent_against_fsolve(rng, backend):
    for name in ("power_phase_2", "power_phase_3", "modulus_rational", "strictified_pp2"):
        b = CAT[name]
        for _ in range(20):
            a = rng.uniform(0.1, 5)
            w = complex(*(2 * rng.standard_normal(2)))

            def F(v):
                z = v[0] + 1j * v[1]
                r = z + a * b(z) - w
                return [r.real, r.imag]

            sol = fsolve(F, [w.real, w.imag], xtol=1e-14)
            z = resolvent(b, a, w, backend=backend)
            assert abs(z - complex(*sol)) <= 1e-9 * (1 + abs(w))


@pytest.mark.parametrize("name", MONOTONE)
def test_resolvent_nonexpansive(name, rng, backend):
    b = CAT[name]
    a = rng.uniform(0.01, 10, 1000)
    w = 3 * (rng.standard_normal(1000) + 1j * rng.standard_normal(1000))
    w2 = 3 * (rng.standard_normal(1000) + 1j * rng.standard_normal(1000))
    r1 = resolvent(b, a, w, backend=backend)
    r2 = resolvent(b, a, w2, backend=backend)
    assert np.all(np.abs(r1 - r2) <= np.abs(w - w2) * (1 + 1e-12))
    assert np.all(np.abs(r1 + a * b(r1) - w) <= 1e-12 * (1 + np.abs(w)))


def test_fitzpatrick_examples(backend):
    assert fitzpatrick(CAT["linear_1"], 1.0, 3.0, backend=backend).value == pytest.approx(4.0, abs=1e-12)
    v = fitzpatrick(CAT["linear_1i"], 1.0, 2j, backend=backend)
    assert v.value == math.inf and v.status == "unbounded"
    assert fitzpatrick(CAT["linear_1i"], 1.0, 1j, backend=backend).value == pytest.approx(0.0, abs=1e-12)


def test_fitzpatrick_closed_form(rng, backend):
    for c in (0.1 + 0.7j, 1.0 - 0.3j):
        b = make_beta("linear", {"c": c})
        z1 = rng.standard_normal(100) + 1j * rng.standard_normal(100)
        z2 = rng.standard_normal(100) + 1j * rng.standard_normal(100)
        vals, _, status = fitzpatrick(b, z1, z2, backend=backend)
        exact = (np.conj(z1) * z2).real + np.abs(z2 - c * z1) ** 2 / (4 * c.real)
        assert np.all(status == 0)
        assert np.max(np.abs(vals - exact)) <= 1e-8


@pytest.mark.parametrize("name", MONOTONE)
def test_fitzpatrick_on_graph(name, rng, backend):
    b = CAT[name]
    z = 2 * (rng.standard_normal(200) + 1j * rng.standard_normal(200))
    vals, _, status = fitzpatrick(b, z, b(z), backend=backend)
    pair = (np.conj(z) * b(z)).real
    fin = status == 0
    assert fin.mean() > 0.95
    assert np.max(np.abs(vals[fin] - pair[fin])) <= 1e-8 * (1 + np.abs(pair[fin])).max()


def test_fitzpatrick_brute_force(rng):
    # independent oracle: multi-start scipy minimisation of the same objective
    b = CAT["modulus_rational"]
    for _ in range(15):
        z1 = complex(*rng.standard_normal(2))
        z2 = complex(*(2 * rng.standard_normal(2)))

        def phi(v):
            u = v[0] + 1j * v[1]
            return ((np.conj(z1 - u)) * (z2 - b(u))).real

        best = min(minimize(phi, x0, method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000}).fun
                   for x0 in ([0, 0], [z1.real, z1.imag], [z2.real, z2.imag]))
        expected = (np.conj(z1) * z2).real - best
        assert fitzpatrick(b, z1, z2).value == pytest.approx(expected, abs=1e-7)


@pytest.mark.parametrize("name", ["linear_0.1+1i", "modulus_rational", "linear_1"])
def test_fitzpatrick_lower_bound_and_convexity(name, rng, backend):
    b = CAT[name]
    z1 = 2 * (rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000))
    z2 = 2 * (rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000))
    vals, _, st_ = fitzpatrick(b, z1, z2, backend=backend)
    fin = st_ == 0
    assert np.all(vals[fin] - (np.conj(z1) * z2).real[fin] >= -1e-10)
    # convexity along random segments in (z1, z2)
    n = 300
    a1, a2, c1, c2 = (z[:n] for z in (z1, z2, z1[n:2 * n], z2[n:2 * n]))
    th = rng.uniform(0, 1, n)
    fa = fitzpatrick(b, a1, a2, backend=backend)[0]
    fc = fitzpatrick(b, c1, c2, backend=backend)[0]
    fm = fitzpatrick(b, th * a1 + (1 - th) * c1, th * a2 + (1 - th) * c2, backend=backend)[0]
    ok = np.isfinite(fa) & np.isfinite(fc)
    assert np.all(fm[ok] <= th[ok] * fa[ok] + (1 - th[ok]) * fc[ok] + 1e-8)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("name", STRICT)
def test_inverse_lipschitz(name, rng):
    b = CAT[name]

    def inv(x):
        sol = fsolve(lambda v: [(b(v[0] + 1j * v[1]) - x).real, (b(v[0] + 1j * v[1]) - x).imag],
                     [x.real, x.imag], xtol=1e-14)
        return complex(*sol)

    for _ in range(200):
        x, y = (complex(*(3 * rng.standard_normal(2))) for _ in range(2))
        assert abs(inv(x) - inv(y)) <= abs(x - y) / b.alpha + 1e-10


def test_power_phase_saddle_reports_unbounded(backend):
    # for p = 2 the objective has no lower bound off the graph: the engine must not
    # stop at the stationary point
    b = CAT["power_phase_2"]
    v = fitzpatrick(b, 1.0, 0.5, backend=backend)
    assert v.value == math.inf


cz = st.complex_numbers(max_magnitude=20, allow_nan=False, allow_infinity=False)


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernels not built")
@settings(max_examples=80, deadline=None)
@given(st.sampled_from(sorted(CAT)), cz, cz, st.floats(0.01, 50))
def test_backends_agree(name, z1, z2, a):
    b = CAT[name]
    py, cc = get_backend("python"), get_backend("compiled")
    r1 = resolvent(b, a, z2, backend=py)
    r2 = resolvent(b, a, z2, backend=cc)
    assert abs(r1 - r2) <= 1e-10 * (1 + abs(z2))
    f1 = fitzpatrick(b, z1, z2, backend=py)
    f2 = fitzpatrick(b, z1, z2, backend=cc)
    # converged/maxiter may differ where the infimum is only approached at infinity
    assert (f1.status == "unbounded") == (f2.status == "unbounded")
    if math.isfinite(f1.value):
        assert f1.value == pytest.approx(f2.value, rel=1e-7, abs=1e-7)


@pytest.mark.parametrize("z2", [4 + 1j, 3 + 1j, 0.5 - 2j])
def test_fitzpatrick_unbounded_far_from_origin(z2, backend):
    # with z1 = 0 the objective of i|u|^2 u is -Re<u, z2>, linear in u
    v = fitzpatrick(CAT["power_phase_3"], 0.0, z2, backend=backend)
    assert v.value == math.inf and v.status == "unbounded"


def test_fitzpatrick_infimum_not_attained(backend):
    # the objective decreases along a flat valley to -0.0625 without reaching it
    v = fitzpatrick(CAT["strictified_pp2"], 0.5, 0.0, backend=backend)
    assert v.status != "unbounded"
    assert v.value == pytest.approx(0.0625, abs=1e-6)
