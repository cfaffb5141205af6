"""Pointwise complex maps ``beta(z) = g(|z|) z``: catalog, resolvent, Fitzpatrick value.

Every map in the catalog is radial-phase, i.e. determined by a modulus profile
``g: [0, inf) -> C``.  That single shape covers the linear maps (``g = c``),
the phase-power maps (``g = i r^(p-1)``), modulus maps with a user profile and
the ``+ eps z`` shift.  All inner problems are solved on C viewed as R^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from ._kernels import CodedProfile
from .errors import ConfigurationError, SolverError

__all__ = [
    "MonotoneMap",
    "FitzValue",
    "CallbackProfile",
    "make_beta",
    "check_monotone",
    "resolvent",
    "fitzpatrick",
    "catalog",
    "KINDS",
]

KINDS = ("linear", "power_phase", "modulus", "strictified")

RESOLVENT_TOL = 1e-12


class CallbackProfile:
    """Modulus profile given by Python callables.

    ``g1`` and ``g2`` default to central differences of ``g``.  These profiles
    never reach the compiled kernels.
    """

    code = None

    def __init__(self, g: Callable, g1: Callable | None = None, g2: Callable | None = None,
                 eps: float = 0.0):
        self._g = g
        self._g1 = g1
        self._g2 = g2
        self.eps = float(eps)

    def _call(self, fn, r):
        return np.asarray(fn(np.asarray(r, dtype=float)), dtype=complex) * np.ones(np.shape(r))

    def g(self, r):
        return self._call(self._g, r) + self.eps

    def g1(self, r):
        if self._g1 is not None:
            return self._call(self._g1, r)
        r = np.asarray(r, dtype=float)
        d = 1e-5 * (1.0 + r)
        lo = np.maximum(r - d, 0.0)
        return (self._call(self._g, r + d) - self._call(self._g, lo)) / (r + d - lo)

    def g2(self, r):
        if self._g2 is not None:
            return self._call(self._g2, r)
        r = np.asarray(r, dtype=float)
        d = 1e-4 * (1.0 + r)
        lo = np.maximum(r - d, 0.0)
        return (self.g1(r + d) - self.g1(lo)) / (r + d - lo)

    def shifted(self, eps):
        return CallbackProfile(self._g, self._g1, self._g2, self.eps + eps)


@dataclass(frozen=True)
class FitzValue:
    value: float
    argmin: complex | None
    status: str = "converged"

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


@dataclass(frozen=True, eq=False)
class MonotoneMap:
    """Immutable pointwise map with its declared constants.

    ``alpha`` is the declared strict-monotonicity constant, ``lipschitz`` the
    declared ``[beta]_1`` and ``growth`` the linear-growth constant; the last
    two are ``inf`` for maps that are only locally Lipschitz.
    """

    kind: str
    params: dict
    alpha: float
    lipschitz: float
    growth: float
    profile: object = field(repr=False)
    base: "MonotoneMap | None" = field(default=None, repr=False)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.profile.g(np.abs(z)) * z

    def jacobian(self, z):
        """Partial derivatives ``(d beta/dx, d beta/dy)`` at ``z = x + i y``."""
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        safe = np.where(r > 0, r, 1.0)
        n = np.where(r > 0, z / safe, 1.0 + 0j)
        g = self.profile.g(r)
        g1 = self.profile.g1(r)
        return g1 * n.real * z + g, g1 * n.imag * z + 1j * g

    def lipschitz_on(self, radius: float) -> float:
        """Lipschitz constant on the disc ``|z| <= radius``."""
        if math.isfinite(self.lipschitz):
            return self.lipschitz
        r = np.linspace(0.0, radius, 2049)
        g = self.profile.g(r)
        g1 = self.profile.g1(r)
        return float(np.max(np.abs(g) + r * np.abs(g1)))

    @property
    def kernel_code(self):
        return getattr(self.profile, "code", None)

    def resolvent(self, a, w, **kw):
        return resolvent(self, a, w, **kw)

    def fitzpatrick(self, z1, z2, **kw):
        return fitzpatrick(self, z1, z2, **kw)

    def describe(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params.items():
            if isinstance(v, complex):
                out[k] = {"re": v.real, "im": v.imag}
            elif isinstance(v, MonotoneMap):
                out[k] = v.describe()
            elif callable(v):
                out[k] = getattr(v, "__name__", "callable")
            else:
                out[k] = v
        return out


def _code(family, c=0j, p=1.0, eps=0.0, c1=0j):
    c = complex(c)
    c1 = complex(c1)
    return np.array([family, c.real, c.imag, p, eps, c1.real, c1.imag, 0.0])


def _as_complex(value, name):
    if isinstance(value, dict):
        try:
            return complex(value.get("re", 0.0), value.get("im", 0.0))
        except TypeError as exc:
            raise ConfigurationError(f"{name} must be a complex number", field=name) from exc
    try:
        return complex(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name} must be a complex number, got {value!r}", field=name) from exc


def make_beta(kind: str, params: dict | None = None, *, check: bool = True) -> MonotoneMap:
    """Construct a catalog map.

    ``linear``: ``c``.  ``power_phase``: ``p``.  ``modulus``: either
    ``profile="rational"`` with ``c0``, ``c1`` (``g = c0 + c1 r/(1+r)``, ``c1``
    real and non-negative) or a callable ``g`` together with declared
    ``alpha`` and ``lipschitz``.  ``strictified``: ``base`` (a map or a
    ``{"kind": ..., ...}`` dict) and ``eps``.

    ``check=False`` skips the monotonicity preconditions; it exists to build
    counter-examples for testing.
    """
    params = dict(params or {})
    if kind == "linear":
        c = _as_complex(params.get("c", 1.0), "c")
        if check and c.real < 0:
            raise ConfigurationError(
                f"linear map requires Re c >= 0 for monotonicity, got Re c = {c.real}", field="c"
            )
        return MonotoneMap("linear", {"c": c}, c.real, abs(c), abs(c), CodedProfile(_code(0, c=c)))
    if kind == "power_phase":
        p = float(params.get("p", 1.0))
        if check and not p >= 1:
            raise ConfigurationError(
                f"power_phase requires p >= 1 for monotonicity, got p = {p}", field="p"
            )
        bound = 1.0 if p == 1 else math.inf
        return MonotoneMap("power_phase", {"p": p}, 0.0, bound, bound, CodedProfile(_code(1, p=p)))
    if kind == "modulus":
        return _make_modulus(params, check)
    if kind == "strictified":
        base = params.get("base")
        if isinstance(base, dict):
            base = dict(base)
            base = make_beta(base.pop("kind"), base, check=check)
        if not isinstance(base, MonotoneMap):
            raise ConfigurationError("strictified needs a base map", field="base")
        eps = float(params.get("eps", 0.0))
        if check and not eps > 0:
            raise ConfigurationError(
                f"strictified requires eps > 0 for strict monotonicity, got eps = {eps}", field="eps"
            )
        prof = base.profile
        if getattr(prof, "code", None) is not None:
            code = prof.code.copy()
            code[4] += eps
            new_prof = CodedProfile(code)
        else:
            new_prof = prof.shifted(eps)
        return MonotoneMap(
            "strictified",
            {"base": base, "eps": eps},
            base.alpha + eps,
            base.lipschitz + eps,
            base.growth + eps,
            new_prof,
            base,
        )
    raise ConfigurationError(f"unknown beta kind {kind!r}; expected one of {KINDS}", field="kind")


def _make_modulus(params, check):
    profile = params.get("profile", "rational")
    if callable(profile) or "g" in params:
        g = params.get("g", profile)
        if not callable(g):
            raise ConfigurationError("modulus callback 'g' must be callable", field="g")
        for key in ("alpha", "lipschitz"):
            if key not in params:
                raise ConfigurationError(f"modulus callback needs a declared {key}", field=key)
        alpha = float(params["alpha"])
        if check and alpha < 0:
            raise ConfigurationError(
                f"modulus profile requires inf Re g >= 0, declared {alpha}", field="alpha"
            )
        lip = float(params["lipschitz"])
        prof = CallbackProfile(g, params.get("g1"), params.get("g2"))
        growth = float(params.get("growth", lip))
        return MonotoneMap("modulus", {"g": g, "alpha": alpha, "lipschitz": lip}, alpha, lip, growth, prof)
    if profile != "rational":
        raise ConfigurationError(f"unknown modulus profile {profile!r}", field="profile")
    c0 = _as_complex(params.get("c0", 1.0), "c0")
    c1 = _as_complex(params.get("c1", 0.0), "c1")
    if check:
        if c0.real < 0:
            raise ConfigurationError(
                f"modulus profile requires Re c0 >= 0 for monotonicity, got {c0.real}", field="c0"
            )
        if c1.imag != 0 or c1.real < 0:
            raise ConfigurationError(
                "modulus profile requires a real c1 >= 0 (a varying phase breaks monotonicity)",
                field="c1",
            )
    a, b, s = c0.real, c0.imag, c1.real
    lip = math.hypot(a + s / 2.0, b) + s / 2.0
    growth = abs(c0) + abs(c1)
    return MonotoneMap(
        "modulus",
        {"profile": "rational", "c0": c0, "c1": c1},
        min(a, a + s),
        lip,
        growth,
        CodedProfile(_code(2, c=c0, c1=c1)),
    )


def _sample_points(rng, n, scale=2.0):
    # log-uniform radii so both small and large moduli are probed
    r = scale * np.exp(rng.uniform(np.log(1e-3), np.log(4.0), n))
    th = rng.uniform(0.0, 2 * np.pi, n)
    return r * np.exp(1j * th)


def check_monotone(beta: MonotoneMap, pair_count: int = 10_000, rng_seed: int = 0) -> float:
    """Smallest sampled ``Re<beta(z)-beta(z'), z-z'> / |z-z'|^2``."""
    if pair_count < 1:
        raise ConfigurationError("pair_count must be >= 1", field="pair_count")
    rng = np.random.default_rng(rng_seed)
    z = _sample_points(rng, pair_count)
    # half of the partners are close to z, half are independent
    near = z + 0.05 * (1 + np.abs(z)) * (rng.standard_normal(pair_count)
                                         + 1j * rng.standard_normal(pair_count))
    far = _sample_points(rng, pair_count)
    zp = np.where(np.arange(pair_count) % 2 == 0, near, far)
    dz = z - zp
    keep = np.abs(dz) > 0
    db = beta(z) - beta(zp)
    q = (db.real * dz.real + db.imag * dz.imag)[keep] / np.abs(dz[keep]) ** 2
    return float(np.min(q))


def resolvent(beta: MonotoneMap, a, w, *, max_iter: int = 200, tol: float = RESOLVENT_TOL,
              backend=None):
    """Solve ``z + a beta(z) = w`` (scalar or array ``w``)."""
    be = backend or _kernels.BACKEND
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= 0):
        raise ConfigurationError("resolvent step a must be > 0", field="a")
    w_arr = np.asarray(w, dtype=complex)
    a_arr = np.broadcast_to(a_arr, w_arr.shape).ravel()
    z, res, _ = be.resolvent(beta.profile, a_arr, w_arr, max_iter, tol)
    # rounding floor for large arguments
    floor = 64 * np.finfo(float).eps * (np.abs(w_arr.ravel()) + np.abs(a_arr) * np.abs(beta(z)))
    bad = res > np.maximum(tol, floor)
    if np.any(bad):
        worst = float(np.max(res))
        raise SolverError(f"resolvent did not converge, residual {worst:.3e}", residual=worst)
    z = z.reshape(w_arr.shape)
    return complex(z) if z.ndim == 0 else z


_STATUS = {0: "converged", 1: "unbounded", 2: "maxiter"}


def fitzpatrick(beta: MonotoneMap, z1, z2, *, max_iter: int = 200, gtol: float = 1e-13,
                backend=None):
    """Fitzpatrick value ``Re<z1,z2> - inf_u Re<z1-u, z2-beta(u)>``.

    Scalars give a :class:`FitzValue`; arrays give ``(values, argmins, status)``
    with integer status codes 0 converged, 1 unbounded, 2 max_iter.
    """
    be = backend or _kernels.BACKEND
    z1a = np.asarray(z1, dtype=complex)
    z2a = np.asarray(z2, dtype=complex)
    shape = np.broadcast_shapes(z1a.shape, z2a.shape)
    val, arg, status = be.fitzpatrick(beta.profile, z1a, z2a, max_iter, gtol)
    if shape == ():
        s = int(status[0])
        v = float(val[0])
        return FitzValue(v, None if not math.isfinite(v) else complex(arg[0]), _STATUS[s])
    return val.reshape(shape), arg.reshape(shape), status.reshape(shape)


def catalog() -> dict:
    """Named maps used by the acceptance suite and the ``certify`` task."""
    pp2 = make_beta("power_phase", {"p": 2})
    return {
        "linear_1": make_beta("linear", {"c": 1.0}),
        "linear_0.1+1i": make_beta("linear", {"c": 0.1 + 1j}),
        "linear_1i": make_beta("linear", {"c": 1j}),
        "power_phase_1": make_beta("power_phase", {"p": 1}),
        "power_phase_2": pp2,
        "power_phase_3": make_beta("power_phase", {"p": 3}),
        "modulus_rational": make_beta("modulus", {"profile": "rational", "c0": 1.0, "c1": 1.0}),
        "strictified_pp2": make_beta("strictified", {"base": pp2, "eps": 0.5}),
    }
