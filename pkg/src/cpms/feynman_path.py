"""One step of the wave-dependent path-integral update and its consistency checks.

The update averages

    exp(-(i/hbar) b1((psi(x+xi) + psi(x))/2) (psi(x+xi) - psi(x))) psi(x+xi)

over ``xi`` uniform on ``[-sqrt(eps), sqrt(eps)]`` where ``b1`` is the complex
derivative of the action map.  Expanding in ``eps`` and writing
``phi = log psi`` gives the drift

    RHS = bt''(phi) phi_x^2 + bt'(phi) phi_xx + 6 (bt'(phi) phi_x)^2,
    bt = (1/6)(-(i/hbar) b0 + Id),   b0(phi) = b(exp(phi)),

so ``P_eps psi - psi - eps psi RHS`` is the remainder that ``residual_slope``
measures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._kernels import get_backend
from .errors import ConfigurationError

__all__ = [
    "Action",
    "FeynmanParams",
    "Grid",
    "StepResult",
    "SlopeReport",
    "constant_action",
    "linear_tilde_action",
    "propagate_step",
    "first_order_step",
    "drift_phi",
    "residual_slope",
    "phi_transform_check",
    "PROFILES",
]

GAMMA = 6.0
D1 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
D2 = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0
HALF = 3  # stencil half width
LOG_FLOOR = 1e-8
PHI_RESOLUTION = 0.012  # spacing times kappa*gamma for the Phi check


def _fd_second(f, z):
    z = np.asarray(z, dtype=complex)
    d = 1e-5 * (1.0 + np.abs(z))
    return (f(z + d) - f(z - d)) / (2 * d)


@dataclass(frozen=True)
class Action:
    """Complex derivative ``b1`` of the action map and its derivative ``b2``."""

    b1: Callable
    b2: Callable | None = None
    name: str = "custom"

    def second(self, z):
        if self.b2 is not None:
            return self.b2(z)
        return _fd_second(self.b1, z)


def constant_action(value: complex) -> Action:
    value = complex(value)
    return Action(lambda z: np.full(np.shape(z), value, dtype=complex),
                  lambda z: np.zeros(np.shape(z), dtype=complex),
                  name=f"constant({value:g})")


def linear_tilde_action(m: complex, hbar: float = 1.0) -> Action:
    """Action whose reduced map is ``bt(z) = m z``.

    Then ``b0(phi) = i hbar (6m - 1) phi``, i.e. ``b(psi) = c log psi`` with
    ``c = i hbar (6m - 1)``.
    """
    c = 1j * hbar * (6 * complex(m) - 1)
    return Action(lambda z: c / z, lambda z: -c / z ** 2, name=f"linear_tilde({complex(m):g})")


@dataclass(frozen=True)
class FeynmanParams:
    eps: float
    action: Action
    hbar: float = 1.0
    Q: int = 16

    def __post_init__(self):
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ConfigurationError(f"eps must be positive, got {self.eps}", field="eps")
        if not self.hbar > 0:
            raise ConfigurationError(f"hbar must be positive, got {self.hbar}", field="hbar")
        if int(self.Q) < 1:
            raise ConfigurationError(f"quadrature order must be >= 1, got {self.Q}", field="Q")

    @property
    def A(self) -> float:
        return 2.0 * math.sqrt(self.eps)

    def nodes(self):
        t, w = np.polynomial.legendre.leggauss(int(self.Q))
        return math.sqrt(self.eps) * t, 0.5 * w


@dataclass(frozen=True)
class Grid:
    x0: float
    h: float
    n: int

    @classmethod
    def covering(cls, a: float, b: float, h: float) -> "Grid":
        n = int(math.ceil((b - a) / h - 1e-9)) + 1
        return cls(float(a), float(h), n)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.n)


@dataclass(eq=False)
class StepResult:
    x: np.ndarray
    values: np.ndarray      # propagated wave on the whole grid, nan outside the window
    window: np.ndarray      # bool mask of reported points


def _check_spacing(grid: Grid, eps: float):
    need = math.sqrt(eps) / 8.0
    if grid.h > need * (1 + 1e-12):
        raise ConfigurationError(
            f"grid spacing {grid.h:g} is too coarse for eps={eps:g}; need h <= sqrt(eps)/8 = {need:g}",
            field="h",
        )


def _interior(grid: Grid, eps: float) -> np.ndarray:
    x = grid.x
    margin = math.sqrt(eps) + (HALF + 1) * grid.h
    return (x >= x[0] + margin) & (x <= x[-1] - margin)


def propagate_step(psi, params: FeynmanParams, grid: Grid, *, backend=None) -> StepResult:
    """``P_eps psi`` at every grid point at least ``sqrt(eps)`` inside the grid."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (grid.n,):
        raise ConfigurationError(f"wave has shape {psi.shape}, grid has {grid.n} points", field="psi")
    _check_spacing(grid, params.eps)
    be = backend if backend is not None and not isinstance(backend, str) else get_backend(backend)
    mask = _interior(grid, params.eps)
    x = grid.x[mask]
    xi, w = params.nodes()
    pts = x[:, None] + xi[None, :]
    shifted = be.interp_quintic(psi, grid.x0, grid.h, pts)
    here = psi[mask][:, None]
    mid = 0.5 * (shifted + here)
    phase = np.exp((-1j / params.hbar) * params.action.b1(mid) * (shifted - here))
    out = np.full(grid.n, np.nan + 0j)
    out[mask] = (phase * shifted) @ w
    return StepResult(grid.x, out, mask)


def _derivatives(v, h):
    n = v.shape[0]
    d1 = np.full(n, np.nan + 0j)
    d2 = np.full(n, np.nan + 0j)
    inner = slice(HALF, n - HALF)
    for k in range(2 * HALF + 1):
        seg = v[k: n - 2 * HALF + k]
        if k == 0:
            d1[inner] = D1[k] * seg
            d2[inner] = D2[k] * seg
        else:
            d1[inner] += D1[k] * seg
            d2[inner] += D2[k] * seg
    return d1 / h, d2 / h ** 2


def drift_phi(psi, h: float, action: Action, hbar: float = 1.0) -> np.ndarray:
    """``RHS`` of the log equation, on the grid (nan where stencils do not fit)."""
    psi = np.asarray(psi, dtype=complex)
    phx, phxx = _log_derivatives(psi, h)
    b1 = action.b1(psi)
    b2 = action.second(psi)
    bt1 = (1.0 - (1j / hbar) * b1 * psi) / 6.0
    bt2 = -(1j / (6.0 * hbar)) * (b2 * psi ** 2 + b1 * psi)
    return bt2 * phx ** 2 + bt1 * phxx + GAMMA * (bt1 * phx) ** 2


def _log_derivatives(psi, h):
    n = psi.size
    core = psi[HALF: n - HALF]
    if np.any(np.abs(core) < LOG_FLOOR):
        raise ConfigurationError("wave vanishes on the evaluation window; log psi is undefined",
                                 field="psi")
    p1, p2 = _derivatives(psi, h)
    with np.errstate(invalid="ignore"):
        phx = p1 / psi
        phxx = p2 / psi - phx ** 2
    return phx, phxx


def first_order_step(psi, params: FeynmanParams, grid: Grid) -> np.ndarray:
    """``psi + eps C`` with ``C`` the exact eps-coefficient of the xi-average."""
    psi = np.asarray(psi, dtype=complex)
    p1, p2 = _derivatives(psi, grid.h)
    a = (-1j / params.hbar) * params.action.b1(psi)
    b = (-1j / params.hbar) * params.action.second(psi)
    e1 = a * p1
    e2 = b * p1 ** 2 + a * p2
    C = (p2 + 2 * e1 * p1 + (e2 + e1 ** 2) * psi) / 6.0
    return psi + params.eps * C


@dataclass
class SlopeReport:
    slope: float
    eps: list
    residuals: list
    spacings: list
    window: tuple
    decay_factors: list = field(default_factory=list)
    phi_check: float | None = None

    @property
    def decays(self) -> bool:
        return all(f >= 2.0 for f in self.decay_factors)

    def rows(self):
        for e, r, h in zip(self.eps, self.residuals, self.spacings):
            yield (e, r, h)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "window": list(self.window),
            "eps": list(self.eps),
            "residuals": list(self.residuals),
            "decay_factors": list(self.decay_factors),
            "phi_check": self.phi_check,
        }


def _gaussian(x):
    return np.exp(-x ** 2) + 0j


def _cubic(x):
    return 1.0 + 0.5 * x + 0.25 * x ** 2 + 0.125 * x ** 3 + 0j


PROFILES = {"gaussian": _gaussian, "cubic": _cubic}


def _profile(psi):
    if callable(psi):
        return psi
    try:
        return PROFILES[psi]
    except KeyError:
        raise ConfigurationError(f"unknown profile {psi!r}; known: {sorted(PROFILES)}",
                                 field="profile") from None


def _setup(eps, window, h):
    a, b = window
    if not b > a:
        raise ConfigurationError(f"empty evaluation window {window}", field="window")
    h = math.sqrt(eps) / 8.0 if h is None else float(h)
    pad = math.sqrt(eps) + (HALF + 2) * h
    return Grid.covering(a - pad, b + pad, h)


def residual_at(psi, params: FeynmanParams, window=(-1.0, 1.0), *, h=None, backend=None):
    """``max |P_eps psi - psi - eps psi RHS|`` over the window, and the spacing used."""
    fn = _profile(psi)
    grid = _setup(params.eps, window, h)
    x = grid.x
    vals = fn(x)
    step = propagate_step(vals, params, grid, backend=backend)
    sel = (x >= window[0] - 1e-12) & (x <= window[1] + 1e-12) & step.window
    rhs = drift_phi(vals, grid.h, params.action, params.hbar)
    r = step.values[sel] - vals[sel] - params.eps * vals[sel] * rhs[sel]
    return float(np.max(np.abs(r))), grid.h


def residual_slope(action: Action, psi="gaussian", eps_list=(1e-2, 1e-3, 1e-4), *,
                   hbar: float = 1.0, Q: int = 16, window=(-1.0, 1.0), backend=None,
                   kappa: float | None = None) -> SlopeReport:
    """Least-squares slope of ``log residual`` against ``log eps``.

    ``kappa`` additionally runs ``phi_transform_check`` at the largest eps.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ConfigurationError("need at least three eps values", field="eps")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps values must be strictly decreasing", field="eps")
    res, hs = [], []
    for e in eps_list:
        r, h = residual_at(psi, FeynmanParams(e, action, hbar, Q), window, backend=backend)
        res.append(r)
        hs.append(h)
    logs = np.log(np.maximum(res, np.finfo(float).tiny))
    slope = float(np.polyfit(np.log(eps_list), logs, 1)[0])
    factors = [r0 / r1 if r1 > 0 else math.inf for r0, r1 in zip(res, res[1:])]
    rep = SlopeReport(slope, eps_list, res, hs, tuple(window), factors)
    if kappa is not None:
        rep.phi_check = phi_transform_check(psi, kappa, eps_list[0], hbar=hbar, Q=Q,
                                            window=window, backend=backend)
    return rep


def phi_transform_check(psi, kappa: float, eps: float, *, hbar: float = 1.0, Q: int = 16,
                        window=(-1.0, 1.0), backend=None) -> float:
    """Largest gap between the transformed log residual and the classical residual.

    With ``bt(z) = i kappa z`` and ``Phi = exp(i kappa gamma phi)/(kappa gamma)``,
    the log-equation residual ``r = D_t phi - RHS`` and the classical residual
    ``D_t-part - i kappa Phi_xx`` satisfy ``r_Phi = i kappa gamma Phi r``.
    Here ``D_t phi = (log P_eps psi - log psi)/eps`` and ``Phi_xx`` is the
    discrete second difference of ``Phi`` on the grid.  ``Phi`` oscillates at
    wavenumber about ``kappa gamma |phi_x|``, so the spacing is refined to keep
    the stencil truncation of ``Phi_xx`` below round-off.
    """
    fn = _profile(psi)
    action = linear_tilde_action(1j * kappa, hbar)
    params = FeynmanParams(eps, action, hbar, Q)
    kg = kappa * GAMMA
    grid = _setup(eps, window, min(math.sqrt(eps) / 8.0, PHI_RESOLUTION / max(abs(kg), 1e-300)))
    x = grid.x
    vals = fn(x)
    step = propagate_step(vals, params, grid, backend=backend)
    sel = (x >= window[0] - 1e-12) & (x <= window[1] + 1e-12) & step.window
    phi = np.log(vals)
    kg = kappa * GAMMA
    Phi = np.exp(1j * kg * phi) / kg
    dt_phi = (np.log(step.values[sel]) - phi[sel]) / eps
    rhs = drift_phi(vals, grid.h, action, hbar)[sel]
    r_phi = dt_phi - rhs
    _, Phi_xx = _derivatives(Phi, grid.h)
    r_Phi = 1j * kg * Phi[sel] * dt_phi - 1j * kappa * Phi_xx[sel]
    return float(np.max(np.abs(r_Phi - 1j * kg * Phi[sel] * r_phi)))
