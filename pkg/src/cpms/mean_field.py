"""Empirical laws on (H^1_0)*, Wasserstein-2 distances and the drift catalog.

Ensembles are stored as ``(M, N)`` coefficient arrays in the L2-orthonormal
basis; a law path is an ``(S+1, M, N)`` array on a time grid.  Distances
between particles are always measured in (H^1_0)*.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from . import _kernels
from .errors import ConfigurationError
from .spectral_space import Norm, SpectralSpace, SpectralState

__all__ = [
    "EmpiricalLaw",
    "LawPath",
    "DriftSpec",
    "wasserstein2",
    "path_distance",
    "make_drift",
    "evaluate_drift",
    "audit_drift",
    "DRIFT_KINDS",
]

DRIFT_KINDS = ("zero", "linear_in_mean", "spectral_linear", "cylindrical")


@dataclass(frozen=True, eq=False)
class EmpiricalLaw:
    """Uniform empirical measure on ``M`` particles of one space."""

    particles: np.ndarray
    space: SpectralSpace = field(repr=False)

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.particles, dtype=complex))
        if p.ndim != 2 or p.shape[1] != self.space.N or p.shape[0] < 1:
            raise ConfigurationError(
                f"ensemble must have shape (M >= 1, {self.space.N}), got {p.shape}", field="particles"
            )
        object.__setattr__(self, "particles", p)

    @classmethod
    def from_states(cls, states):
        states = list(states)
        if not states:
            raise ConfigurationError("an empirical law needs at least one particle", field="particles")
        space = states[0].space
        for s in states[1:]:
            if s.space.describe() != space.describe():
                raise ConfigurationError("all particles must share one space", field="particles")
        return cls(np.stack([s.coeffs for s in states]), space)

    @property
    def M(self) -> int:
        return self.particles.shape[0]

    @property
    def states(self):
        return [SpectralState(p, self.space) for p in self.particles]

    def mean(self) -> np.ndarray:
        return self.particles.mean(axis=0)

    def second_moment(self) -> float:
        """``int ||y||^2_{(H^1_0)*} mu(dy)``."""
        return float(np.mean(self.space.norms(self.particles, Norm.HminusOne) ** 2))


@dataclass(frozen=True, eq=False)
class LawPath:
    """Time-indexed ensembles ``mu(t_s)``, particles shape ``(S+1, M, N)``."""

    times: np.ndarray
    particles: np.ndarray
    space: SpectralSpace = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.particles, dtype=complex)
        if p.ndim != 3 or p.shape[0] != t.shape[0] or p.shape[2] != self.space.N:
            raise ConfigurationError(
                f"law path shape {p.shape} does not match {t.shape[0]} times and N={self.space.N}",
                field="particles",
            )
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "particles", p)

    @classmethod
    def constant(cls, law: EmpiricalLaw, times) -> "LawPath":
        times = np.asarray(times, dtype=float)
        p = np.broadcast_to(law.particles, (times.size,) + law.particles.shape).copy()
        return cls(times, p, law.space)

    def at(self, s: int) -> EmpiricalLaw:
        return EmpiricalLaw(self.particles[s], self.space)

    def __len__(self):
        return self.times.size


def _sq_dist_matrix(x, y, weights):
    # direct differences: the Gram-matrix shortcut loses everything below
    # sqrt(eps) once the square root is taken
    d = x[:, None, :] - y[None, :, :]
    return np.sum(weights * (d.real ** 2 + d.imag ** 2), axis=-1)


def wasserstein2(mu: EmpiricalLaw, nu: EmpiricalLaw, *, backend=None) -> float:
    """Exact W2 in (H^1_0)* between equal-size uniform ensembles."""
    if mu.M != nu.M:
        raise ConfigurationError(
            f"ensembles must have equal size, got {mu.M} and {nu.M}", field="particles"
        )
    if mu.space.describe() != nu.space.describe():
        raise ConfigurationError("laws live on different spaces", field="space")
    w = 1.0 / mu.space.eigenvalues
    cost = _sq_dist_matrix(mu.particles, nu.particles, w)
    if mu.M == 1:
        return float(math.sqrt(cost[0, 0]))
    be = backend or _kernels.BACKEND
    perm = be.hungarian(cost)
    # fsum is exactly rounded, so W2(mu, nu) == W2(nu, mu) bit for bit
    total = math.fsum(cost[np.arange(mu.M), perm]) / mu.M
    return float(math.sqrt(max(total, 0.0)))


def path_distance(mu, nu, c: float, times=None, *, backend=None) -> float:
    """Trapezoid value of ``int_0^T exp(-c t) W2(mu(t), nu(t)) dt``."""
    if c < 0:
        raise ConfigurationError("contraction weight c must be >= 0", field="c")
    if isinstance(mu, LawPath):
        if times is None:
            times = mu.times
        if isinstance(nu, LawPath) and (nu.times.shape != mu.times.shape
                                         or not np.array_equal(nu.times, mu.times)):
            raise ConfigurationError("law paths are defined on different time grids", field="times")
        mu = [mu.at(s) for s in range(len(mu))]
    if isinstance(nu, LawPath):
        nu = [nu.at(s) for s in range(len(nu))]
    times = np.asarray(times, dtype=float)
    if len(mu) != times.size or len(nu) != times.size:
        raise ConfigurationError("law paths and time grid differ in length", field="times")
    w2 = np.array([wasserstein2(a, b, backend=backend) for a, b in zip(mu, nu)])
    return weighted_time_integral(w2, c, times)


def weighted_time_integral(values, c, times) -> float:
    times = np.asarray(times, dtype=float)
    if times.size == 1:
        return 0.0
    return float(trapezoid(np.exp(-c * times) * np.asarray(values, dtype=float), times))


# --------------------------------------------------------------------- drifts


def _complex_table(value, name):
    """Nested list of numbers, ``[re, im]`` pairs or ``{"re", "im"}`` records."""
    if value is None:
        return None
    arr = np.asarray(value)
    if arr.dtype.kind in "iufc":
        if arr.ndim == 3 and arr.shape[-1] == 2 and arr.dtype.kind != "c":
            arr = arr[..., 0] + 1j * arr[..., 1]
        out = np.asarray(arr, dtype=complex)
    else:
        try:
            out = np.array([[complex(e["re"], e["im"]) if isinstance(e, dict) else complex(e)
                             for e in row] for row in value], dtype=complex)
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigurationError(f"{name} must be a table of complex numbers", field=name) from exc
    if out.ndim != 2:
        raise ConfigurationError(f"{name} must be a 2-D table, got {out.ndim}-D", field=name)
    if not np.all(np.isfinite(out)):
        raise ConfigurationError(f"{name} has non-finite entries", field=name)
    return out


def _fit(table, n):
    out = np.zeros((n, n), dtype=complex)
    if table is not None:
        r, c = min(table.shape[0], n), min(table.shape[1], n)
        out[:r, :c] = table[:r, :c]
    return out


def _complex(value, name):
    if isinstance(value, dict):
        return complex(value.get("re", 0.0), value.get("im", 0.0))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(value[0], value[1])
    try:
        return complex(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name} must be a complex number", field=name) from exc


def _clip(z):
    r = np.abs(z)
    return np.where(r > 1.0, z / np.where(r > 1.0, r, 1.0), z)


CYLINDRICAL_KERNELS = {
    # name: (factor on x, factor on the law sample); f_k(z, w) = s_k phi(z) psi(w)
    "clip_product": (_clip, _clip),
}


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Drift ``f(t, x, mu)`` with its declared constants.

    ``lipschitz`` is ``[f]_1`` in (H^1_0)* (the value that enters the law
    contraction weight); ``lipschitz_l2`` is the L2 counterpart.  Both are
    measured against W2 in (H^1_0)*.  ``norm0`` and ``f0`` bound the drift at
    ``x = 0``.
    """

    kind: str
    params: dict
    space: SpectralSpace = field(repr=False)
    lipschitz: float
    lipschitz_l2: float
    norm0: float
    f0: Callable = field(repr=False)
    modulation: Callable | None = field(default=None, repr=False)
    _apply: Callable = field(default=None, repr=False)
    depends_on_law: bool = True

    def evaluate(self, t: float, X, law) -> np.ndarray:
        """Drift coefficients for a batch ``X`` of shape ``(..., N)`` under ``law``."""
        X = np.asarray(X, dtype=complex)
        particles = law.particles if isinstance(law, EmpiricalLaw) else np.asarray(law, dtype=complex)
        out = self._apply(X, particles)
        if self.modulation is not None:
            out = self.modulation(t) * out
        return out

    def describe(self) -> dict:
        return {"kind": self.kind, "lipschitz": self.lipschitz, "lipschitz_l2": self.lipschitz_l2,
                "norm0": self.norm0}


def evaluate_drift(f: DriftSpec, t: float, x: SpectralState, mu: EmpiricalLaw) -> SpectralState:
    return SpectralState(f.evaluate(t, x.coeffs, mu), x.space)


def _modulation(params):
    m = params.get("modulation")
    if m is None:
        return None
    if callable(m):
        return m
    if isinstance(m, dict):
        amp = float(m.get("amplitude", 1.0))
        freq = float(m.get("frequency", 1.0))
        if abs(amp) > 1:
            raise ConfigurationError("modulation amplitude must be <= 1 in magnitude",
                                     field="modulation")
        return lambda t: amp * math.cos(2 * math.pi * freq * t)
    raise ConfigurationError("modulation must be a callable or {amplitude, frequency}",
                             field="modulation")


def make_drift(kind: str, params: dict | None, space: SpectralSpace) -> DriftSpec:
    """Build a catalog drift on ``space``.

    A time modulation ``m(t)`` with ``|m| <= 1`` may be supplied as
    ``params["modulation"]``; it multiplies the drift output and leaves the
    declared constants valid.
    """
    params = dict(params or {})
    mod = _modulation(params)
    N = space.N
    lam = space.eigenvalues
    zero0 = lambda t: 0.0  # noqa: E731

    if kind == "zero":
        return DriftSpec("zero", {}, space, 0.0, 0.0, 1.0, zero0, None,
                         lambda X, P: np.zeros_like(X), depends_on_law=False)

    if kind == "linear_in_mean":
        a = _complex(params.get("a", 0.0), "a")
        b = _complex(params.get("b", 0.0), "b")
        src = params.get("source")
        s = np.zeros(N, dtype=complex)
        if src is not None:
            s_in = np.asarray([_complex(v, "source") for v in src], dtype=complex)
            s[: min(N, s_in.size)] = s_in[:N]

        def apply(X, P):
            return a * X + b * P.mean(axis=0) + s

        lip = math.sqrt(2.0) * max(abs(a), abs(b))
        lip_l2 = math.sqrt(2.0) * max(abs(a), abs(b) * math.sqrt(lam[-1]))
        s_norm = max(float(np.linalg.norm(s)), float(np.sqrt(np.sum(np.abs(s) ** 2 / lam))))
        norm0 = max(abs(b) * math.sqrt(lam[-1]), s_norm, 1e-300)
        f0 = (lambda t: 1.0) if s_norm > 0 else zero0
        return DriftSpec("linear_in_mean", {"a": a, "b": b}, space, lip, lip_l2, norm0, f0, mod,
                         apply, depends_on_law=b != 0)

    if kind == "spectral_linear":
        th1 = _fit(_complex_table(params.get("theta1"), "theta1"), N)
        th2 = _fit(_complex_table(params.get("theta2"), "theta2"), N)
        # th[j, k]: input mode j -> output mode k; in e~ coefficients the map
        # is a_k' = sum_j th[j, k] sqrt(lam_k / lam_j) a_j
        scale = np.sqrt(lam[None, :] / lam[:, None])
        M1 = th1 * scale
        M2 = th2 * scale

        def consts(th):
            alpha = np.count_nonzero(th, axis=0).astype(float)  # per output k
            w = alpha[None, :] * np.abs(th) ** 2
            star = math.sqrt(float(np.max(np.sum(w, axis=1))))
            l2_x = math.sqrt(float(np.max(np.sum(w * lam[None, :] / lam[:, None], axis=1))))
            l2_law = math.sqrt(float(np.max(np.sum(w * lam[None, :], axis=1))))
            return star, l2_x, l2_law

        s1, l1, _ = consts(th1)
        s2, _, m2 = consts(th2)

        def apply(X, P):
            return X @ M1 + P.mean(axis=0) @ M2

        norm0 = max(s2, m2, 1e-300)
        return DriftSpec("spectral_linear", {"theta1": th1, "theta2": th2}, space,
                         max(s1, s2), max(l1, m2), norm0, zero0, mod, apply,
                         depends_on_law=bool(np.any(th2)))

    if kind == "cylindrical":
        return _make_cylindrical(params, space, mod)

    raise ConfigurationError(f"unknown drift kind {kind!r}; expected one of {DRIFT_KINDS}",
                             field="kind")


def _make_cylindrical(params, space, mod):
    N = space.N
    lam = space.eigenvalues
    theta = _fit(_complex_table(params.get("theta"), "theta"), N)  # theta[k, j], j <= k
    if np.any(np.triu(theta, 1)):
        raise ConfigurationError("cylindrical theta[k, j] must vanish for j > k", field="theta")
    kernel = params.get("kernel", "clip_product")
    scales = np.ones(N)
    if "scales" in params:
        sc = np.atleast_1d(np.asarray(params["scales"], dtype=float))
        scales[: min(N, sc.size)] = sc[:N]
    if isinstance(kernel, str):
        if kernel not in CYLINDRICAL_KERNELS:
            raise ConfigurationError(f"unknown cylindrical kernel {kernel!r}", field="kernel")
        phi, psi = CYLINDRICAL_KERNELS[kernel]
        fk_lip = np.abs(scales)
        separable = True
    elif callable(kernel):
        if "kernel_lipschitz" not in params:
            raise ConfigurationError("callable kernels need declared kernel_lipschitz",
                                     field="kernel_lipschitz")
        fk_lip = np.broadcast_to(np.asarray(params["kernel_lipschitz"], dtype=float), (N,)).copy()
        separable = False
    else:
        raise ConfigurationError("kernel must be a name or a callable f(k, z, w)", field="kernel")
    if not np.all(np.isfinite(fk_lip)) or np.any(fk_lip < 0):
        raise ConfigurationError("kernel Lipschitz constants must be finite and >= 0",
                                 field="kernel_lipschitz")
    row = np.sum(np.abs(theta), axis=1)
    series = float(np.sum(row ** 2 * fk_lip ** 2))
    if not math.isfinite(series):
        raise ConfigurationError("cylindrical series diverges at this truncation", field="theta")
    leb = space.L
    lip = math.sqrt(2.0 * leb / lam[0] * series)
    lip_l2 = math.sqrt(2.0 * leb * max(1.0, 1.0 / lam[0]) * series)

    S = space.synthesis  # (G, N)
    h = space.h
    inv_sqrt = 1.0 / np.sqrt(lam)
    def projections(P):
        # Pi_j y on the grid for every particle and j: (M, G, N)
        return np.cumsum(P[:, None, :] * S[None, :, :], axis=2)

    def apply(X, Pts):
        Xb = np.atleast_2d(X)
        lead = X.shape[:-1]
        Xb = Xb.reshape(-1, N)
        proj_y = projections(Pts)                         # (M, G, N)
        proj_x = np.cumsum(Xb[:, None, :] * S[None, :, :], axis=2)  # (B, G, N): Pi_k x
        out = np.zeros_like(Xb)
        if separable:
            # c_j = mean_m <e_j, psi(Pi_j y_m)>_* ; F_k(z) = s_k phi(z) sum_j theta_kj c_j
            vals = psi(proj_y)                            # (M, G, N)
            c = h * np.einsum("mgj,gj->j", vals, S) / Pts.shape[0] * inv_sqrt
            coef = scales * (theta @ c)                   # (N,)
            Fk = phi(proj_x) * coef[None, None, :]        # (B, G, N)
            out = h * np.einsum("bgk,gk->bk", Fk, S)
        else:
            for k in range(N):
                if not np.any(theta[k]):
                    continue
                z = proj_x[:, :, k]                       # (B, G)
                Fk = np.zeros(z.shape, dtype=complex)
                for j in range(k + 1):
                    if theta[k, j] == 0:
                        continue
                    w = proj_y[:, :, j]                   # (M, G')
                    vals = kernel(k + 1, z[:, :, None, None], w[None, None, :, :])
                    inner = h * np.einsum("bgmq,q->bgm", vals, S[:, j]) * inv_sqrt[j]
                    Fk += theta[k, j] * inner.mean(axis=2)
                out[:, k] = h * Fk @ S[:, k]
        return out.reshape(lead + (N,))

    return DriftSpec(
        "cylindrical",
        {"theta": theta, "kernel": kernel if isinstance(kernel, str) else "callable"},
        space, lip, lip_l2, 1.0, lambda t: 0.0, mod, apply,
        depends_on_law=bool(np.any(theta)),
    )


def audit_drift(f: DriftSpec, draws: int = 1000, seed: int = 0, M: int = 4, scale: float = 2.0):
    """Monte-Carlo Lipschitz and bound-at-zero audit.

    Returns a dict with the largest sampled ratios
    ``||f(x,mu)-f(y,nu)||_H / (||x-y||_H + W2(mu,nu))`` for both norms and the
    largest ``||f(t,0,mu)||_H / (f0(t) + m2^{1/2})``.
    """
    sp = f.space
    rng = np.random.default_rng(seed)
    decay = 1.0 / sp.modes

    def draw(*shape):
        z = rng.standard_normal(shape + (sp.N,)) + 1j * rng.standard_normal(shape + (sp.N,))
        return scale * z * decay

    worst = {"HminusOne": 0.0, "L2": 0.0, "zero_HminusOne": 0.0, "zero_L2": 0.0}
    for _ in range(draws):
        t = float(rng.uniform(0, 1))
        x, y = draw(), draw()
        mu = EmpiricalLaw(draw(M), sp)
        nu = EmpiricalLaw(mu.particles + 0.1 * draw(M) if rng.uniform() < 0.5 else draw(M), sp)
        w2 = wasserstein2(mu, nu)
        fx = f.evaluate(t, x, mu)
        fy = f.evaluate(t, y, nu)
        for which in ("HminusOne", "L2"):
            num = float(sp.norms(fx - fy, which))
            den = float(sp.norms(x - y, which)) + w2
            if den > 0:
                worst[which] = max(worst[which], num / den)
            z0 = float(sp.norms(f.evaluate(t, np.zeros(sp.N), mu), which))
            bound = f.f0(t) + math.sqrt(mu.second_moment())
            if bound > 0:
                worst["zero_" + which] = max(worst["zero_" + which], z0 / bound)
    return worst
