"""Galerkin time stepping for the shifted equation and the law fixed point.

Writing ``X = Y + W_g`` removes the noise from the dynamics.  For a frozen
law path the particles obey

    Y' = Delta Pi_N beta(Y + W_g) + Pi_N f(t, Y + W_g, mu(t)),

which is stepped either explicitly or semi-implicitly (implicit in the
monotone part, explicit in the drift).  ``solve_mckean_vlasov`` iterates
frozen-law solves until the law path stops moving in the weighted
``int exp(-c t) W2 dt`` distance.

Everything is batched over particles: states are ``(M, N)`` coefficient
arrays and trajectories ``(S+1, M, N)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import trapezoid

from .complex_monotone import MonotoneMap
from .errors import ConfigurationError, InnerSolveError, PicardError
from .mean_field import DriftSpec, EmpiricalLaw, LawPath, make_drift, path_distance
from .noise import NoiseSpec, sample_ensemble
from .spectral_space import Norm, SpectralSpace, SpectralState, build_space

__all__ = [
    "SolverConfig",
    "Trajectory",
    "PicardReport",
    "MeanFieldResult",
    "Problem",
    "step",
    "solve_fixed_law",
    "solve_mckean_vlasov",
    "cauchy_study",
    "fitted_energy_constant",
    "contraction_weight",
]

SCHEMES = ("semi_implicit", "explicit")
INNER_SOLVERS = ("newton", "preconditioned")
OUTSIDE_THEOREM = "outside theorem hypotheses (alpha = 0)"


@dataclass(frozen=True)
class SolverConfig:
    T: float = 0.1
    dt: float = 1e-3
    scheme: str = "semi_implicit"
    inner: str = "newton"
    tol_inner: float = 1e-10
    max_inner: int = 200
    tol_law: float = 1e-10
    max_picard: int = 30
    M: int = 1
    c: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError(f"horizon T must be > 0, got {self.T}", field="T")
        if not self.dt > 0:
            raise ConfigurationError(f"step dt must be > 0, got {self.dt}", field="dt")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}",
                                     field="scheme")
        if self.inner not in INNER_SOLVERS:
            raise ConfigurationError(f"inner must be one of {INNER_SOLVERS}, got {self.inner!r}",
                                     field="inner")
        if not self.tol_inner > 0 or not self.tol_law > 0:
            raise ConfigurationError("tolerances must be > 0", field="tol_inner")
        if self.max_inner < 1 or self.max_picard < 1:
            raise ConfigurationError("iteration budgets must be >= 1", field="max_inner")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigurationError(f"ensemble size M must be >= 1, got {self.M}", field="M")
        if self.c is not None and self.c < 0:
            raise ConfigurationError("contraction weight c must be >= 0", field="c")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(f"T = {self.T} is not a whole number of steps dt = {self.dt}",
                                     field="dt")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)


def contraction_weight(lip: float) -> float:
    return 1.0 + 4.0 * max(lip, 2.0)


# ------------------------------------------------------------------ operator


class _Operator:
    """Coefficient-space action of ``Pi_N beta`` and its real Jacobian."""

    def __init__(self, space: SpectralSpace, beta: MonotoneMap):
        self.space = space
        self.beta = beta
        self.S = np.asarray(space.synthesis)
        self.A = np.asarray(space.analysis)
        self.lam = space.eigenvalues

    def grid(self, Z):
        return Z @ self.S.T

    def apply(self, Z):
        return self.beta(self.grid(Z)) @ self.A.T

    def jacobian(self, Z):
        """Real ``(M, 2N, 2N)`` Jacobian of ``Z -> Pi_N beta(Z)`` in (Re, Im) blocks."""
        U = self.grid(Z)
        bx, by = self.beta.jacobian(U)
        S, h = self.S, self.space.h
        M, N = Z.shape
        D = np.stack([bx.real, by.real, bx.imag, by.imag])          # (4, M, G)
        K = h * np.matmul(S.T, D[..., None] * S)                     # (4, M, N, N)
        J = np.empty((M, 2 * N, 2 * N))
        J[:, :N, :N], J[:, :N, N:], J[:, N:, :N], J[:, N:, N:] = K
        return J

    def pairing(self, Z):
        """Discrete ``Re <beta(Z), Z>_{L2}`` per particle."""
        U = self.grid(Z)
        b = self.beta(U)
        return self.space.h * np.sum((b * U.conj()).real, axis=-1)


def _hnorm(space, Z):
    return space.norms(Z, Norm.HminusOne)


def _newton_implicit(op, rhs, W1, dt, Y0, tol, max_iter):
    sp = op.space
    N = sp.N
    lam = op.lam
    wstar = 1.0 / lam
    Y = Y0.copy()

    def resid(Y):
        return Y + dt * lam * op.apply(Y + W1) - rhs

    F = resid(Y)
    eye = np.eye(2 * N)
    lam2 = np.concatenate([lam, lam])
    for it in range(1, max_iter + 1):
        J = eye[None] + dt * lam2[None, :, None] * op.jacobian(Y + W1)
        b = -np.concatenate([F.real, F.imag], axis=1)
        d = np.linalg.solve(J, b[:, :, None])[:, :, 0]
        dY = d[:, :N] + 1j * d[:, N:]
        merit0 = np.sum(wstar * np.abs(F) ** 2, axis=1)
        t = np.ones(Y.shape[0])
        Yn = Y + dY
        Fn = resid(Yn)
        for _ in range(40):
            merit = np.sum(wstar * np.abs(Fn) ** 2, axis=1)
            bad = (merit > (1.0 - 2e-4 * t) * merit0) & (merit > 1e-28 * (1.0 + merit0))
            if not bad.any():
                break
            t = np.where(bad, 0.5 * t, t)
            Yn = Y + t[:, None] * dY
            Fn = resid(Yn)
        diff = _hnorm(sp, Yn - Y)
        Y, F = Yn, Fn
        if np.max(diff) < tol:
            return Y, it
    res = float(np.max(_hnorm(sp, F)))
    raise InnerSolveError(f"implicit Newton solve did not converge in {max_iter} iterations "
                          f"(residual {res:.3e})", residual=res)


def _preconditioned_implicit(op, rhs, W1, dt, Y0, tol, max_iter):
    sp = op.space
    lam = op.lam
    beta = op.beta
    if math.isfinite(beta.lipschitz):
        kappa = beta.lipschitz
    else:
        radius = 2.0 * float(np.max(np.abs(op.grid(Y0 + W1)))) + 1.0
        kappa = beta.lipschitz_on(radius)
    denom = 1.0 + dt * kappa * lam
    Y = Y0.copy()
    history = []
    for it in range(1, max_iter + 1):
        Z = Y + W1
        Yn = (rhs - dt * lam * (op.apply(Z) - kappa * Z) - dt * kappa * lam * W1) / denom
        diff = float(np.max(_hnorm(sp, Yn - Y)))
        history.append(diff)
        Y = Yn
        if not math.isfinite(diff):
            break
        if diff < tol:
            return Y, it
    raise InnerSolveError(
        f"preconditioned iteration did not converge in {len(history)} iterations "
        f"(last increment {history[-1]:.3e})", residual=history[-1], history=history,
    )


def _as_batch(x, space=None):
    if isinstance(x, SpectralState):
        return x.coeffs[None, :], x.space, True
    if isinstance(x, EmpiricalLaw):
        return x.particles.copy(), x.space, False
    arr = np.asarray(x, dtype=complex)
    single = arr.ndim == 1
    return np.atleast_2d(arr).copy(), space, single


def _check_explicit(beta, space, dt):
    if not math.isfinite(beta.lipschitz):
        raise ConfigurationError("explicit scheme needs a globally Lipschitz beta", field="scheme")
    cfl = dt * beta.lipschitz * space.eigenvalues[-1]
    if cfl > 0.5:
        raise ConfigurationError(
            f"explicit scheme violates dt*[beta]_1*lambda_N <= 0.5 (value {cfl:.4g})", field="dt"
        )


def step(Y, t, dt, W_now, W_next, law, beta: MonotoneMap, drift: DriftSpec | None,
         scheme="semi_implicit", *, space: SpectralSpace | None = None, inner="newton",
         tol_inner=1e-10, max_inner=200, return_iterations=False):
    """One time step of the shifted equation.

    ``Y``, ``W_now`` and ``W_next`` are states or ``(M, N)`` arrays; ``law`` is
    the frozen law at ``t`` (ignored by law-free drifts).
    """
    Yb, sp, single = _as_batch(Y, space)
    if sp is None:
        raise ConfigurationError("pass space= when stepping raw arrays", field="space")
    W0 = _as_batch(W_now, sp)[0] if W_now is not None else np.zeros_like(Yb)
    W1 = _as_batch(W_next, sp)[0] if W_next is not None else np.zeros_like(Yb)
    op = _Operator(sp, beta)
    iters = 0
    if dt == 0:
        out = Yb
    else:
        X_now = Yb + W0
        fx = drift.evaluate(t, X_now, law) if drift is not None else 0.0
        if scheme == "explicit":
            _check_explicit(beta, sp, dt)
            out = Yb + dt * (-op.lam * op.apply(X_now) + fx)
        elif scheme == "semi_implicit":
            rhs = Yb + dt * fx
            solver = _newton_implicit if inner == "newton" else _preconditioned_implicit
            out, iters = solver(op, rhs, W1, dt, Yb, tol_inner, max_inner)
        else:
            raise ConfigurationError(f"unknown scheme {scheme!r}", field="scheme")
    if single:
        out = out[0]
        if isinstance(Y, SpectralState):
            out = SpectralState(out, sp)
    return (out, iters) if return_iterations else out


# ---------------------------------------------------------------- trajectory


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    X: np.ndarray                 # (S+1, M, N)
    Y: np.ndarray                 # (S+1, M, N)
    W: np.ndarray                 # (S+1, M, N)
    space: SpectralSpace = field(repr=False)
    hminus: np.ndarray = None     # ||Y||_{(H^1_0)*}, (S+1, M)
    l2: np.ndarray = None         # ||Y||_{L2}, (S+1, M)
    pairing: np.ndarray = None    # Re <beta(Y), Y>_{L2}, (S+1, M)
    beta_h1_integral: np.ndarray = None  # sum_s dt ||Pi beta(X_s)||^2_{H^1_0}, (M,)
    drift_zero_l2: np.ndarray = None     # ||f(t_s, 0, mu_s)||_{L2}, (S+1,)
    inner_iterations: np.ndarray = None  # (S,)
    fitted_C: float = 0.0
    scheme: str = "semi_implicit"

    @property
    def M(self):
        return self.X.shape[1]

    def state(self, s: int, particle: int = 0, which: str = "X") -> SpectralState:
        arr = self.X if which == "X" else self.Y
        return SpectralState(arr[s, particle], self.space)

    def norms(self, which, particle: int = 0, of: str = "X") -> np.ndarray:
        arr = self.X if of == "X" else self.Y
        return self.space.norms(arr[:, particle], which)

    def law_path(self) -> LawPath:
        return LawPath(self.times, self.X, self.space)

    def final_norms(self) -> dict:
        return {w.value: float(np.mean(self.space.norms(self.X[-1], w))) for w in Norm}


def fitted_energy_constant(Ynorm_sq, f0_sq, W_sq, dt) -> float:
    """Smallest ``C >= 0`` with ``|Y_{s+1}|^2 <= (1 + C dt)|Y_s|^2 + C dt (|f(.,0)|^2 + |W|^2)``.

    Arrays are ``(S+1, M)`` except ``f0_sq`` which may be ``(S+1,)``.
    """
    Ynorm_sq = np.asarray(Ynorm_sq, dtype=float)
    f0_sq = np.broadcast_to(np.asarray(f0_sq, dtype=float).reshape(-1, *([1] * (Ynorm_sq.ndim - 1))),
                            Ynorm_sq.shape)
    W_sq = np.asarray(W_sq, dtype=float)
    inc = Ynorm_sq[1:] - Ynorm_sq[:-1]
    den = dt * (Ynorm_sq[:-1] + f0_sq[:-1] + W_sq[1:])
    tiny = 1e-13 * (1.0 + Ynorm_sq[:-1])
    pos = inc > tiny
    if not pos.any():
        return 0.0
    if np.any(pos & (den <= 0)):
        return math.inf
    return float(max(0.0, np.max(inc[pos] / den[pos])))


def solve_fixed_law(X0, beta: MonotoneMap, drift: DriftSpec | None, noise, law_path: LawPath | None,
                    config: SolverConfig, *, space: SpectralSpace | None = None) -> Trajectory:
    """Frozen-law solve for a batch of particles.

    ``noise`` is ``None``, a ``(S+1, N)`` path shared by all particles or a
    ``(M, S+1, N)`` array.  ``law_path`` may be ``None`` for law-free drifts.
    """
    X0b, sp, _ = _as_batch(X0, space if space is not None else getattr(law_path, "space", None))
    if sp is None:
        raise ConfigurationError("cannot infer the space; pass space=", field="space")
    times = config.times()
    S = times.size - 1
    M, N = X0b.shape
    if noise is None:
        W = np.zeros((M, S + 1, N), dtype=complex)
    else:
        W = np.asarray(getattr(noise, "values", noise), dtype=complex)
        if W.ndim == 2:
            W = np.broadcast_to(W, (M,) + W.shape)
        if W.shape != (M, S + 1, N):
            raise ConfigurationError(f"noise shape {W.shape} does not match {(M, S + 1, N)}",
                                     field="noise")
    W = np.ascontiguousarray(np.transpose(W, (1, 0, 2)))  # (S+1, M, N)
    if law_path is not None and law_path.times.size != S + 1:
        raise ConfigurationError("law path and solver time grids differ", field="law_path")
    if config.scheme == "explicit":
        _check_explicit(beta, sp, config.dt)
    if drift is not None and drift.depends_on_law and law_path is None:
        raise ConfigurationError("law-dependent drift needs a law path", field="law_path")

    op = _Operator(sp, beta)
    lam = sp.eigenvalues
    Y = np.empty((S + 1, M, N), dtype=complex)
    Y[0] = X0b - W[0]
    iters = np.zeros(S, dtype=np.int64)
    beta_h1 = np.zeros(M)
    f0 = np.zeros(S + 1)
    zero = np.zeros((1, N), dtype=complex)
    empty_law = np.zeros((1, N), dtype=complex)

    def law_at(s):
        return law_path.particles[s] if law_path is not None else empty_law

    for s in range(S):
        t = times[s]
        law = law_at(s)
        Xs = Y[s] + W[s]
        if drift is not None:
            fx = drift.evaluate(t, Xs, law)
            f0[s] = float(sp.norms(drift.evaluate(t, zero, law)[0], Norm.L2))
        else:
            fx = 0.0
        bX = op.apply(Xs)
        beta_h1 += config.dt * np.sum(lam * np.abs(bX) ** 2, axis=1)
        if config.scheme == "explicit":
            Y[s + 1] = Y[s] + config.dt * (-lam * bX + fx)
        else:
            rhs = Y[s] + config.dt * fx
            solver = _newton_implicit if config.inner == "newton" else _preconditioned_implicit
            Y[s + 1], iters[s] = solver(op, rhs, W[s + 1], config.dt, Y[s],
                                        config.tol_inner, config.max_inner)
        if not np.all(np.isfinite(Y[s + 1])):
            raise InnerSolveError(f"non-finite state at step {s + 1}", residual=math.inf)
    if drift is not None:
        f0[S] = float(sp.norms(drift.evaluate(times[S], zero, law_at(S))[0], Norm.L2))
    X = Y + W
    hminus = sp.norms(Y, Norm.HminusOne)
    l2 = sp.norms(Y, Norm.L2)
    pairing = np.stack([op.pairing(Y[s]) for s in range(S + 1)])
    C = fitted_energy_constant(hminus ** 2, f0 ** 2, sp.norms(W, Norm.L2) ** 2, config.dt)
    return Trajectory(times, X, Y, W, sp, hminus, l2, pairing, beta_h1, f0, iters, C, config.scheme)


# ---------------------------------------------------------------- law fixed point


@dataclass
class PicardReport:
    distances: list
    ratios: list
    empirical_ratio: float
    theoretical_ratio: float
    c: float
    converged: bool
    iterations: int
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def clean(x):
            return None if (isinstance(x, float) and not math.isfinite(x)) else x
        return {
            "distances": [float(d) for d in self.distances],
            "ratios": [float(r) for r in self.ratios],
            "empirical_ratio": clean(float(self.empirical_ratio)),
            "theoretical_ratio": clean(float(self.theoretical_ratio)),
            "c": float(self.c),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "flags": list(self.flags),
        }


@dataclass(eq=False)
class MeanFieldResult:
    trajectory: Trajectory
    law_path: LawPath
    report: PicardReport


def solve_mckean_vlasov(X0, beta: MonotoneMap, drift: DriftSpec, noise: NoiseSpec | None,
                        config: SolverConfig, *, space: SpectralSpace | None = None,
                        noise_paths=None) -> MeanFieldResult:
    """Picard iteration over law paths with synchronous updates.

    Noise substreams are fixed per particle for the whole iteration, so the
    only thing that changes between sweeps is the frozen law.
    """
    X0b, sp, _ = _as_batch(X0, space)
    if sp is None:
        raise ConfigurationError("cannot infer the space; pass space=", field="space")
    M = X0b.shape[0]
    times = config.times()
    flags = []
    if beta.alpha <= 0:
        flags.append(OUTSIDE_THEOREM)
        warnings.warn("beta is not strictly monotone; run is " + OUTSIDE_THEOREM, stacklevel=2)
    lip = drift.lipschitz if drift is not None else 0.0
    c = config.c if config.c is not None else contraction_weight(lip)
    theory = 2 * lip / (c - 2 * lip) if c > 2 * lip else math.inf
    if noise_paths is None:
        noise_paths = (sample_ensemble(noise, sp, times, config.seed, M)
                       if noise is not None and not noise.is_zero else None)

    prev = LawPath.constant(EmpiricalLaw(X0b, sp), times)
    distances = []
    traj = None
    converged = False
    for _ in range(config.max_picard):
        traj = solve_fixed_law(X0b, beta, drift, noise_paths, prev, config, space=sp)
        new = traj.law_path()
        d = path_distance(new, prev, c)
        distances.append(d)
        prev = new
        if d < config.tol_law:
            converged = True
            break
    scale = 1.0 + float(np.max(sp.norms(traj.X, Norm.HminusOne))) * config.T
    floor = 1e-12 * scale
    ratios = [b / a for a, b in zip(distances, distances[1:]) if a > floor and b > floor]
    empirical = max(ratios) if ratios else 0.0
    report = PicardReport(distances, ratios, empirical, theory, c, converged, len(distances), flags)
    if not converged:
        raise PicardError(
            f"law iteration did not reach tol_law = {config.tol_law:g} in {config.max_picard} sweeps",
            residual=distances[-1], history=distances,
        )
    return MeanFieldResult(traj, prev, report)


# ---------------------------------------------------------------- refinement


@dataclass
class Problem:
    """Level-independent description used by refinement studies.

    ``X0`` is a callable ``j -> coefficient`` (1-based mode, vectorised) or an
    ``(M, K)`` / ``(K,)`` coefficient table; entries beyond ``N`` are dropped.
    """

    L: float
    X0: object
    beta: MonotoneMap
    drift_kind: str = "zero"
    drift_params: dict = field(default_factory=dict)
    noise: NoiseSpec | None = None
    grid_factor: int = 8

    def space(self, N: int) -> SpectralSpace:
        return build_space(self.L, N, self.grid_factor * N)

    def initial(self, N: int, M: int) -> np.ndarray:
        if callable(self.X0):
            c = np.asarray(self.X0(np.arange(1, N + 1)), dtype=complex)
            return np.broadcast_to(c, (M, N)).copy()
        tab = np.atleast_2d(np.asarray(self.X0, dtype=complex))
        out = np.zeros((tab.shape[0], N), dtype=complex)
        k = min(N, tab.shape[1])
        out[:, :k] = tab[:, :k]
        if out.shape[0] == 1:
            out = np.broadcast_to(out, (M, N)).copy()
        if out.shape[0] != M:
            raise ConfigurationError(f"initial table has {out.shape[0]} rows, M = {M}", field="X0")
        return out

    def run(self, N: int, config: SolverConfig) -> Trajectory:
        sp = self.space(N)
        drift = make_drift(self.drift_kind, self.drift_params, sp)
        X0 = self.initial(N, config.M)
        if drift.depends_on_law:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return solve_mckean_vlasov(X0, self.beta, drift, self.noise, config, space=sp).trajectory
        noise_paths = None
        if self.noise is not None and not self.noise.is_zero:
            noise_paths = sample_ensemble(self.noise, sp, config.times(), config.seed, config.M)
        return solve_fixed_law(X0, self.beta, drift, noise_paths, None, config, space=sp)


def _embed(Y, N):
    out = np.zeros(Y.shape[:-1] + (N,), dtype=complex)
    out[..., : Y.shape[-1]] = Y
    return out


def cauchy_study(problem: Problem, levels, config: SolverConfig) -> list:
    """Distances between solutions at consecutive Galerkin levels.

    Each row holds ``sup_t ||Y_N - Y_N'||_{(H^1_0)*}`` and
    ``int ||Y_N - Y_N'||^2_{L2} dt`` (largest over particles).
    """
    levels = [int(n) for n in levels]
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigurationError("levels must be an increasing list of at least two sizes",
                                 field="levels")
    runs = {n: problem.run(n, config) for n in levels}
    rows = []
    for a, b in zip(levels, levels[1:]):
        fine = runs[b]
        diff = _embed(runs[a].Y, b) - fine.Y
        hm = fine.space.norms(diff, Norm.HminusOne)      # (S+1, M)
        l2sq = fine.space.norms(diff, Norm.L2) ** 2
        rows.append({
            "N": a,
            "N_fine": b,
            "sup_hminus": float(np.max(hm)),
            "int_l2_sq": float(np.max(trapezoid(l2sq, fine.times, axis=0))),
        })
    return rows


def with_tolerance(config: SolverConfig, tol: float) -> SolverConfig:
    return replace(config, tol_inner=tol)
