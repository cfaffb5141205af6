"""Diagonal additive noise and its stochastic convolution on a time grid.

``W_g(t) = sum_k (s_re_k + i s_im_k) W_k(t) e~_k`` with one real Brownian
motion per mode.  Amplitudes are tabulated against the L2 basis ``e~_k``;
a table written against the (H^1_0)*-orthonormal ``e_k = sqrt(lam_k) e~_k``
is converted by multiplying by ``sqrt(lam_k)`` (see ``from_hminus_table``).

Particle ``m`` of a run with master seed ``s`` draws from a Philox stream keyed
by ``SeedSequence(s, spawn_key=(m,))``, so paths do not depend on how many
other particles exist or in which order they are sampled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .spectral_space import SpectralSpace

__all__ = ["NoiseSpec", "NoisePath", "make_noise", "sample_convolution", "sample_ensemble",
           "particle_generator"]


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    gamma: float
    r: float
    amp: float
    sigma_re: np.ndarray
    sigma_im: np.ndarray
    envelope: Callable | None = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return self.sigma_re.size

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.sigma_re) or np.any(self.sigma_im))

    def sigma(self) -> np.ndarray:
        return self.sigma_re + 1j * self.sigma_im

    def hs_norm_sq(self, space: SpectralSpace) -> float:
        """Truncated ``sum_k lam_k^(2 gamma) (s_re^2 + s_im^2)``."""
        lam = space.eigenvalues[: self.K]
        return float(np.sum(lam ** (2 * self.gamma) * (self.sigma_re ** 2 + self.sigma_im ** 2)))

    def padded(self, N: int) -> np.ndarray:
        out = np.zeros(N, dtype=complex)
        k = min(N, self.K)
        out[:k] = self.sigma()[:k]
        return out

    def describe(self) -> dict:
        return {"gamma": self.gamma, "r": self.r, "amp": self.amp, "K": self.K}


def make_noise(gamma: float, r: float = 0.0, amp: float = 0.0, K: int = 1, *,
               sigma_re=None, sigma_im=None, tail_bound: float | None = None,
               envelope: Callable | None = None) -> NoiseSpec:
    """Power-law noise ``s_k = amp k^(-r)`` on both parts, or explicit tables.

    Power laws are admissible iff ``4 gamma - 2 r < -1``.  Explicit tables
    are finite sums, so they are admissible once a finite ``tail_bound`` for
    the modes beyond ``K`` is declared.
    """
    gamma = float(gamma)
    if not gamma > 0.5:
        raise ConfigurationError(f"noise regularity requires gamma > 1/2, got {gamma}", field="gamma")
    if sigma_re is not None or sigma_im is not None:
        sre = np.asarray(sigma_re if sigma_re is not None else np.zeros(len(sigma_im)), dtype=float)
        sim = np.asarray(sigma_im if sigma_im is not None else np.zeros(sre.size), dtype=float)
        if sre.shape != sim.shape or sre.ndim != 1:
            raise ConfigurationError("sigma_re and sigma_im must be 1-D tables of equal length",
                                     field="sigma_re")
        if tail_bound is None or not math.isfinite(tail_bound) or tail_bound < 0:
            raise ConfigurationError(
                "tabulated noise needs a finite, non-negative declared tail_bound", field="tail_bound"
            )
        return NoiseSpec(gamma, float("nan"), float("nan"), sre, sim, envelope)
    K = int(K)
    if K < 1:
        raise ConfigurationError(f"noise mode count K must be >= 1, got {K}", field="K")
    amp = float(amp)
    r = float(r)
    if amp != 0.0 and not 4 * gamma - 2 * r < -1:
        raise ConfigurationError(
            f"noise is not Hilbert-Schmidt into D((-Delta)^gamma): series exponent "
            f"4*gamma - 2*r = {4 * gamma - 2 * r:g} must be < -1",
            field="r",
        )
    k = np.arange(1, K + 1, dtype=float)
    s = amp * k ** (-r)
    return NoiseSpec(gamma, r, amp, s.copy(), s.copy(), envelope)


def from_hminus_table(space: SpectralSpace, table_re, table_im, gamma: float,
                      tail_bound: float = 0.0) -> NoiseSpec:
    """Noise amplitudes given against ``e_k`` (the (H^1_0)* basis)."""
    root = np.sqrt(space.eigenvalues)
    tre = np.asarray(table_re, dtype=float)
    tim = np.asarray(table_im, dtype=float)
    return make_noise(gamma, sigma_re=tre * root[: tre.size], sigma_im=tim * root[: tim.size],
                      tail_bound=tail_bound)


def particle_generator(seed: int, particle: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(particle),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class NoisePath:
    times: np.ndarray
    values: np.ndarray  # (S+1, N) coefficients of W_g(t_s)
    seed: int
    particle: int = 0


def _check_grid(grid):
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ConfigurationError("time grid must be a non-empty 1-D array", field="grid")
    if t[0] != 0.0:
        raise ConfigurationError("time grid must start at 0", field="grid")
    if np.any(np.diff(t) <= 0):
        raise ConfigurationError("time grid must be strictly increasing", field="grid")
    return t


def sample_convolution(g: NoiseSpec, space: SpectralSpace, grid, seed: int,
                       particle: int = 0) -> NoisePath:
    """Grid sum of ``W_g`` for one particle; adapted and ``W_g(0) = 0``."""
    t = _check_grid(grid)
    N = space.N
    vals = np.zeros((t.size, N), dtype=complex)
    if g.is_zero or t.size == 1:
        return NoisePath(t, vals, int(seed), particle)
    K = min(g.K, N)
    dt = np.diff(t)
    rng = particle_generator(seed, particle)
    dW = rng.standard_normal((dt.size, g.K))[:, :K] * np.sqrt(dt)[:, None]
    if g.envelope is not None:
        dW = dW * np.array([g.envelope(s) for s in t[:-1]])[:, None]
    sig = g.sigma()[:K]
    vals[1:, :K] = np.cumsum(dW * sig[None, :], axis=0)
    return NoisePath(t, vals, int(seed), particle)


def sample_ensemble(g: NoiseSpec, space: SpectralSpace, grid, seed: int, M: int) -> np.ndarray:
    """``(M, S+1, N)`` array of independent per-particle convolutions."""
    return np.stack([sample_convolution(g, space, grid, seed, m).values for m in range(M)])


def to_csv_rows(path: NoisePath):
    """Rows ``(t, mode, re, im)`` for export."""
    for s, t in enumerate(path.times):
        for k, v in enumerate(path.values[s], start=1):
            yield (float(t), k, float(v.real), float(v.imag))
