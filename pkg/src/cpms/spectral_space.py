"""Dirichlet sine basis on an interval and the L2 / (H^1_0)* / H^1_0 norms.

States are stored as complex coefficients against the L2-orthonormal basis
``e~_j(x) = sqrt(2/L) sin(j pi x / L)``.  In that basis all three norms of the
Gelfand triple are diagonal weight sums:

    ||x||_{L2}^2      = sum |a_j|^2
    ||x||_{H^-1}^2    = sum |a_j|^2 / lambda_j
    ||x||_{H^1_0}^2   = sum lambda_j |a_j|^2

with ``lambda_j = (j pi / L)^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.fft

from .errors import ConfigurationError

__all__ = [
    "Norm",
    "SpectralSpace",
    "SpectralState",
    "build_space",
    "norm",
    "project",
    "transform",
    "apply_laplacian",
]


class Norm(str, Enum):
    L2 = "L2"
    HminusOne = "HminusOne"
    HOne = "HOne"


@dataclass(frozen=True, eq=False)
class SpectralSpace:
    """Truncated Dirichlet eigenbasis with a uniform interior collocation grid."""

    L: float
    N: int
    G: int

    def __post_init__(self):
        if not np.isfinite(self.L) or self.L <= 0:
            raise ConfigurationError(f"domain_length L must be > 0, got {self.L}", field="L")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"truncation must be >= 1, got N={self.N}", field="N")
        if int(self.G) != self.G or self.G < 2 * self.N:
            raise ConfigurationError(
                f"grid size G must satisfy G >= 2N = {2 * self.N}, got G={self.G}", field="G"
            )
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "G", int(self.G))
        object.__setattr__(self, "L", float(self.L))

    @cached_property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.N + 1)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return (self.modes * np.pi / self.L) ** 2

    @property
    def h(self) -> float:
        """Grid spacing; also the trapezoid weight of every interior node."""
        return self.L / (self.G + 1)

    @cached_property
    def grid(self) -> np.ndarray:
        return self.h * np.arange(1, self.G + 1)

    @cached_property
    def synthesis(self) -> np.ndarray:
        """(G, N) real matrix evaluating ``e~_j`` at the grid nodes."""
        S = np.sqrt(2.0 / self.L) * np.sin(np.outer(self.grid, self.modes) * np.pi / self.L)
        S.setflags(write=False)
        return S

    @cached_property
    def analysis(self) -> np.ndarray:
        """(N, G) real matrix: trapezoid projection onto the first N modes."""
        A = self.h * self.synthesis.T
        A = np.ascontiguousarray(A)
        A.setflags(write=False)
        return A

    def basis(self, xi) -> np.ndarray:
        """Evaluate all basis functions at arbitrary points, shape (len(xi), N)."""
        xi = np.asarray(xi, dtype=float)
        return np.sqrt(2.0 / self.L) * np.sin(np.multiply.outer(xi, self.modes) * np.pi / self.L)

    # batched coefficient <-> grid maps used by the solver
    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs) @ self.synthesis.T

    def to_coefficients(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values) @ self.analysis.T

    def weights(self, which) -> np.ndarray:
        which = Norm(which)
        if which is Norm.L2:
            return np.ones(self.N)
        if which is Norm.HminusOne:
            return 1.0 / self.eigenvalues
        return self.eigenvalues.copy()

    def norms(self, coeffs: np.ndarray, which) -> np.ndarray:
        """Vectorised norm over the last axis of a coefficient array."""
        w = self.weights(which)
        return np.sqrt(np.sum(w * np.abs(coeffs) ** 2, axis=-1))

    def zeros(self) -> "SpectralState":
        return SpectralState(np.zeros(self.N, dtype=complex), self)

    def state(self, coeffs) -> "SpectralState":
        c = np.zeros(self.N, dtype=complex)
        coeffs = np.asarray(coeffs, dtype=complex)
        n = min(len(coeffs), self.N)
        c[:n] = coeffs[:n]
        return SpectralState(c, self)

    def mode(self, j: int, amplitude: complex = 1.0) -> "SpectralState":
        if not 1 <= j <= self.N:
            raise ConfigurationError(f"mode index {j} outside 1..{self.N}", field="mode")
        c = np.zeros(self.N, dtype=complex)
        c[j - 1] = amplitude
        return SpectralState(c, self)

    def describe(self) -> dict:
        return {"L": self.L, "N": self.N, "G": self.G}


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Complex wave given by its coefficients against ``e~_j``."""

    coeffs: np.ndarray
    space: SpectralSpace = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.space.N,):
            raise ConfigurationError(
                f"coefficient vector has shape {c.shape}, space expects ({self.space.N},)",
                field="coeffs",
            )
        object.__setattr__(self, "coeffs", c)

    def norm(self, which=Norm.L2) -> float:
        return float(self.space.norms(self.coeffs, which))

    def __add__(self, other):
        _same_space(self, other)
        return SpectralState(self.coeffs + other.coeffs, self.space)

    def __sub__(self, other):
        _same_space(self, other)
        return SpectralState(self.coeffs - other.coeffs, self.space)

    def __mul__(self, scalar):
        return SpectralState(self.coeffs * scalar, self.space)

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {"re": self.coeffs.real.tolist(), "im": self.coeffs.imag.tolist()}

    @classmethod
    def from_json(cls, data: dict, space: SpectralSpace) -> "SpectralState":
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data["im"], dtype=float)
        if re.shape != im.shape:
            raise ConfigurationError("'re' and 'im' arrays differ in length", field="coeffs")
        return cls(re + 1j * im, space)


def _same_space(a, b):
    if a.space is not b.space and a.space.describe() != b.space.describe():
        raise ConfigurationError("states belong to different spaces", field="space")


def build_space(L: float, N: int, G: int | None = None) -> SpectralSpace:
    """Build the truncated eigenbasis; ``G`` defaults to ``8 N``."""
    if G is None:
        if int(N) == N and N >= 1:
            G = 8 * int(N)
        else:
            G = 0
    return SpectralSpace(L, N, G)


def norm(x: SpectralState, which=Norm.L2) -> float:
    return x.norm(which)


def project(x: SpectralState, k: int) -> SpectralState:
    """Galerkin projection onto the first ``k`` modes (same in L2 and (H^1_0)*)."""
    if int(k) != k or k < 1:
        raise ConfigurationError(f"projection level must be >= 1, got {k}", field="k")
    c = x.coeffs.copy()
    c[int(k):] = 0.0
    return SpectralState(c, x.space)


def transform(x, direction: str, space: SpectralSpace | None = None):
    """Synthesis/analysis between coefficients and the collocation grid.

    Uses the type-I discrete sine transform; with interior nodes
    ``x_m = m L/(G+1)`` the DST-I is exactly orthogonal, so the round trip is
    the identity up to rounding.
    """
    if direction == "to_grid":
        sp = x.space
        padded = np.zeros(sp.G, dtype=complex)
        padded[: sp.N] = x.coeffs
        return np.sqrt(2.0 / sp.L) * 0.5 * scipy.fft.dst(padded, type=1)
    if direction == "to_coefficients":
        if space is None:
            raise ConfigurationError("to_coefficients needs the target space", field="space")
        values = np.asarray(x, dtype=complex)
        if values.shape != (space.G,):
            raise ConfigurationError(
                f"grid values have shape {values.shape}, space grid has ({space.G},)", field="G"
            )
        full = space.h * np.sqrt(2.0 / space.L) * 0.5 * scipy.fft.dst(values, type=1)
        return SpectralState(full[: space.N], space)
    raise ConfigurationError(f"unknown transform direction {direction!r}", field="direction")


def apply_laplacian(x: SpectralState, power: int) -> SpectralState:
    """``+1``: Dirichlet Laplacian; ``-1``: its inverse, so that the pair composes to identity."""
    lam = x.space.eigenvalues
    if power == 1:
        return SpectralState(-lam * x.coeffs, x.space)
    if power == -1:
        return SpectralState(-x.coeffs / lam, x.space)
    raise ConfigurationError(f"power must be +1 or -1, got {power}", field="power")
