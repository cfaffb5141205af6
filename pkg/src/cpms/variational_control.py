"""Fitzpatrick cost of a (state, control) pair and the solution certificate.

For the deterministic equation ``y' = Delta beta(y) + f(y)`` the control is
``v(t) = int_0^t beta(y)``.  The state constraint
``Delta v = y - y0 - int_0^t f(y)`` then holds and the cost

    J = int_0^T int_O [F_beta(y, dv/dt) - Re <y, dv/dt>] dxi dt

vanishes; away from the solution ``J > 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .complex_monotone import MonotoneMap, fitzpatrick
from .errors import ConfigurationError
from .galerkin_solver import SolverConfig, Trajectory, _Operator, solve_fixed_law
from .mean_field import DriftSpec
from .spectral_space import Norm, SpectralSpace

__all__ = [
    "ControlPath",
    "Certificate",
    "assemble_control",
    "evaluate_cost",
    "certify",
    "state_from_control",
    "J_THRESHOLD",
    "RESIDUAL_THRESHOLD",
]

J_THRESHOLD = 1e-3
RESIDUAL_THRESHOLD = 1e-6
RULES = ("auto", "right", "left", "trapezoid")


@dataclass(eq=False)
class ControlPath:
    times: np.ndarray
    v: np.ndarray        # (S+1, N) coefficients, v[0] = 0
    dv: np.ndarray       # (S+1, N) time derivative at the nodes
    space: SpectralSpace = field(repr=False)
    rule: str = "right"


@dataclass
class Certificate:
    J: float
    J_problem: float
    normalizer: float
    residual: float
    y0_norm: float
    verdict: bool
    unbounded_points: int = 0
    J_threshold: float = J_THRESHOLD
    residual_threshold: float = RESIDUAL_THRESHOLD

    @property
    def ratio(self) -> float:
        if self.normalizer > 0:
            return self.J / self.normalizer
        return 0.0 if self.J == 0 else math.inf

    def to_dict(self) -> dict:
        def num(x):
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")
        return {
            "J": num(float(self.J)),
            "J_problem_form": num(float(self.J_problem)),
            "normalizer": float(self.normalizer),
            "ratio": num(float(self.ratio)),
            "residual": float(self.residual),
            "residual_limit": float(self.residual_threshold * (1.0 + self.y0_norm)),
            "unbounded_points": int(self.unbounded_points),
            "verdict": "pass" if self.verdict else "fail",
        }


def _drift_values(drift, times, Y, N):
    if drift is None:
        return np.zeros((times.size, N), dtype=complex)
    if drift.depends_on_law:
        raise ConfigurationError("the control interpretation needs a law-free drift", field="drift")
    empty = np.zeros((1, N), dtype=complex)
    return np.stack([drift.evaluate(t, Y[s][None, :], empty)[0] for s, t in enumerate(times)])


def _cumulative(values, times, rule):
    dt = np.diff(times)[:, None]
    out = np.zeros_like(values)
    if rule == "right":
        out[1:] = np.cumsum(dt * values[1:], axis=0)
    elif rule == "left":
        out[1:] = np.cumsum(dt * values[:-1], axis=0)
    else:
        out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]), axis=0)
    return out


def _rule_for(trajectory, rule):
    if rule not in RULES:
        raise ConfigurationError(f"rule must be one of {RULES}", field="rule")
    if rule == "auto":
        # the quadrature the time stepper itself uses for the monotone term
        return "right" if trajectory.scheme == "semi_implicit" else "left"
    return rule


def assemble_control(trajectory: Trajectory, beta: MonotoneMap, *, particle: int = 0,
                     rule: str = "auto") -> ControlPath:
    """``v(t_s) = sum of dt * Pi beta(y)`` up to ``t_s`` and its node derivative."""
    if np.any(trajectory.W != 0):
        raise ConfigurationError("control interpretation defined for g=0", field="noise")
    rule = _rule_for(trajectory, rule)
    sp = trajectory.space
    op = _Operator(sp, beta)
    y = trajectory.X[:, particle]
    b = op.apply(y)
    v = _cumulative(b, trajectory.times, rule)
    if trajectory.times.size > 2:
        dv = np.gradient(v, trajectory.times, axis=0, edge_order=2)
    elif trajectory.times.size == 2:
        dv = np.gradient(v, trajectory.times, axis=0)
    else:
        dv = np.zeros_like(v)
    return ControlPath(trajectory.times, v, dv, sp, rule)


def state_from_control(v: np.ndarray, y0: np.ndarray, drift: DriftSpec | None, times,
                       space: SpectralSpace) -> np.ndarray:
    """State obeying the constraint ``y = y0 + Delta v + int f(y)`` (left-point rule)."""
    lam = space.eigenvalues
    y = np.empty_like(v)
    acc = np.zeros(space.N, dtype=complex)
    empty = np.zeros((1, space.N), dtype=complex)
    for s, t in enumerate(times):
        y[s] = y0 - lam * v[s] + acc
        if drift is not None and s + 1 < len(times):
            acc = acc + (times[s + 1] - t) * drift.evaluate(t, y[s][None, :], empty)[0]
    return y


def evaluate_cost(y: np.ndarray, control: ControlPath, beta: MonotoneMap, drift: DriftSpec | None,
                  y0: np.ndarray, *, backend=None, drift_rule: str = "left") -> Certificate:
    """Cost, constraint residual and verdict for a coefficient path ``y`` of shape ``(S+1, N)``."""
    sp = control.space
    times = control.times
    y = np.asarray(y, dtype=complex)
    y0 = np.asarray(y0, dtype=complex)
    if y.shape != control.v.shape:
        raise ConfigurationError(f"state path {y.shape} and control {control.v.shape} differ",
                                 field="y")
    S_mat = sp.synthesis
    h = sp.h
    yg = y @ S_mat.T
    dvg = control.dv @ S_mat.T
    vals, _, status = fitzpatrick(beta, yg.ravel(), dvg.ravel(), backend=backend)
    vals = vals.reshape(yg.shape)
    unbounded = int(np.count_nonzero(status == 1))
    pair = (yg.conj() * dvg).real
    if unbounded:
        J = math.inf
        Fint = math.inf
    else:
        integrand = h * np.sum(vals - pair, axis=1)
        J = float(trapezoid(integrand, times)) if times.size > 1 else 0.0
        Fint = float(trapezoid(h * np.sum(vals, axis=1), times)) if times.size > 1 else 0.0

    fvals = _drift_values(drift, times, y, sp.N)
    int_f = _cumulative(fvals, times, drift_rule)
    lam = sp.eigenvalues
    constraint = -lam * control.v - y + y0 + int_f
    residual = float(np.max(sp.norms(constraint, Norm.HminusOne)))

    # problem form: the same cost rewritten by integration by parts
    if math.isfinite(Fint) and times.size > 1:
        vf = trapezoid(np.sum((control.v.conj() * fvals).real, axis=1), times)
        vT = control.v[-1]
        J_problem = (Fint + float(vf) + 0.5 * float(np.sum(lam * np.abs(vT) ** 2))
                     - float(np.sum((vT.conj() * (y0 + int_f[-1])).real)))
    else:
        J_problem = Fint

    normalizer = 0.0
    if times.size > 1:
        normalizer = float(trapezoid(sp.norms(y, Norm.L2) ** 2 + sp.norms(control.dv, Norm.L2) ** 2,
                                     times))
    y0_norm = float(sp.norms(y0, Norm.HminusOne))
    cert = Certificate(J, J_problem, normalizer, residual, y0_norm, False, unbounded)
    cert.verdict = bool(math.isfinite(J) and cert.ratio < J_THRESHOLD
                        and residual < RESIDUAL_THRESHOLD * (1.0 + y0_norm))
    return cert


def certify(X0, beta: MonotoneMap, drift: DriftSpec | None, config: SolverConfig, *,
            space: SpectralSpace | None = None, rule: str = "auto", backend=None):
    """Solve the deterministic problem and certify the result.

    Returns ``(certificate, trajectory, control)``.
    """
    if drift is not None and drift.depends_on_law:
        raise ConfigurationError("certify needs a law-free drift", field="drift")
    traj = solve_fixed_law(X0, beta, drift, None, None, config, space=space)
    control = assemble_control(traj, beta, rule=rule)
    cert = evaluate_cost(traj.X[:, 0], control, beta, drift, traj.X[0, 0], backend=backend)
    return cert, traj, control
