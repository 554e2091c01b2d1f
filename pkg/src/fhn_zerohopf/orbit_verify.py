"""Direct verification of periodic orbits: integration, return maps, shooting.

States are integrated as deviations from an optional ``center`` (usually the
equilibrium the orbit surrounds); small orbits then keep full relative
accuracy under the adaptive error control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import MaxTimeExceeded, NoReturn, ShootingDiverged, StepSizeUnderflow, TangentialCrossing
from .fhn_core import Params, State, divergence, jacobian, vector_field

METHOD = "DOP853"
TRIVIAL_TOL = 1e-4
MARGINAL_TOL = 1e-6
PERIOD_WINDOW = (0.5, 2.0)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    max_time: float = 1e5

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")


@dataclass(frozen=True)
class PoincareSection:
    anchor: State
    normal: tuple
    direction: int = 1

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise ValueError("section normal must be nonzero")
        object.__setattr__(self, "normal", tuple(n / norm))
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")

    @classmethod
    def through(cls, p: Params, point) -> "PoincareSection":
        """Plane through ``point`` with normal along the flow there."""
        return cls(State(*map(float, point)), tuple(vector_field(p, point)), 1)

    def value(self, x) -> float:
        return float(np.dot(self.normal, np.asarray(x) - np.asarray(self.anchor)))


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # (3, len(t)) absolute coordinates
    center: np.ndarray
    dense: object = field(repr=False)
    nfev: int = 0

    def __call__(self, t):
        return self.center[:, None] * np.ones_like(np.atleast_1d(t)) + self.dense(t) if np.ndim(t) \
            else self.center + self.dense(t)


@dataclass(frozen=True)
class PeriodicOrbit:
    initial: State
    period: float
    residual: float
    floquet: tuple
    stability: str
    monodromy: np.ndarray = field(repr=False)
    iterations: int = 0
    trivial_defect: float = math.nan
    abel_defect: float = math.nan

    def as_dict(self) -> dict:
        return {
            "initial": list(self.initial),
            "period": self.period,
            "residual": self.residual,
            "floquet": [[complex(m).real, complex(m).imag] for m in self.floquet],
            "stability": self.stability,
            "iterations": self.iterations,
            "trivial_defect": self.trivial_defect,
            "abel_defect": self.abel_defect,
        }


def _rhs(p: Params, center):
    a, b, c, d = p.a, p.b, p.c, p.d

    def f(t, u):
        x, y, z = center[0] + u[0], center[1] + u[1], center[2] + u[2]
        return [z, b * (x - d * y), x * (x - 1.0) * (x - a) + y + c * z]

    return f


def _rhs_var(p: Params, center):
    base = _rhs(p, center)

    def f(t, u):
        J = jacobian(p, center + u[:3])
        Phi = u[3:].reshape(3, 3)
        return np.concatenate([base(t, u[:3]), (J @ Phi).ravel()])

    return f


def _solve(fun, t_span, u0, cfg: IntegratorConfig, **kw):
    t0, t1 = t_span
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    if t1 - t0 > cfg.max_time:
        raise MaxTimeExceeded(f"requested span {t1 - t0:.3g} exceeds max_time {cfg.max_time:.3g}")
    sol = solve_ivp(fun, t_span, u0, method=METHOD, rtol=cfg.rel_tol, atol=cfg.abs_tol,
                    max_step=cfg.max_step, **kw)
    if sol.status == -1:
        raise StepSizeUnderflow(sol.message)
    return sol


def _center(center) -> np.ndarray:
    return np.zeros(3) if center is None else np.asarray(center, dtype=float)


def integrate(p: Params, s0, t_span, cfg: IntegratorConfig = IntegratorConfig(), center=None) -> Trajectory:
    """Adaptive integration with dense output."""
    c0 = _center(center)
    sol = _solve(_rhs(p, c0), t_span, np.asarray(s0, dtype=float) - c0, cfg, dense_output=True)
    return Trajectory(sol.t, sol.y + c0[:, None], c0, sol.sol, sol.nfev)


def flow(p: Params, s0, T: float, cfg: IntegratorConfig = IntegratorConfig(), center=None,
         variational: bool = False):
    """phi_T(s0), and the flow Jacobian when ``variational`` is set."""
    c0 = _center(center)
    u0 = np.asarray(s0, dtype=float) - c0
    if not variational:
        sol = _solve(_rhs(p, c0), (0.0, T), u0, cfg)
        return c0 + sol.y[:, -1]
    sol = _solve(_rhs_var(p, c0), (0.0, T), np.concatenate([u0, np.eye(3).ravel()]), cfg)
    return c0 + sol.y[:3, -1], sol.y[3:, -1].reshape(3, 3)


def poincare_map(p: Params, sec: PoincareSection, s0, cfg: IntegratorConfig = IntegratorConfig(),
                 t_min: float = 0.1, center=None):
    """First oriented return to ``sec`` after time ``t_min``; returns (State, time)."""
    c0 = _center(center)
    n = np.asarray(sec.normal)
    off = float(np.dot(n, np.asarray(sec.anchor) - c0))
    fun = _rhs(p, c0)
    u = np.asarray(s0, dtype=float) - c0
    t = 0.0
    if t_min > 0:
        u = _solve(fun, (0.0, t_min), u, cfg).y[:, -1]
        t = t_min

    def event(_, v):
        return float(np.dot(n, v)) - off

    event.terminal = True
    event.direction = sec.direction
    # the event root is located by the solver's bracketing on the dense output
    sol = _solve(fun, (t, cfg.max_time), u, cfg, events=event)
    if sol.t_events[0].size == 0:
        raise NoReturn(f"no return to the section within t = {cfg.max_time:.3g}")
    hit = c0 + sol.y_events[0][0]
    th = float(sol.t_events[0][0])
    speed = float(np.dot(n, vector_field(p, hit)))
    if abs(speed) <= 1e-8:
        raise TangentialCrossing(f"flow tangent to the section at the return (<f, n> = {speed:.2e})")
    return State(*hit), th


def classify_multipliers(mults, trivial_tol: float = TRIVIAL_TOL, marginal_tol: float = MARGINAL_TOL) -> str:
    """Stability from |mu| against 1, the multiplier closest to 1 excluded."""
    m = np.asarray(mults, dtype=complex)
    k = int(np.argmin(np.abs(m - 1.0)))
    rest = np.abs(np.delete(m, k))
    if np.any(np.abs(rest - 1.0) <= marginal_tol):
        return "marginal"
    if np.all(rest < 1.0):
        return "attracting"
    if np.all(rest > 1.0):
        return "repelling"
    return "saddle-like"


def _sort_mults(m):
    return tuple(sorted((complex(z) for z in m), key=lambda z: (round(z.real, 12), z.imag)))


def refine_periodic(p: Params, guess, T_guess: float, cfg: IntegratorConfig = IntegratorConfig(),
                    tol: float = 1e-9, max_iter: int = 30, center=None) -> PeriodicOrbit:
    """Newton shooting for (s, T) with the phase condition <s - guess, f(guess)> = 0."""
    g = np.asarray(guess, dtype=float)
    fg = np.asarray(vector_field(p, g), dtype=float)
    s, T = g.copy(), float(T_guess)
    T_lo, T_hi = PERIOD_WINDOW[0] * T, PERIOD_WINDOW[1] * T

    def residual(s_, T_):
        end, M = flow(p, s_, T_, cfg, center, variational=True)
        return np.concatenate([end - s_, [np.dot(s_ - g, fg)]]), end, M

    R, end, M = residual(s, T)
    norm = np.linalg.norm(R)
    it = 0
    while norm >= tol:
        if it >= max_iter:
            raise ShootingDiverged(f"no convergence in {max_iter} Newton steps", norm, it)
        A = np.zeros((4, 4))
        A[:3, :3] = M - np.eye(3)
        A[:3, 3] = vector_field(p, end)
        A[3, :3] = fg
        try:
            step = np.linalg.solve(A, -R)
        except np.linalg.LinAlgError as exc:
            raise ShootingDiverged(f"singular shooting Jacobian: {exc}", norm, it) from exc
        lam, accepted = 1.0, False
        for _ in range(12):
            s_new, T_new = s + lam * step[:3], T + lam * step[3]
            # a collapsing or runaway period is not the sought orbit
            if T_lo < T_new < T_hi:
                try:
                    R_new, end_new, M_new = residual(s_new, T_new)
                except (StepSizeUnderflow, MaxTimeExceeded):
                    R_new = None
                if R_new is not None and np.linalg.norm(R_new) < norm:
                    accepted = True
                    break
            lam *= 0.5
        it += 1
        if not accepted:
            raise ShootingDiverged("residual stagnated under damped Newton", norm, it)
        s, T, R, end, M = s_new, T_new, R_new, end_new, M_new
        norm = float(np.linalg.norm(R))
    mults = _sort_mults(np.linalg.eigvals(M))
    trivial = float(np.min(np.abs(np.asarray(mults) - 1.0)))
    expected = math.exp(divergence(p) * T)
    abel = abs(np.linalg.det(M) - expected) / max(1.0, expected)
    return PeriodicOrbit(State(*map(float, s)), T, float(np.linalg.norm(end - s)), mults,
                         classify_multipliers(mults), M, it, trivial, float(abel))


def floquet_multipliers(orbit: PeriodicOrbit) -> tuple:
    """Sorted eigenvalues of the monodromy matrix."""
    return _sort_mults(np.linalg.eigvals(orbit.monodromy))
