"""Perturbation families at the zero-Hopf points and their averaged forms.

Each family is reduced to a 2*pi-periodic system in (r, w) with the
polar angle as time.  The reduction is composed from exact pieces
(parameter substitution, translation to the equilibrium, rescaling by
eps, a linear change bringing the linear part to real Jordan form,
cylindrical coordinates, division by the angular velocity) carried out
in truncated power series in eps, so the order-eps and order-eps^2
fields come out without hand-expanded formulas.  Closed forms are kept
alongside as cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from . import averaging as avg
from .errors import DegenerateFamily, DomainError, FirstOrderNotZero
from .fhn_core import Params, State, vector_field
from .series import Series

SERIES_ORDER = 2
R_BOX = (1e-3, 10.0)


# ---------------------------------------------------------------- families


@dataclass(frozen=True)
class PerturbationT1:
    """Unfolding of the origin family with ad + 1 = 0, c = bd."""

    d: float
    omega: float
    alpha: float
    beta1: float
    gamma: float
    eps: float = 0.0

    def __post_init__(self):
        if self.d == 0 or self.d == 1:
            raise DomainError("d must differ from 0 and 1", [("d != 0,1", self.d, False)])
        if not self.omega > 0:
            raise DomainError("omega must be positive", [("omega > 0", self.omega, False)])
        gap = 1.0 / self.d - self.omega**2
        if not gap > 0:
            raise DomainError("need 1/d - omega^2 > 0", [("1/d - omega^2 > 0", gap, False)])

    @property
    def root(self) -> float:
        """sqrt(1/d - omega^2)."""
        return math.sqrt(1.0 / self.d - self.omega**2)

    @property
    def beta0(self) -> float:
        return self.root / self.d

    def coefficients(self):
        """(a, b, c) as polynomial coefficient lists in eps."""
        return ([-1.0 / self.d, self.alpha], [self.beta0, self.beta1], [self.beta0 * self.d, self.gamma])

    def params(self, eps: Optional[float] = None) -> Params:
        e = self.eps if eps is None else eps
        a, b, c = (np.polyval(cs[::-1], e) for cs in self.coefficients())
        return Params(float(a), float(b), float(c), self.d)


@dataclass(frozen=True)
class PerturbationT2:
    """Second-order unfolding of the origin family with b = c = 0, a = -omega^2."""

    omega: float
    alpha1: float
    gamma1: float
    alpha2: float = 0.0
    beta2: float = 0.0
    gamma2: float = 0.0
    eps: float = 0.0
    beta1: Optional[float] = None
    d: Optional[float] = None

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError("omega must be positive", [("omega > 0", self.omega, False)])
        if self.beta1 is None:
            object.__setattr__(self, "beta1", self.gamma1 * self.omega**2)
        if self.d is None:
            object.__setattr__(self, "d", 1.0 / self.omega**2)

    def coefficients(self):
        return ([-self.omega**2, self.alpha1, self.alpha2], [0.0, self.beta1, self.beta2],
                [0.0, self.gamma1, self.gamma2])

    def params(self, eps: Optional[float] = None) -> Params:
        e = self.eps if eps is None else eps
        a, b, c = (np.polyval(cs[::-1], e) for cs in self.coefficients())
        return Params(float(a), float(b), float(c), self.d)

    @property
    def discriminant(self) -> float:
        return self.alpha1**2 * self.gamma1**2 - (self.gamma2 * self.omega**2 - self.beta2) ** 2


T3_INTERVAL = (-1.0, (math.sqrt(5.0) - 3.0) / 2.0)
T4_INTERVAL = (-(math.sqrt(5.0) + 3.0) / 2.0, -1.0)


@dataclass(frozen=True)
class PerturbationT34:
    """Second-order unfolding at P+ (sign='plus') or P- (sign='minus').

    ``d = -1/alpha0`` and, unless given, ``gamma1 = -beta1/alpha0``.
    """

    alpha0: float
    alpha1: float
    beta1: float
    beta2: float
    gamma2: float
    alpha2: float = 0.0
    gamma1: Optional[float] = None
    eps: float = 0.0
    sign: str = "plus"
    d: Optional[float] = None

    def __post_init__(self):
        if self.sign not in ("plus", "minus"):
            raise ValueError(f"sign must be 'plus' or 'minus', got {self.sign!r}")
        if self.alpha0 == 0:
            raise DomainError("alpha0 must be nonzero", [("alpha0 != 0", 0.0, False)])
        if self.d is None:
            object.__setattr__(self, "d", -1.0 / self.alpha0)
        if self.gamma1 is None:
            object.__setattr__(self, "gamma1", -self.beta1 / self.alpha0)

    @property
    def theorem(self) -> str:
        return "t3" if self.sign == "plus" else "t4"

    def conditions(self) -> list:
        lo, hi = T3_INTERVAL if self.sign == "plus" else T4_INTERVAL
        a0 = self.alpha0
        q = 2 * a0**2 + 6 * a0 + 1
        return [
            ("alpha0 in interval", a0, lo < a0 < hi),
            ("2 alpha0^2 + 6 alpha0 + 1 < 0", q, q < 0),
            ("d alpha0 + 1 = 0", self.d * a0 + 1.0, abs(self.d * a0 + 1.0) <= 1e-12),
            ("alpha0 gamma1 + beta1 = 0", a0 * self.gamma1 + self.beta1,
             abs(a0 * self.gamma1 + self.beta1) <= 1e-12 * (1 + abs(self.beta1))),
        ]

    def coefficients(self):
        return ([self.alpha0, self.alpha1, self.alpha2], [0.0, self.beta1, self.beta2],
                [0.0, self.gamma1, self.gamma2])

    def params(self, eps: Optional[float] = None) -> Params:
        e = self.eps if eps is None else eps
        a, b, c = (np.polyval(cs[::-1], e) for cs in self.coefficients())
        return Params(float(a), float(b), float(c), self.d)


# --------------------------------------------------------- reduced systems


@dataclass(frozen=True)
class ReducedSystem:
    """Averaging-ready (r, w) system with the polar angle as time."""

    system: avg.PeriodicSystem
    theorem: str
    P: np.ndarray
    eps: float
    omega: float
    family: object
    series_field: Callable = field(repr=False)
    full_field: Callable = field(repr=False)
    equilibrium: Callable = field(repr=False)
    sigma: Optional[float] = None
    aux: dict = field(default_factory=dict)

    def to_original(self, theta, r, w, eps: Optional[float] = None) -> np.ndarray:
        """Map (theta, r, w) back to (x, y, z) at the given eps."""
        e = self.eps if eps is None else eps
        U = np.array([r * np.cos(theta), r * np.sin(theta), w])
        return np.asarray(self.equilibrium(e))[:, None] * np.ones_like(U[:1]) + e * (self.P @ U) \
            if U.ndim > 1 else np.asarray(self.equilibrium(e)) + e * (self.P @ U)

    def period_estimate(self, r: float, w: float, eps: Optional[float] = None, nodes: int = 2048) -> float:
        """Time to traverse the circle (r, w) at fixed eps: integral of dtheta / thetadot."""
        e = self.eps if eps is None else eps
        if e == 0:
            return 2.0 * math.pi / self.omega
        th = np.linspace(0.0, 2.0 * math.pi, nodes + 1)
        X = self.to_original(th, r * np.ones_like(th), w * np.ones_like(th), e)
        U = np.linalg.solve(self.P, vector_field(self.family.params(e), X)) / e
        thdot = (U[1] * np.cos(th) - U[0] * np.sin(th)) / r
        if np.any(thdot <= 0):
            return 2.0 * math.pi / self.omega
        return float(simpson(1.0 / thdot, x=th))

    def from_original(self, xyz, eps: Optional[float] = None):
        """Inverse of :meth:`to_original`; returns (theta, r, w)."""
        e = self.eps if eps is None else eps
        xyz = np.asarray(xyz, dtype=float)
        eq = np.asarray(self.equilibrium(e))
        U = np.linalg.solve(self.P, ((xyz.T - eq) / e).T)
        return np.arctan2(U[1], U[0]), np.hypot(U[0], U[1]), U[2]


def _fhn(a, b, c, d, x, y, z):
    return [z, b * (x - d * y), x * (x - 1.0) * (x - a) + y + c * z]


def _make_fields(coeffs, d, P, eq_series, order=SERIES_ORDER):
    """Build the series field and the exact field of the (r, w) system.

    ``coeffs`` holds (a, b, c) coefficient lists in eps; ``eq_series(K)``
    returns the equilibrium coordinates as Series of order K.
    """
    K = order + 1
    a_s, b_s, c_s = (Series.polynomial(cs, K) for cs in coeffs)
    Pinv = np.linalg.inv(P)
    eq = eq_series(K)

    def series_field(theta, r, w):
        ct, st = np.cos(theta), np.sin(theta)
        U = (r * ct, r * st, w + 0.0 * theta)
        X = []
        for i in range(3):
            lin = P[i, 0] * U[0] + P[i, 1] * U[1] + P[i, 2] * U[2]
            X.append(eq[i] + Series.polynomial([0.0, 1.0], K) * lin)
        f = _fhn(a_s, b_s, c_s, d, *X)
        lead = max(float(np.max(np.abs(fi.c[0]))) for fi in f)
        if lead > 1e-9:
            raise DomainError(f"base point is not an equilibrium (|f| = {lead:.2e})")
        fd = [fi.shift_down() for fi in f]
        Ud = [fd[0] * Pinv[i, 0] + fd[1] * Pinv[i, 1] + fd[2] * Pinv[i, 2] for i in range(3)]
        rdot = Ud[0] * ct + Ud[1] * st
        thdot = (Ud[1] * ct - Ud[0] * st) / r
        return rdot / thdot, Ud[2] / thdot

    def full_field(theta, r, w, eps):
        """Exact dr/dtheta, dw/dtheta at a finite eps."""
        a, b, c = (float(np.polyval(cs[::-1], eps)) for cs in coeffs)
        e0 = np.asarray([s(eps) for s in eq], dtype=float)
        U = np.array([r * np.cos(theta), r * np.sin(theta), w])
        X = e0 + eps * (P @ U)
        f = np.array(_fhn(a, b, c, d, *X))
        Ud = Pinv @ f / eps
        rdot = Ud[0] * np.cos(theta) + Ud[1] * np.sin(theta)
        thdot = (Ud[1] * np.cos(theta) - Ud[0] * np.sin(theta)) / r
        return np.array([rdot / thdot, Ud[2] / thdot])

    def equilibrium(eps):
        return State(*(float(s(eps)) for s in eq))

    return series_field, full_field, equilibrium


def _periodic_system(series_field) -> avg.PeriodicSystem:
    def coeff(k):
        def fun(t, z):
            # r = 0 is the polar singularity; callers see the resulting nan
            with np.errstate(divide="ignore", invalid="ignore"):
                dr, dw = series_field(t, z[0], z[1])
            return [dr.c[k].real, dw.c[k].real]
        return fun

    def jac(t, z):
        # complex-step derivative of the order-eps field
        h = 1e-30
        rows = [[None, None], [None, None]]
        for j in range(2):
            zz = [np.asarray(z[0], dtype=complex), np.asarray(z[1], dtype=complex)]
            zz[j] = zz[j] + 1j * h
            with np.errstate(divide="ignore", invalid="ignore"):
                dr, dw = series_field(t, zz[0], zz[1])
            rows[0][j] = dr.c[1].imag / h
            rows[1][j] = dw.c[1].imag / h
        return rows

    return avg.PeriodicSystem(dim=2, period=2.0 * math.pi, F=coeff(1), G=coeff(2), DxF=jac, names=("r", "w"))


def _origin_series(K):
    return [Series.constant(0.0, K) for _ in range(3)]


def t1_matrix(omega: float, d: float) -> np.ndarray:
    s = math.sqrt(1.0 / d - omega**2)
    w2 = omega**2
    return np.array([
        [-1.0 / w2, 0.0, s / w2],
        [1.0 - 1.0 / (d * w2), -s / omega, s / (d * w2)],
        [0.0, 1.0 / omega, 0.0],
    ])


def t2_matrix(omega: float) -> np.ndarray:
    return np.array([[0.0, 1.0 / omega, 1.0 / omega**2], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


def t34_matrix(sigma: float, d: float) -> np.ndarray:
    return np.array([[0.0, 1.0, 2.0 * d / sigma], [0.0, 0.0, 1.0], [math.sqrt(sigma / (2.0 * d)), 0.0, 0.0]])


def build_reduced_t1(p: PerturbationT1) -> ReducedSystem:
    P = t1_matrix(p.omega, p.d)
    sf, ff, eq = _make_fields(p.coefficients(), p.d, P, _origin_series)
    return ReducedSystem(_periodic_system(sf), "t1", P, p.eps, p.omega, p, sf, ff, eq)


def build_reduced_t2(p: PerturbationT2) -> ReducedSystem:
    P = t2_matrix(p.omega)
    sf, ff, eq = _make_fields(p.coefficients(), p.d, P, _origin_series)
    return ReducedSystem(_periodic_system(sf), "t2", P, p.eps, p.omega, p, sf, ff, eq)


def t34_sigma(alpha0: float, d: float, sign: str) -> float:
    s = 1.0 if sign == "plus" else -1.0
    inner = d * (d * (alpha0 - 1.0) ** 2 - 4.0)
    if inner < 0:
        raise DomainError("P+/P- do not exist for these parameters", [("d[d(a0-1)^2-4] >= 0", inner, False)])
    return 6.0 - d * (alpha0 - 1.0) ** 2 - s * (alpha0 + 1.0) * math.sqrt(inner)


def build_reduced_t34(p: PerturbationT34) -> ReducedSystem:
    d, a0 = p.d, p.alpha0
    if not d > 0:
        raise DomainError("d must be positive", [("d > 0", d, False)])
    if abs(d * (a0 - 1.0) ** 2 - 4.0) <= 1e-12 and abs(d * a0 + 1.0) > 1e-12:
        raise DomainError("branch d = 4/(alpha0-1)^2 makes the reduced field singular",
                          [("d != 4/(alpha0-1)^2", d * (a0 - 1.0) ** 2 - 4.0, False)])
    sigma = t34_sigma(a0, d, p.sign)
    if not sigma > 0:
        raise DomainError("sigma must be positive", [("sigma > 0", sigma, False)])
    omega = math.sqrt(sigma / (2.0 * d))
    P = t34_matrix(sigma, d)
    s = 1.0 if p.sign == "plus" else -1.0
    coeffs = p.coefficients()

    def eq_series(K):
        a = Series.polynomial(coeffs[0], K)
        x = (a + 1.0) * 0.5 + ((a - 1.0) ** 2 - 4.0 / d).sqrt() * (0.5 * s)
        return [x, x / d, Series.constant(0.0, K)]

    sf, ff, eq = _make_fields(coeffs, d, P, eq_series)
    return ReducedSystem(_periodic_system(sf), p.theorem, P, p.eps, omega, p, sf, ff, eq, sigma=sigma)


# ------------------------------------------------------------ predictions


@dataclass
class OrbitPrediction:
    theorem: str
    rw_star: tuple
    conditions: list
    jac_det_value: float
    initial_condition: State
    approx_period: float
    stability: str
    eps: float
    omega: float
    equilibrium: State
    params: Params
    gamma_aux: Optional[float] = None
    order: str = "first"
    jac_eigenvalues: tuple = ()
    quadrature_rw: Optional[tuple] = None
    cross_check: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "order": self.order,
            "eps": self.eps,
            "omega": self.omega,
            "rw_star": list(self.rw_star),
            "quadrature_rw": None if self.quadrature_rw is None else list(self.quadrature_rw),
            "conditions": [{"name": n, "value": v, "satisfied": bool(s)} for n, v, s in self.conditions],
            "jac_det_value": self.jac_det_value,
            "jac_eigenvalues": [[complex(e).real, complex(e).imag] for e in self.jac_eigenvalues],
            "stability": self.stability,
            "gamma_aux": self.gamma_aux,
            "initial_condition": list(self.initial_condition),
            "equilibrium": list(self.equilibrium),
            "approx_period": self.approx_period,
            "params": self.params.as_dict(),
            "cross_check": dict(self.cross_check),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OrbitPrediction":
        return cls(
            theorem=data["theorem"],
            rw_star=tuple(data["rw_star"]),
            conditions=[(c["name"], c["value"], c["satisfied"]) for c in data["conditions"]],
            jac_det_value=data["jac_det_value"],
            initial_condition=State(*data["initial_condition"]),
            approx_period=data["approx_period"],
            stability=data["stability"],
            eps=data["eps"],
            omega=data["omega"],
            equilibrium=State(*data["equilibrium"]),
            params=Params(**data["params"]),
            gamma_aux=data.get("gamma_aux"),
            order=data.get("order", "first"),
            jac_eigenvalues=tuple(complex(re, im) for re, im in data.get("jac_eigenvalues", [])),
            quadrature_rw=None if data.get("quadrature_rw") is None else tuple(data["quadrature_rw"]),
            cross_check=dict(data.get("cross_check", {})),
        )


def embed_prediction(red: ReducedSystem, rw) -> State:
    """Initial condition in (x, y, z) at theta = 0 for an averaged zero."""
    r, w = rw
    eq = np.asarray(red.equilibrium(red.eps))
    return State(*(eq + red.eps * (red.P @ np.array([r, 0.0, w]))))


def _quadrature_zero(red, seed, order, nodes):
    fun = avg.averaged_function(red.system, order, nodes)
    z, res, ok = avg.newton(fun, np.asarray(seed, dtype=float))
    J = avg.fd_jacobian(fun, z)
    return z, res, ok, J


def averaged_f_t1(p: PerturbationT1, r0, w0):
    """Closed forms of the first-order averaged function.

    These correspond to c = b d + eps*gamma; under the parametrization
    c = beta0 d + eps*gamma they are exact only when beta1 = 0 (f1 is
    then short by -beta1 d r0 / (2 omega)).
    """
    d, om, al, ga = p.d, p.omega, p.alpha, p.gamma
    s = p.root
    f1 = r0 / (2 * d**2 * om**5) * (d**2 * (ga * om**4 - al * om**2 * s) + 2 * w0 * (d - 1) * (1 - d * om**2))
    f2 = (d**2 * (2 * om**2 * (al * s + w0) * w0 - r0**2) + d * (r0**2 - 2 * (om**2 + 1) * w0**2)
          + 2 * w0**2) / (2 * d**2 * om**5)
    return f1, f2


def t1_gamma(p: PerturbationT1, gamma: Optional[float] = None) -> float:
    d, om, al = p.d, p.omega, p.alpha
    ga = p.gamma if gamma is None else gamma
    gap = om**2 - 1.0 / d
    return (ga**2 * om**4 + al**2 * gap) / gap


def predict_orbits_t1(p: PerturbationT1, nodes: int = avg.DEFAULT_NODES) -> list:
    """At most one periodic orbit born at the origin (first-order averaging)."""
    d, om, al = p.d, p.omega, p.alpha
    s = p.root
    # closed forms hold for c = b d + eps*gamma'; here gamma' = gamma - beta1 d
    ga = p.gamma - p.beta1 * d
    Gam = t1_gamma(p, ga)
    beta0 = p.beta0
    stmt = beta0**2 * d**4 * al**2 - (1 - beta0**2 * d**3) ** 2 * p.gamma**2
    conds = [
        ("d(1 - beta0^2 d^3) > 0", d * (1 - beta0**2 * d**3), d * (1 - beta0**2 * d**3) > 0),
        ("Gamma > 0", Gam, Gam > 0),
        ("beta0^2 d^4 alpha^2 - (1 - beta0^2 d^3)^2 gamma^2 > 0", stmt, stmt > 0),
        ("d != 0, 1", d, d not in (0.0, 1.0)),
    ]
    if not Gam > 0:
        return []
    # f1 = f2 = 0 is solved by sqrt(Gamma/2); the uncorrected r* with
    # sqrt(Gamma) is not a zero of f2 and is kept only for comparison
    cross_check = {"r_star": abs(d * om**2 / (1 - d)) * math.sqrt(Gam),
               "jac_det": d / om**6 * (1 / d - om**2) * Gam}
    r_star = abs(d * om**2 / (1 - d)) * math.sqrt(Gam / 2)
    w_star = d**2 * om**2 * (ga * om**2 - al * s) / (2 * (d - 1) * (d * om**2 - 1))
    conds.append(("r* > 0", r_star, r_star > 0))
    jdet = (1 / d - om**2) * Gam / (2 * om**6)
    red = build_reduced_t1(p)
    z, res, ok, J = _quadrature_zero(red, (r_star, w_star), "first", nodes)
    eigs = np.linalg.eigvals(J)
    conds.append(("quadrature zero converged", res, bool(ok)))
    pred = OrbitPrediction(
        theorem="t1", rw_star=(r_star, w_star), conditions=conds, jac_det_value=jdet,
        initial_condition=embed_prediction(red, (r_star, w_star)), approx_period=red.period_estimate(r_star, w_star),
        stability=avg.stability_of_eigenvalues(eigs, eps_sign=np.sign(p.eps) or 1.0),
        eps=p.eps, omega=om, equilibrium=red.equilibrium(p.eps), params=p.params(),
        gamma_aux=Gam, order="first", jac_eigenvalues=tuple(eigs), quadrature_rw=tuple(z), cross_check=cross_check)
    return [pred]


def averaged_g_t2(p: PerturbationT2, r0, w0):
    """Closed forms of the second-order averaged function."""
    om, a1, g1, b2, g2 = p.omega, p.alpha1, p.gamma1, p.beta2, p.gamma2
    G1 = r0 / (2 * om**5) * (g2 * om**4 - om**2 * (b2 + g1 * (a1 + 2 * w0)) + 2 * g1 * w0)
    G2 = g1 / (2 * om**5) * (r0**2 * om**2 * (om**2 - 1) + 2 * w0**2 * (om**2 - 1) + 2 * a1 * om**2 * w0)
    return G1, G2


def _t2_first_order_conditions(p: PerturbationT2):
    return [
        ("beta1 - gamma1 omega^2 = 0", p.beta1 - p.gamma1 * p.omega**2,
         abs(p.beta1 - p.gamma1 * p.omega**2) <= 1e-12 * (1 + abs(p.beta1))),
        ("d omega^2 - 1 = 0", p.d * p.omega**2 - 1, abs(p.d * p.omega**2 - 1) <= 1e-12),
    ]


def predict_orbits_t2(p: PerturbationT2, nodes: int = avg.DEFAULT_NODES) -> list:
    """At most one periodic orbit born at the origin (second-order averaging)."""
    om, a1, g1, b2, g2 = p.omega, p.alpha1, p.gamma1, p.beta2, p.gamma2
    conds = _t2_first_order_conditions(p)
    if not all(c[2] for c in conds):
        raise FirstOrderNotZero("second-order averaging needs beta1 = gamma1 omega^2 and d = 1/omega^2", conds)
    degenerate = [("gamma1 != 0", g1, g1 != 0), ("omega != 1", om, om != 1)]
    if not all(c[2] for c in degenerate):
        raise DegenerateFamily("gamma1 = 0 or omega = 1", conds + degenerate)
    disc = p.discriminant
    conds += degenerate + [("alpha1^2 gamma1^2 - (gamma2 omega^2 - beta2)^2 > 0", disc, disc > 0)]
    if not disc > 0:
        return []
    r_star = om / (math.sqrt(2) * abs(g1) * abs(om**2 - 1)) * math.sqrt(disc)
    w_star = -(om**2) * (a1 * g1 + b2 - g2 * om**2) / (2 * g1 * (om**2 - 1))
    red = build_reduced_t2(p)
    z, res, ok, J = _quadrature_zero(red, (r_star, w_star), "second", nodes)
    eigs = np.linalg.eigvals(J)
    conds.append(("quadrature zero converged", res, bool(ok)))
    return [OrbitPrediction(
        theorem="t2", rw_star=(r_star, w_star), conditions=conds, jac_det_value=disc / (2 * om**6),
        initial_condition=embed_prediction(red, (r_star, w_star)), approx_period=red.period_estimate(r_star, w_star),
        stability=avg.stability_of_eigenvalues(eigs), eps=p.eps, omega=om,
        equilibrium=red.equilibrium(p.eps), params=p.params(), order="second",
        jac_eigenvalues=tuple(eigs), quadrature_rw=tuple(z), cross_check={"jac_det": disc / om**6})]


# ------------------------------------------------------ families t3/t4 (P+/P-)

# monomials r^i w^j of the polynomial surrogate; 1/r terms are included so
# that their absence is checked rather than assumed
_MONOMIALS = [(-1, j) for j in range(5)] + [(i, j) for i in range(4) for j in range(4 - i)]
_FIT_SCALE = (5.0, 5.0)


def _fit_points(n, rng, r_lo, r_hi, w_hi):
    r = rng.uniform(r_lo, r_hi, n)
    w = rng.uniform(-w_hi, w_hi, n)
    return np.vstack([r, w])


def _design(pts):
    r, w = pts[0] / _FIT_SCALE[0], pts[1] / _FIT_SCALE[1]
    return np.stack([r**i * w**j for i, j in _MONOMIALS], axis=1)


@dataclass
class PolySurrogate:
    """Exact polynomial representation of a 2-component averaged function."""

    coeffs: np.ndarray  # (2, n_monomials) in unscaled variables
    fit_residual: float
    check_residual: float

    def __call__(self, r, w):
        r = np.asarray(r, dtype=float)
        w = np.asarray(w, dtype=float)
        out = [np.zeros(np.broadcast(r, w).shape), np.zeros(np.broadcast(r, w).shape)]
        for k, (i, j) in enumerate(_MONOMIALS):
            term = r**i * w**j
            out[0] = out[0] + self.coeffs[0, k] * term
            out[1] = out[1] + self.coeffs[1, k] * term
        return out

    def in_r(self, comp: int, tol: float = 1e-10) -> dict:
        """{power of r: polynomial in w (numpy Polynomial)}, negligible terms dropped."""
        from numpy.polynomial import Polynomial
        scale = max(1.0, float(np.max(np.abs(self.coeffs[comp]))))
        out: dict = {}
        for k, (i, j) in enumerate(_MONOMIALS):
            c = self.coeffs[comp, k]
            if abs(c) <= tol * scale:
                continue
            coef = np.zeros(j + 1)
            coef[j] = c
            out[i] = out.get(i, Polynomial([0.0])) + Polynomial(coef)
        return out


def fit_surrogate(fun, n_fit: int = 40, n_check: int = 12, seed: int = 0, tol: float = 1e-7) -> PolySurrogate:
    """Fit ``fun`` (batched, (2, M) -> (2, M)) by the monomial basis and verify.

    Raises RuntimeError when the check points (which reach well outside the
    fit region) disagree, i.e. the function is not of the assumed form.
    """
    rng = np.random.default_rng(seed)
    fit = _fit_points(n_fit, rng, 0.1, 5.0, 5.0)
    chk = _fit_points(n_check, rng, 0.05, 12.0, 60.0)
    vals = np.asarray(fun(np.hstack([fit, chk])))
    A = _design(fit)
    sol, *_ = np.linalg.lstsq(A, vals[:, :n_fit].T, rcond=None)
    scale = np.array([_FIT_SCALE[0] ** i * _FIT_SCALE[1] ** j for i, j in _MONOMIALS])
    coeffs = (sol / scale[:, None]).T
    sur = PolySurrogate(coeffs, 0.0, 0.0)
    fit_res = np.max(np.abs(np.array(sur(*fit)) - vals[:, :n_fit]))
    got = np.array(sur(*chk))
    ref = vals[:, n_fit:]
    chk_res = float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))))
    sur.fit_residual, sur.check_residual = float(fit_res), chk_res
    if chk_res > tol:
        raise RuntimeError(f"averaged function is not captured by the polynomial surrogate "
                           f"(check residual {chk_res:.2e})")
    return sur


def _eliminate_linear(g1: dict, g2: dict):
    """Resultant of g1 = B r + C and g2 = sum_i D_i r^i in w.

    Returns (H, B, C); real zeros of H with B != 0 give r = -C/B.
    """
    from numpy.polynomial import Polynomial
    zero = Polynomial([0.0])
    B, C = g1.get(1, zero), g1.get(0, zero)
    k = max(g2) if g2 else 0
    H = zero
    for i, Di in g2.items():
        H = H + Di * (-C) ** i * B ** (k - i)
    return H, B, C


def closed_form_r_star_t34(p: PerturbationT34, w: float) -> float:
    """Closed-form r*(w) solving g1 = 0; a cross-check on the quadrature root."""
    a0, a1, b1, b2, g2 = p.alpha0, p.alpha1, p.beta1, p.beta2, p.gamma2
    q = -a0**2 - 3 * a0 - 1
    if not q > 0:
        return float("nan")
    sq, pi = math.sqrt(q), math.pi
    L = (2 * a0**8 * g2 + 18 * a0**7 * g2 + 2 * a0**6 * (a1 * b1 + b2 + 30 * g2)
         + a0**5 * (5 * a1 * b1 + 12 * b2 + 90 * g2)
         + a0**2 * (2 * (-3 * pi * b1**2 * sq + b2 + g2) - a1 * b1) - a0 * b1 * (4 * pi * b1 * sq + a1)
         - pi * sq * b1**2 + a0**4 * (-pi * b1**2 * sq + a1 * b1 + 22 * b2 + 60 * g2)
         + 2 * a0**3 * (-2 * pi * b1**2 * sq + 2 * a1 * b1 + 6 * b2 + 9 * g2))
    M = -8 * (a0**3 + 2 * a0**2 + 2 * a0 + 1) * a0 * b1
    K = 6 * (a0 + 1) ** 4 * b1**2 / sq
    return K * w / (L + M * w)


def predict_orbits_t34(p: PerturbationT34, nodes: int = avg.DEFAULT_NODES, w_max: float = 50.0,
                       require_first_order_zero: bool = True, tol: float = 1e-9) -> list:
    """Second-order averaging at P+ (family t3) or P- (family t4).

    With ``require_first_order_zero`` (default) a first-order average that
    does not vanish identically raises FirstOrderNotZero.  Passing False
    carries on with the second-order formula anyway and records the defect
    as a failed condition on every prediction.
    """
    conds = p.conditions()
    if not all(c[2] for c in conds):
        raise DomainError("parameters outside the family", conds)
    red = build_reduced_t34(p)
    sys_ = red.system
    rng = np.random.default_rng(0)
    probe = _fit_points(8, rng, 0.1, 3.0, 2.0)
    f_max = float(np.max(np.abs(avg.average_first(sys_, probe, nodes=nodes))))
    f_ok = f_max <= tol
    conds = conds + [("first-order average vanishes", f_max, f_ok)]
    if not f_ok and require_first_order_zero:
        raise FirstOrderNotZero(f"first-order average does not vanish (max |f| = {f_max:.3e})", conds)

    gfun = avg.averaged_function(sys_, "second", nodes)
    sur = fit_surrogate(gfun)
    g1, g2 = sur.in_r(0), sur.in_r(1)
    if -1 in g1 or -1 in g2 or any(i > 1 for i in g1):
        raise RuntimeError("g1 is not affine in r; only the affine case is implemented")
    H, B, C = _eliminate_linear(g1, g2)
    H = H.trim(tol=1e-12 * max(1.0, float(np.max(np.abs(H.coef)))))
    roots = H.roots() if H.degree() > 0 else np.array([])
    scale = max(1.0, float(np.max(np.abs(roots)))) if roots.size else 1.0
    cand = sorted(float(z.real) for z in roots if abs(z.imag) <= 1e-7 * scale and abs(z.real) <= w_max)

    preds, seen = [], []
    for w0 in cand:
        if abs(w0) <= 1e-9 or abs(B(w0)) <= 1e-12:
            continue
        r0 = float(-C(w0) / B(w0))
        if not r0 > 0:
            continue
        z, res, ok = avg.newton(gfun, np.array([r0, w0]))
        if not ok or not z[0] > 0 or any(np.allclose(z, s, rtol=1e-6, atol=1e-9) for s in seen):
            continue
        seen.append(z)
        J = avg.fd_jacobian(gfun, z)
        eigs = np.linalg.eigvals(J)
        r_pr = closed_form_r_star_t34(p, z[1])
        rel = abs(r_pr - z[0]) / max(1.0, abs(z[0])) if np.isfinite(r_pr) else float("nan")
        pc = conds + [
            ("r* > 0", float(z[0]), True),
            ("quadrature zero converged", res, True),
            ("det of averaged Jacobian != 0", float(np.linalg.det(J)), abs(np.linalg.det(J)) > avg.TOL_DET),
            ("closed-form r*(w) agrees", rel, bool(np.isfinite(rel) and rel <= 1e-6)),
        ]
        preds.append(OrbitPrediction(
            theorem=p.theorem, rw_star=(float(z[0]), float(z[1])), conditions=pc,
            jac_det_value=float(np.linalg.det(J)), initial_condition=embed_prediction(red, z),
            approx_period=red.period_estimate(float(z[0]), float(z[1])), stability=avg.stability_of_eigenvalues(eigs),
            eps=p.eps, omega=red.omega, equilibrium=red.equilibrium(p.eps), params=p.params(),
            order="second", jac_eigenvalues=tuple(eigs), quadrature_rw=(float(z[0]), float(z[1])),
            cross_check={"r_star_w": r_pr, "surrogate_check_residual": sur.check_residual}))
    return preds
