"""FitzHugh-Nagumo travelling-wave ODE: field, equilibria, zero-Hopf tests.

The system is::

    x' = z
    y' = b (x - d y)
    z' = x (x - 1) (x - a) + y + c z
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError

TOL_EIG = 1e-10

ORIGIN, PPLUS, PMINUS, COINCIDENT = "Origin", "PPlus", "PMinus", "Coincident"


@dataclass(frozen=True)
class Params:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"parameter {name} must be finite, got {v!r}")

    @property
    def discriminant(self) -> float:
        """d (a - 1)^2 - 4; P+ and P- exist when this is positive and d > 0."""
        return self.d * (self.a - 1.0) ** 2 - 4.0

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


class State(NamedTuple):
    x: float
    y: float
    z: float


class CubicCoeffs(NamedTuple):
    """Monic cubic ``c3 l^3 + c2 l^2 + c1 l + c0`` with ``c3 == 1``."""

    c3: float
    c2: float
    c1: float
    c0: float

    def __call__(self, lam):
        return ((self.c3 * lam + self.c2) * lam + self.c1) * lam + self.c0


@dataclass(frozen=True)
class Equilibrium:
    location: State
    kind: str
    eigenvalues: tuple
    discriminant: float


@dataclass(frozen=True)
class ZeroHopfFamily:
    tag: str
    omega: float
    residuals: dict = field(default_factory=dict)
    equilibrium: str = ORIGIN


def vector_field(p: Params, s) -> np.ndarray:
    """Evaluate the field; ``s`` may hold arrays of matching shape."""
    x, y, z = s[0], s[1], s[2]
    return np.array([z + 0.0 * x, p.b * (x - p.d * y), x * (x - 1.0) * (x - p.a) + y + p.c * z])


def jacobian(p: Params, s) -> np.ndarray:
    x = s[0]
    dg = 3.0 * x * x - 2.0 * (1.0 + p.a) * x + p.a
    return np.array([[0.0, 0.0, 1.0], [p.b, -p.b * p.d, 0.0], [dg, 1.0, p.c]])


def divergence(p: Params) -> float:
    """Trace of the Jacobian, which is constant for this field."""
    return p.c - p.b * p.d


def char_poly_origin(p: Params) -> CubicCoeffs:
    a, b, c, d = p.a, p.b, p.c, p.d
    return CubicCoeffs(1.0, -(c - b * d), -(a + b * c * d), -b * (1.0 + a * d))


def _pm_root(p: Params) -> float:
    # sqrt(d [(a-1)^2 d - 4]), clipped at zero for the coincident case
    return math.sqrt(max(p.d * p.discriminant, 0.0))


def char_poly_pm(p: Params, sign: str) -> CubicCoeffs:
    if sign not in ("plus", "minus"):
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    if not (p.d > 0 and p.discriminant >= 0):
        raise DomainError(
            "P+/P- do not exist: need d > 0 and d(a-1)^2 - 4 >= 0",
            [("d > 0", p.d, p.d > 0), ("d(a-1)^2-4 >= 0", p.discriminant, p.discriminant >= 0)],
        )
    a, b, c, d = p.a, p.b, p.c, p.d
    s = 1.0 if sign == "plus" else -1.0
    k = (a - 1.0) ** 2 * d + s * (a + 1.0) * _pm_root(p)
    return CubicCoeffs(1.0, -(c - b * d), -(k + 2.0 * b * c * d * d - 6.0) / (2.0 * d), -0.5 * b * (k - 4.0))


def pm_location(p: Params, sign: str) -> State:
    """Closed-form coordinates of P+ (sign='plus') or P- (sign='minus')."""
    root = math.sqrt(max((p.a - 1.0) ** 2 - 4.0 / p.d, 0.0))
    s = 1.0 if sign == "plus" else -1.0
    x = 0.5 * (1.0 + p.a) + 0.5 * s * root
    return State(x, x / p.d, 0.0)


def _sort_roots(roots) -> tuple:
    roots = [complex(r) for r in roots]
    return tuple(sorted(roots, key=lambda r: (round(r.real, 9), r.imag)))


def _cardano(c2: float, c1: float, c0: float) -> list:
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if p == 0.0 and q == 0.0:
        ts = [0.0, 0.0, 0.0]
    elif disc < 0.0:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = (3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p)
        phi = math.acos(min(1.0, max(-1.0, arg))) / 3.0
        ts = [m * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)]
    else:
        sq = math.sqrt(disc)
        u = np.cbrt(-q / 2.0 + sq)
        v = np.cbrt(-q / 2.0 - sq)
        re, im = -(u + v) / 2.0, math.sqrt(3.0) / 2.0 * (u - v)
        ts = [u + v, complex(re, im), complex(re, -im)]
    return [t - shift for t in ts]


def eigenvalues_cubic(c: CubicCoeffs, tol: float = TOL_EIG) -> tuple:
    """Roots of a monic cubic, sorted by (real, imaginary) part.

    Cardano's formula (trigonometric branch for three real roots) is
    polished by a Newton step and compared with companion-matrix
    eigenvalues; the companion result wins if the two disagree by more
    than 1e-7.
    """
    if c.c3 != 1.0:
        raise ValueError("cubic must be monic (c3 == 1)")
    roots = []
    for r in _cardano(c.c2, c.c1, c.c0):
        r = complex(r)
        dp = (3.0 * r + 2.0 * c.c2) * r + c.c1
        if dp != 0:
            step = c(r) / dp
            if abs(step) < 1e-6 * (1.0 + abs(r)):
                r -= step
        roots.append(r)
    closed = _sort_roots(roots)
    companion = _sort_roots(np.roots([1.0, c.c2, c.c1, c.c0]))
    if max(abs(x - y) for x, y in zip(closed, companion)) > 1e-7:
        closed = companion
    # a real cubic has conjugate-symmetric roots; drop rounding noise
    closed = tuple(complex(r.real, 0.0) if abs(r.imag) <= tol * (1 + abs(r)) else r for r in closed)
    return _sort_roots(closed)


def _char_poly_at(p: Params, kind: str) -> CubicCoeffs:
    if kind == ORIGIN:
        return char_poly_origin(p)
    if kind == PMINUS:
        return char_poly_pm(p, "minus")
    return char_poly_pm(p, "plus")


def default_tol_disc(p: Params) -> float:
    return 1e-9 * (1.0 + p.d * (p.a - 1.0) ** 2)


def equilibria(p: Params, tol_disc: float | None = None) -> list:
    """Origin, plus P+/P- or the merged point, with eigenvalues.

    For b = 0 the equilibrium set is a curve; only the three
    distinguished points are reported.
    """
    if tol_disc is None:
        tol_disc = default_tol_disc(p)
    disc = p.discriminant
    out = [Equilibrium(State(0.0, 0.0, 0.0), ORIGIN, eigenvalues_cubic(char_poly_origin(p)), disc)]
    if p.d > 0 and abs(disc) <= tol_disc:
        x = 0.5 * (1.0 + p.a)
        eig = eigenvalues_cubic(_coincident_poly(p))
        out.append(Equilibrium(State(x, x / p.d, 0.0), COINCIDENT, eig, disc))
    elif p.d > 0 and disc > 0:
        for kind, sign in ((PPLUS, "plus"), (PMINUS, "minus")):
            out.append(Equilibrium(pm_location(p, sign), kind, eigenvalues_cubic(char_poly_pm(p, sign)), disc))
    return out


def _coincident_poly(p: Params) -> CubicCoeffs:
    # char_poly_pm with the square root set to zero
    a, b, c, d = p.a, p.b, p.c, p.d
    k = (a - 1.0) ** 2 * d
    return CubicCoeffs(1.0, -(c - b * d), -(k + 2.0 * b * c * d * d - 6.0) / (2.0 * d), -0.5 * b * (k - 4.0))


def classify_zero_hopf(p: Params, tol: float = 1e-9) -> list:
    """Every zero-Hopf family whose conditions hold at ``p``.

    Equalities are accepted when their absolute defect is at most ``tol``;
    strict inequalities are tested without a tolerance band.  The
    P+/P- items (ii)/(iii), whose equalities force a vanishing
    discriminant, are evaluated at the merged point.
    """
    a, b, c, d = p.a, p.b, p.c, p.d
    found = []

    def ok(defects):
        return all(abs(v) <= tol for v in defects.values())

    # origin (i): ad + 1 = 0, bd - c = 0, d(1 - b^2 d^3) > 0
    res = {"ad+1": a * d + 1.0, "bd-c": b * d - c}
    if ok(res) and d * (1.0 - b * b * d**3) > 0:
        found.append(ZeroHopfFamily("OriginI", math.sqrt((1.0 - b * b * d**3) / d), res, ORIGIN))
    # origin (ii): b = c = 0, a < 0
    res = {"b": b, "c": c}
    if ok(res) and a < 0:
        found.append(ZeroHopfFamily("OriginII", math.sqrt(-a), res, ORIGIN))

    if d > 0:
        disc = p.discriminant
        root = math.sqrt(d * disc) if disc > 0 else 0.0
        for sign, prefix, kind in ((1.0, "PPlus", PPLUS), (-1.0, "PMinus", PMINUS)):
            if disc > 0:
                k = (a - 1.0) ** 2 * d + sign * (a + 1.0) * root
                res = {"b": b, "c": c}
                if ok(res) and k - 6.0 < 0:
                    found.append(ZeroHopfFamily(prefix + "I", math.sqrt(-(k - 6.0) / (2.0 * d)), res, kind))
            for item, s2 in (("II", 1.0), ("III", -1.0)):
                res = {f"a-1{'+' if s2 > 0 else '-'}2/sqrt(d)": a - 1.0 + s2 * 2.0 / math.sqrt(d), "bd-c": b * d - c}
                if ok(res) and 1.0 - b * b * d**3 > 0:
                    found.append(ZeroHopfFamily(prefix + item, math.sqrt((1.0 - b * b * d**3) / d), res, COINCIDENT))
        res = {"d(a-1)^2-4": disc, "bd-c": b * d - c}
        if ok(res) and 1.0 - b * b * d**3 > 0:
            found.append(ZeroHopfFamily("CoincidentI", math.sqrt((1.0 - b * b * d**3) / d), res, COINCIDENT))
    return found


def family_char_poly(p: Params, fam: ZeroHopfFamily) -> CubicCoeffs:
    """Characteristic cubic at the equilibrium a family refers to."""
    if fam.equilibrium == COINCIDENT:
        return _coincident_poly(p)
    return _char_poly_at(p, fam.equilibrium)
