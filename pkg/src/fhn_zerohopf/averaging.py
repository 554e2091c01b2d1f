"""First- and second-order averaging of T-periodic perturbed systems.

A system ``x' = eps F(t, x) + eps^2 G(t, x)`` is described by a
:class:`PeriodicSystem`.  The callables take ``(t, z)`` where ``z`` is a
sequence of ``n`` arrays broadcastable against ``t`` and return ``n``
arrays of the broadcast shape; this lets the engine evaluate a whole
quadrature grid, or a batch of points, in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import FirstOrderNotZero, QuadratureNotConverged

DEFAULT_NODES = 512
MAX_NODES = 8192
TOL_QUAD = 1e-10
TOL_DET = 1e-8
TOL_MARGINAL = 1e-7
CHUNK_CELLS = 200_000
POSITIVE_FLOOR = 1e-8

ATTRACTING, REPELLING, SADDLE, MARGINAL = "attracting", "repelling", "saddle-like", "marginal"


@dataclass(frozen=True)
class PeriodicSystem:
    dim: int
    period: float
    F: Callable
    G: Optional[Callable] = None
    DxF: Optional[Callable] = None
    names: tuple = ()


@dataclass
class AveragedZero:
    z: np.ndarray
    order: str
    jac: np.ndarray
    jac_det: float
    jac_eigenvalues: np.ndarray
    residual: float
    meta: dict = field(default_factory=dict)


def _as_batch(sys: PeriodicSystem, z):
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    if single:
        z = z[:, None]
    if z.shape[0] != sys.dim:
        raise ValueError(f"expected points of dimension {sys.dim}, got shape {z.shape}")
    return z, single


def _grid(sys: PeriodicSystem, n: int) -> np.ndarray:
    return np.linspace(0.0, sys.period, n + 1)


def _eval(fun, t, zb, dim):
    # zb has shape (dim, M); result (dim, M, len(t))
    args = [zb[i][:, None] for i in range(dim)]
    out = fun(t[None, :], args)
    return np.stack([np.broadcast_to(np.asarray(o, dtype=float), (zb.shape[1], t.size)) for o in out])


def _simpson(y: np.ndarray, h: float) -> np.ndarray:
    # composite Simpson along the last axis; y has an even number of intervals
    return h / 3.0 * (y[..., 0] + y[..., -1] + 4.0 * y[..., 1:-1:2].sum(-1) + 2.0 * y[..., 2:-1:2].sum(-1))


def _jac_fd(sys: PeriodicSystem, t, zb):
    # (dim, dim, M, N): d F_i / d z_j by central differences
    n = sys.dim
    out = np.empty((n, n, zb.shape[1], t.size))
    for j in range(n):
        h = 1e-6 * (1.0 + np.abs(zb[j]))
        zp, zm = zb.copy(), zb.copy()
        zp[j] += h
        zm[j] -= h
        out[:, j] = (_eval(sys.F, t, zp, n) - _eval(sys.F, t, zm, n)) / (2.0 * h[None, :, None])
    return out


def _jac_f(sys: PeriodicSystem, t, zb, fd: bool):
    if sys.DxF is None or fd:
        return _jac_fd(sys, t, zb)
    n = sys.dim
    args = [zb[i][:, None] for i in range(n)]
    out = sys.DxF(t[None, :], args)
    return np.stack([np.stack([np.broadcast_to(np.asarray(out[i][j], dtype=float), (zb.shape[1], t.size))
                               for j in range(n)]) for i in range(n)])


def _first_raw(sys, zb, n):
    t = _grid(sys, n)
    return _simpson(_eval(sys.F, t, zb, sys.dim), sys.period / n) / sys.period


def _second_raw(sys, zb, n, fd=False):
    t = _grid(sys, n)
    h = sys.period / n
    Fv = _eval(sys.F, t, zb, sys.dim)
    inner = cumulative_simpson(Fv, dx=h, axis=-1, initial=0.0)
    DF = _jac_f(sys, t, zb, fd)
    integrand = np.einsum("ijmn,jmn->imn", DF, inner)
    if sys.G is not None:
        integrand = integrand + _eval(sys.G, t, zb, sys.dim)
    return _simpson(integrand, h) / sys.period


def _chunked(raw, sys, zb, n):
    # bound memory: each chunk holds roughly CHUNK_CELLS (point, node) pairs
    step = max(1, CHUNK_CELLS // (n + 1))
    if zb.shape[1] <= step:
        return raw(sys, zb, n)
    return np.concatenate([raw(sys, zb[:, i:i + step], n) for i in range(0, zb.shape[1], step)], axis=1)


def _converge(raw, sys, zb, nodes, tol, max_nodes):
    n = max(8, -(-int(nodes) // 4) * 4)
    coarse = _chunked(raw, sys, zb, n // 2)
    while True:
        fine = _chunked(raw, sys, zb, n)
        if not np.all(np.isfinite(fine)):
            raise QuadratureNotConverged("integrand is not finite at some of the requested points")
        err = np.abs(fine - coarse) / 15.0
        if np.all(err <= tol * np.maximum(1.0, np.abs(fine))):
            return fine, float(err.max(initial=0.0)), n
        if 2 * n > max_nodes:
            raise QuadratureNotConverged(
                f"quadrature error estimate {err.max():.3e} exceeds {tol:.1e} at N={n}")
        coarse, n = fine, 2 * n


def average_first(sys: PeriodicSystem, z, nodes: int = DEFAULT_NODES, tol: float = TOL_QUAD,
                  max_nodes: int = MAX_NODES) -> np.ndarray:
    """(1/T) * integral over one period of F(s, z) ds.

    ``z`` may be a single point of shape ``(n,)`` or a batch ``(n, M)``.
    """
    zb, single = _as_batch(sys, z)
    val, _, _ = _converge(_first_raw, sys, zb, nodes, tol, max_nodes)
    return val[:, 0] if single else val


def average_second(sys: PeriodicSystem, z, nodes: int = DEFAULT_NODES, tol: float = TOL_QUAD,
                   max_nodes: int = MAX_NODES, finite_difference: bool = False) -> np.ndarray:
    """(1/T) * integral of [D_z F(s, z) * int_0^s F(t, z) dt + G(s, z)] ds.

    The inner integral is a cumulative Simpson sum on the outer grid.
    """
    zb, single = _as_batch(sys, z)

    def raw(s, b, n):
        return _second_raw(s, b, n, fd=finite_difference)

    val, _, _ = _converge(raw, sys, zb, nodes, tol, max_nodes)
    return val[:, 0] if single else val


def averaged_function(sys: PeriodicSystem, order: str, nodes: int = DEFAULT_NODES) -> Callable:
    if order == "first":
        return lambda z: average_first(sys, z, nodes=nodes)
    if order == "second":
        return lambda z: average_second(sys, z, nodes=nodes)
    raise ValueError(f"order must be 'first' or 'second', got {order!r}")


def fd_jacobian(fun: Callable, z: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian with step 1e-6 (1 + |z_j|), batched."""
    z = np.asarray(z, dtype=float)
    n = z.size
    steps = 1e-6 * (1.0 + np.abs(z))
    pts = np.empty((n, 2 * n))
    for j in range(n):
        pts[:, 2 * j] = z
        pts[:, 2 * j + 1] = z
        pts[j, 2 * j] += steps[j]
        pts[j, 2 * j + 1] -= steps[j]
    vals = fun(pts)
    return (vals[:, 0::2] - vals[:, 1::2]) / (2.0 * steps[None, :])


def _eval_lenient(fun, pts):
    # points where the average cannot be formed count as infinitely bad
    try:
        return fun(pts)
    except QuadratureNotConverged:
        out = np.full(pts.shape, np.inf)
        for k in range(pts.shape[1]):
            try:
                out[:, k] = fun(pts[:, k:k + 1])[:, 0]
            except QuadratureNotConverged:
                pass
        return out


def newton(fun: Callable, z0, tol: float = 1e-11, max_iter: int = 50):
    """Damped Newton on ``fun(z) = 0`` (``fun`` accepts batches ``(n, M)``).

    Returns ``(z, residual_norm, converged)``.
    """
    z = np.array(z0, dtype=float)
    fz = fun(z[:, None])[:, 0]
    res = float(np.linalg.norm(fz))
    for _ in range(max_iter):
        if res < tol:
            return z, res, True
        J = fd_jacobian(fun, z)
        try:
            step = np.linalg.solve(J, -fz)
        except np.linalg.LinAlgError:
            return z, res, False
        # backtracking on the residual norm, all trial points in one batch
        lams = 0.5 ** np.arange(12)
        trials = z[:, None] + step[:, None] * lams[None, :]
        ftr = _eval_lenient(fun, trials)
        norms = np.linalg.norm(ftr, axis=0)
        better = np.nonzero(norms < res)[0]
        k = better[0] if better.size else int(np.argmin(norms))
        if not better.size and norms[k] >= res:
            return z, res, False
        z, fz, res = trials[:, k], ftr[:, k], float(norms[k])
    return z, res, res < tol


def _check_first_vanishes(sys, pts, nodes, tol):
    f = average_first(sys, pts, nodes=nodes)
    worst = float(np.abs(f).max())
    if worst > tol:
        raise FirstOrderNotZero(f"first-order average is not identically zero (max |f| = {worst:.3e})")


def find_averaged_zeros(sys: PeriodicSystem, order: str = "first", seeds: Optional[Sequence] = None,
                        box: Optional[Sequence] = None, grid: Optional[Sequence[int]] = None,
                        positive_mask: Optional[Sequence[bool]] = None, nodes: int = DEFAULT_NODES,
                        tol: float = 1e-11, tol_det: float = TOL_DET, first_order_tol: float = 1e-9,
                        rng_seed: int = 0) -> list:
    """Nondegenerate zeros of the averaged function of the requested order.

    Newton runs from each seed, or from the midpoints of a ``grid`` of cells
    in ``box = [(lo, hi), ...]``.  Zeros violating ``positive_mask`` or with
    ``|det J| <= tol_det`` are dropped; an empty list is a normal result.
    """
    n = sys.dim
    if seeds is None:
        if box is None:
            raise ValueError("either seeds or box must be given")
        grid = grid or [8] * n
        axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k for (lo, hi), k in zip(box, grid)]
        seeds = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[1] != n and seeds.shape[0] == n:
        seeds = seeds.T

    if order == "second":
        rng = np.random.default_rng(rng_seed)
        if box is not None:
            lo = np.array([b[0] for b in box])
            hi = np.array([b[1] for b in box])
        else:
            lo, hi = seeds.min(axis=0) - 1.0, seeds.max(axis=0) + 1.0
            if positive_mask is not None:
                lo = np.where(positive_mask, np.maximum(lo, 0.05), lo)
        pts = lo[:, None] + (hi - lo)[:, None] * rng.random((n, 8))
        _check_first_vanishes(sys, pts, nodes, first_order_tol)

    fun = averaged_function(sys, order, nodes)
    mask = np.zeros(n, bool) if positive_mask is None else np.asarray(positive_mask, bool)
    found = []
    for s in seeds:
        try:
            z, res, ok = newton(fun, s, tol=tol)
        except QuadratureNotConverged:
            # the iterate reached a singular region of the field; this seed yields nothing
            continue
        # a radius that converged onto zero is not positive
        if not ok or np.any(z[mask] <= POSITIVE_FLOOR):
            continue
        if any(np.linalg.norm(z - f.z) <= 1e-6 * (1.0 + np.linalg.norm(f.z)) for f in found):
            continue
        J = fd_jacobian(fun, z)
        det = float(np.linalg.det(J))
        if abs(det) <= tol_det:
            continue
        found.append(AveragedZero(z=z, order=order, jac=J, jac_det=det,
                                  jac_eigenvalues=np.linalg.eigvals(J), residual=res))
    found.sort(key=lambda f: tuple(f.z))
    return found


def stability_of_eigenvalues(eigs, tol_marginal: float = TOL_MARGINAL, eps_sign: float = 1.0) -> str:
    re = eps_sign * np.real(np.asarray(eigs))
    if np.any(np.abs(re) < tol_marginal):
        return MARGINAL
    if np.all(re < 0):
        return ATTRACTING
    if np.all(re > 0):
        return REPELLING
    return SADDLE


def stability_of_zero(az: AveragedZero, tol_marginal: float = TOL_MARGINAL, eps_sign: float = 1.0) -> str:
    """Stability of the averaged equilibrium; eps > 0 unless ``eps_sign`` says otherwise."""
    return stability_of_eigenvalues(az.jac_eigenvalues, tol_marginal, eps_sign)
