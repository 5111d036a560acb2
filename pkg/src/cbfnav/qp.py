"""Minimal-deviation velocity filter over a box with one halfspace.

Solves ``argmin |u - u_nom|  s.t.  a.u >= b,  |u_i| <= v_i`` exactly.  With
three variables and one general constraint the optimum lies on one of the
27 faces of the box lattice (each coordinate at its lower bound, upper bound
or free), and on each face the problem is a closed-form projection onto a
hyperplane.  Enumerating them is cheap and fully deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .barriers import HalfspaceConstraint

FEAS_TOL = 1e-12
_PATTERNS = tuple(itertools.product((-1, 0, 1), repeat=3))


@dataclass(frozen=True)
class VelocityBox:
    limits: np.ndarray

    def __post_init__(self):
        lim = np.asarray(self.limits, dtype=float).reshape(3)
        if np.any(lim <= 0) or not np.all(np.isfinite(lim)):
            raise ValueError("velocity limits must be positive and finite")
        object.__setattr__(self, "limits", lim)

    @classmethod
    def uniform(cls, v: float) -> "VelocityBox":
        return cls(np.full(3, float(v)))

    def clamp(self, u) -> np.ndarray:
        return np.clip(u, -self.limits, self.limits)


class FilterResult(NamedTuple):
    u: np.ndarray
    infeasible: bool
    active: bool


def _tol(c: HalfspaceConstraint, box: VelocityBox) -> float:
    return FEAS_TOL * (1.0 + float(np.abs(c.a) @ box.limits) + abs(c.b))


def best_effort_vertex(u_nom, c: HalfspaceConstraint, box: VelocityBox) -> np.ndarray:
    """Box point maximising a.u; coordinates with a_i = 0 stay at the clamp of u_nom."""
    u = box.clamp(u_nom)
    nz = c.a != 0
    u[nz] = np.sign(c.a[nz]) * box.limits[nz]
    return u


def filter_velocity(u_nom, c: HalfspaceConstraint, box: VelocityBox) -> FilterResult:
    u_nom = np.asarray(u_nom, dtype=float)
    a, b, v = c.a, c.b, box.limits
    tol = _tol(c, box)

    clamped = box.clamp(u_nom)
    if a @ clamped >= b:
        return FilterResult(clamped, False, False)

    if float(np.abs(a) @ v) < b - tol:
        return FilterResult(best_effort_vertex(u_nom, c, box), True, True)

    best, best_d = None, np.inf
    for pattern in _PATTERNS:
        u = u_nom.copy()
        free = np.array([s == 0 for s in pattern])
        for i, s in enumerate(pattern):
            if s:
                u[i] = s * v[i]
        rhs = b - a[~free] @ u[~free]
        af = a[free]
        nrm2 = float(af @ af)
        if nrm2 < 1e-24:
            # free coordinates cannot move a.u by more than the tolerance
            if abs(rhs) > tol:
                continue
        else:
            lam = (rhs - af @ u_nom[free]) / nrm2
            u[free] = u_nom[free] + lam * af
        if np.any(np.abs(u) > v + tol) or a @ u < b - tol:
            continue
        d = float(np.sum((u - u_nom) ** 2))
        if d < best_d:
            best, best_d = u, d
    if best is None:
        # only reachable when the intersection is a numerically thin sliver
        return FilterResult(best_effort_vertex(u_nom, c, box), True, True)
    return FilterResult(np.clip(best, -v, v), False, True)


def brute_force_filter(u_nom, c: HalfspaceConstraint, box: VelocityBox, step: float) -> FilterResult:
    """Nearest feasible point of the box grid with spacing ``step``.

    The search walks every (x, y) column of the grid; along a column the
    distance is separable, so the best z is the feasible grid value closest
    to ``u_nom[2]``.  The result is identical to scoring all grid points.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    u_nom = np.asarray(u_nom, dtype=float)
    a, b, v = c.a, c.b, box.limits
    axes = [np.linspace(-v[i], v[i], int(round(2 * v[i] / step)) + 1) for i in range(3)]
    gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
    z = axes[2]
    rest = b - a[0] * gx - a[1] * gy  # need a_z * z >= rest

    # nearest grid z to u_nom[2], then walk it into the feasible range of the column
    nz = len(z)
    k0 = int(np.clip(np.rint((u_nom[2] + v[2]) / (z[1] - z[0])), 0, nz - 1))
    kz = np.full(gx.shape, k0)
    feasible = np.ones(gx.shape, dtype=bool)
    if a[2] > 0:
        # z >= rest / a_z
        kmin = np.ceil((rest / a[2] + v[2]) / (z[1] - z[0]) - 1e-9).astype(int)
        kmin = np.maximum(kmin, 0)
        feasible = kmin <= nz - 1
        kz = np.maximum(kz, kmin)
    elif a[2] < 0:
        kmax = np.floor((rest / a[2] + v[2]) / (z[1] - z[0]) + 1e-9).astype(int)
        kmax = np.minimum(kmax, nz - 1)
        feasible = kmax >= 0
        kz = np.minimum(kz, kmax)
    else:
        feasible = rest <= 0
    kz = np.clip(kz, 0, nz - 1)
    zz = z[kz]
    # exact re-check with the actual grid coordinates
    feasible &= a[0] * gx + a[1] * gy + a[2] * zz >= b - 1e-12
    if not feasible.any():
        return FilterResult(best_effort_vertex(u_nom, c, box), True, True)
    d = (gx - u_nom[0]) ** 2 + (gy - u_nom[1]) ** 2 + (zz - u_nom[2]) ** 2
    d = np.where(feasible, d, np.inf)
    i, j = np.unravel_index(int(np.argmin(d)), d.shape)
    u = np.array([gx[i, j], gy[i, j], zz[i, j]])
    return FilterResult(u, False, bool(a @ box.clamp(u_nom) < b))


def naive_grid_filter(u_nom, c: HalfspaceConstraint, box: VelocityBox, step: float) -> np.ndarray | None:
    """Score every point of the 3-D grid (slow; used to cross-check the column search)."""
    v = box.limits
    axes = [np.linspace(-v[i], v[i], int(round(2 * v[i] / step)) + 1) for i in range(3)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    ok = G @ c.a >= c.b - 1e-12
    if not ok.any():
        return None
    d = np.sum((G[ok] - np.asarray(u_nom)) ** 2, axis=1)
    return G[ok][int(np.argmin(d))]
