"""Finite cyclic isometry actions on charts and the checks that stand in for quotients.

Quotients are never built.  A form on the quotient is represented by an
invariant form upstairs, and a map between quotients by an equivariant map.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import exterior as ext
from .geometry import FormField, GeometryError, MetricChart, form_norm, sub_forms
from .report import VerificationReport


@dataclass(frozen=True)
class GroupAction:
    """Finite group of orthogonal matrices acting linearly on a chart."""

    chart: MetricChart
    elements: tuple
    labels: tuple = ()
    name: str = "G"
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def order(self) -> int:
        return len(self.elements)

    def act(self, index: int, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.elements[index].T

    def axioms_residual(self) -> float:
        """Closure, identity and inverses under matrix product."""
        mats = [np.asarray(g) for g in self.elements]
        m = mats[0].shape[0]
        worst = 0.0
        dist = lambda A: min(np.abs(A - B).max() for B in mats)
        worst = max(worst, dist(np.eye(m)))
        for A in mats:
            worst = max(worst, dist(A.T))  # orthogonal, so A^{-1} = A^T
            worst = max(worst, np.abs(A.T @ A - np.eye(m)).max())
            for B in mats:
                worst = max(worst, dist(A @ B))
        return float(worst)

    def isometry_residual(self, points: np.ndarray) -> float:
        """``max |gamma^T g(gamma x) gamma - g(x)|`` over elements and points."""
        X = np.atleast_2d(points)
        gx = self.chart.metric_at(X)
        worst = 0.0
        for i, A in enumerate(self.elements):
            gy = self.chart.metric_at(self.act(i, X))
            worst = max(worst, float(np.abs(A.T @ gy @ A - gx).max()))
        return worst


def euclidean_chart(m: int, half_width: float = 1.5, name: str | None = None) -> MetricChart:
    def metric(c):
        one = 1.0 + 0.0 * c[0]
        zero = 0.0 * c[0]
        return [[one if i == j else zero for j in range(m)] for i in range(m)]
    return MetricChart(name=name or f"R^{m}", dim=m, metric=metric,
                       lower=(-half_width,) * m, upper=(half_width,) * m)


def rotation_block(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def cyclic_action(n: int, weights: tuple, chart: MetricChart | int, name: str | None = None) -> GroupAction:
    """``Z_n`` acting by ``gamma^w`` on the complex pairs ``(x0, x1), (x2, x3), ...``.

    Coordinates past ``2 * len(weights)`` are left fixed.
    """
    if n < 1:
        raise GeometryError("group order must be >= 1")
    if isinstance(chart, int):
        chart = euclidean_chart(chart)
    m = chart.dim
    if 2 * len(weights) > m:
        raise GeometryError(f"{len(weights)} weights need at least {2 * len(weights)} coordinates, chart has {m}")
    elements = []
    for k in range(n):
        A = np.eye(m)
        for j, w in enumerate(weights):
            A[2 * j:2 * j + 2, 2 * j:2 * j + 2] = rotation_block(2.0 * math.pi * ((k * w) % n) / n)
        elements.append(A)
    return GroupAction(chart, tuple(elements), tuple(range(n)),
                       name=name or f"Z_{n}{tuple(weights)}", metadata={"n": n, "weights": tuple(weights)})


def bezout(p: int, q: int) -> tuple[int, int]:
    """``(a, b)`` with ``a p - b q = 1`` and ``0 <= a < q`` (``a = 1, b = 0`` when ``q = 1``)."""
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    if math.gcd(p, q) != 1:
        raise ValueError(f"{p} and {q} are not coprime")
    a = pow(p, -1, q) if q > 1 else 1
    b = (a * p - 1) // q
    return a, b


def hopf_actions(n: int | None = None, p: int | None = None, q: int | None = None):
    """Matched actions on S^3 in R^4 and on S^2 in R^3 = C + R.

    With only ``n``: ``gamma (z1, z2) = (gamma z1, z2)`` upstairs and
    ``gamma (w, t) = (gamma w, t)`` downstairs.  With ``p, q``: ``n = p q`` and
    the upstairs weights are ``(a p, b q)``.
    """
    if p is not None and q is not None:
        a, b = bezout(p, q)
        n = p * q
        up = cyclic_action(n, (a * p, b * q), euclidean_chart(4), name=f"rho3[{p},{q}]")
        down = cyclic_action(n, (1,), euclidean_chart(3), name=f"rho2[{p},{q}]")
        return up, down
    if n is None:
        raise ValueError("give n or (p, q)")
    return (cyclic_action(n, (1, 0), euclidean_chart(4), name=f"rho3[{n}]"),
            cyclic_action(n, (1,), euclidean_chart(3), name=f"rho2[{n}]"))


@dataclass(frozen=True)
class FixedPointData:
    dimension: int
    codimension: int
    isotropy_order: int | None


def fixed_subspace(gamma: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (columns) of the eigenvalue-1 eigenspace."""
    A = np.asarray(gamma) - np.eye(len(gamma))
    _, s, vt = np.linalg.svd(A)
    return vt[s <= tol].T


def stabilizer_order(action: GroupAction, x: np.ndarray, tol: float = 1e-9) -> int:
    x = np.asarray(x, dtype=float)
    return sum(1 for A in action.elements if np.abs(A @ x - x).max() <= tol)


def effective_order(action: GroupAction, x: np.ndarray, tol: float = 1e-9) -> int:
    """Order of the group acting effectively on the orbit of ``x``: |G| / |Stab(x)|."""
    return action.order // stabilizer_order(action, x, tol)


def fixed_point_data(gamma: np.ndarray, action: GroupAction | None = None,
                     seed: int = 0, tol: float = 1e-9) -> FixedPointData:
    """Fixed subspace of ``gamma`` and, given the action, the stabilizer order of a generic fixed point."""
    gamma = np.asarray(gamma, dtype=float)
    if np.abs(gamma.T @ gamma - np.eye(len(gamma))).max() > 1e-9:
        raise GeometryError("element is not orthogonal")
    basis = fixed_subspace(gamma, tol)
    dim = basis.shape[1]
    iso = None
    if action is not None:
        if dim == 0:
            iso = action.order  # only the origin is fixed
        else:
            x = basis @ np.random.default_rng(seed).standard_normal(dim)
            iso = stabilizer_order(action, x, tol)
    return FixedPointData(dim, len(gamma) - dim, iso)


def check_singular_codimension(action: GroupAction, sphere: bool = True) -> list[int]:
    """Codimensions of the non-trivial fixed sets; raises if one is below 2.

    With ``sphere`` the chart is the linearization of an action on the unit
    sphere, and a fixed set that is only the origin misses the sphere.
    """
    codims = []
    for A in action.elements:
        if np.abs(A - np.eye(len(A))).max() <= 1e-12:
            continue
        d = fixed_point_data(A)
        if sphere and d.dimension == 0:
            continue
        if d.codimension < 2:
            raise GeometryError(f"{action.name}: fixed set of codimension {d.codimension} < 2")
        codims.append(d.codimension)
    return codims


def _orbit_ok(action: GroupAction, X: np.ndarray) -> np.ndarray:
    ok = action.chart.admissible(X)
    for i in range(action.order):
        ok &= action.chart.admissible(action.act(i, X))
    return ok


def invariance_residual(action: GroupAction, phi: FormField, points: np.ndarray,
                        tolerance: float = 1e-10) -> VerificationReport:
    """``max_gamma |gamma^* (phi(gamma x)) - phi(x)|_g`` at each point."""
    if phi.chart.dim != action.chart.dim:
        raise GeometryError("form and action live on charts of different dimension")
    start = time.perf_counter()
    X = np.atleast_2d(points)
    ok = _orbit_ok(action, X)
    X = X[ok]
    base = phi.values(X)
    ginv = np.linalg.inv(phi.chart.metric_at(X))
    res = np.zeros(len(X))
    for i, A in enumerate(action.elements):
        moved = phi.values(action.act(i, X))
        pulled = ext.pullback_coeffs([list(row) for row in A], moved, action.chart.dim)
        res = np.maximum(res, form_norm(sub_forms(pulled, base), ginv))
    return VerificationReport("invariance", res.tolist(), tolerance, X,
                              metadata={"action": action.name, "form": phi.name, "dropped": int((~ok).sum())},
                              wall_clock=time.perf_counter() - start)


def equivariance_check(upstairs: GroupAction, downstairs: GroupAction, proj: Callable[[np.ndarray], np.ndarray],
                       points: np.ndarray, tolerance: float = 1e-12) -> VerificationReport:
    """``max_gamma |proj(rho_Z(gamma) z) - rho_Y(gamma) proj(z)|`` with elements matched by index."""
    if upstairs.order != downstairs.order:
        raise GeometryError(f"group orders differ: {upstairs.order} vs {downstairs.order}")
    start = time.perf_counter()
    Z = np.atleast_2d(points)
    res = np.zeros(len(Z))
    base = proj(Z)
    for i in range(upstairs.order):
        diff = proj(upstairs.act(i, Z)) - downstairs.act(i, base)
        res = np.maximum(res, np.abs(diff).max(axis=-1))
    return VerificationReport("equivariance", res.tolist(), tolerance, Z,
                              metadata={"upstairs": upstairs.name, "downstairs": downstairs.name},
                              wall_clock=time.perf_counter() - start)


def random_sphere_points(m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    X = rng.standard_normal((count, m))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def hopf_circle_isotropy(p: int, q: int) -> dict:
    """Stabilizer and effective orders of the two special Hopf fibers under ``rho3[p, q]``.

    Keys are the circles ``(z1, 0)`` and ``(0, z2)``.
    """
    up, _ = hopf_actions(p=p, q=q)
    out = {}
    for label, x in (("(z1,0)", np.array([1.0, 0.0, 0.0, 0.0])), ("(0,z2)", np.array([0.0, 0.0, 1.0, 0.0]))):
        out[label] = {"stabilizer": stabilizer_order(up, x), "effective": effective_order(up, x)}
    return out
