"""Charted Riemannian manifolds and pointwise exterior calculus.

All calculus runs on :class:`~vsubmersion.jets.Jet` values batched over sample
points: a form is a ``{index tuple: Jet}`` dict whose jets have shape ``(B,)``,
a metric is a jet of shape ``(B, m, m)``.  Derivatives come from the jets, so
``d``, the codifferential and the Laplacian are exact up to rounding.

Conventions: ``delta`` is the formal adjoint of ``d`` and ``Delta = d delta +
delta d`` is non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import exterior as ext
from . import jets as jm
from .exterior import MultiIndexForm, Covector
from .jets import Jet

JetForm = dict  # {increasing tuple: Jet of shape (B,)}


class GeometryError(ValueError):
    pass


class NotPositiveDefinite(GeometryError):
    pass


@dataclass(frozen=True)
class AffineSubspace:
    """``point + span(directions)``; ``singular`` marks chart images of singular sets."""

    point: tuple[float, ...]
    directions: tuple[tuple[float, ...], ...] = ()
    singular: bool = True

    @property
    def dimension(self) -> int:
        return len(self.point)

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in np.ravel(self.point)))
        object.__setattr__(self, "directions", tuple(tuple(float(v) for v in d) for d in self.directions))

    @property
    def codimension(self) -> int:
        if not self.directions:
            return self.dimension
        return self.dimension - int(np.linalg.matrix_rank(np.array(self.directions)))

    def distance(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x) - np.asarray(self.point)
        if self.directions:
            q, _ = np.linalg.qr(np.array(self.directions, dtype=float).T)
            x = x - (x @ q) @ q.T
        return np.linalg.norm(x, axis=-1)


@dataclass(frozen=True)
class MetricChart:
    """A coordinate box with a metric written in jet-generic arithmetic.

    ``metric(coords)`` takes a list of ``m`` coordinates (floats, arrays or
    jets) and returns an ``m x m`` nested list.  ``avoid`` optionally maps a
    batch of points to their distance from excluded sets that are not affine
    in this chart.
    """

    name: str
    dim: int
    metric: Callable[[Sequence], Sequence[Sequence]]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    excluded: tuple[AffineSubspace, ...] = ()
    avoid: Callable[[np.ndarray], np.ndarray] | None = None
    embedding: Callable[[Sequence], Sequence] | None = None
    volume_sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None
    margin: float = 1e-2

    def __post_init__(self):
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise GeometryError("box bounds must have one entry per coordinate")
        for sub in self.excluded:
            if sub.singular and sub.codimension < 2:
                raise GeometryError(f"singular set {sub} has codimension < 2")

    def metric_jet(self, X: np.ndarray, order: int = jm.DEFAULT_ORDER, coords=None) -> Jet:
        coords = Jet.variables(X, order) if coords is None else coords
        return _as_matrix_jet(self.metric(coords), coords[0])

    def metric_at(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return self.metric_jet(X, 0).value

    def clearance(self, X: np.ndarray, box: bool = True) -> np.ndarray:
        """Distance of each point to the excluded sets and (with ``box``) the box boundary."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        dist = np.minimum((X - lo).min(axis=-1), (hi - X).min(axis=-1)) if box else np.full(len(X), np.inf)
        for sub in self.excluded:
            dist = np.minimum(dist, sub.distance(X))
        if self.avoid is not None:
            dist = np.minimum(dist, self.avoid(X))
        return dist

    def admissible(self, X: np.ndarray, margin: float | None = None, box: bool = True) -> np.ndarray:
        margin = self.margin if margin is None else margin
        return self.clearance(X, box) > margin


def _as_matrix_jet(rows, like: Jet) -> Jet:
    return jm.matrix([[e if isinstance(e, Jet) else Jet.constant(np.broadcast_to(e, like.shape), like.space)
                       for e in r] for r in rows])


def _as_jet(c, like: Jet) -> Jet:
    if isinstance(c, Jet):
        return c
    return Jet.constant(np.broadcast_to(np.asarray(c, dtype=float), like.shape), like.space)


@dataclass(frozen=True)
class FormField:
    """A p-form field in chart coordinates.

    ``fn(coords)`` returns ``{increasing tuple: coefficient}``; coefficients
    are written in jet-generic arithmetic.  ``loss`` is the number of jet
    orders the field consumes internally (e.g. 1 for a pullback).
    """

    chart: MetricChart
    degree: int
    fn: Callable[[Sequence], Mapping]
    name: str = ""
    loss: int = 0

    def jets(self, X: np.ndarray, order: int = jm.DEFAULT_ORDER, coords=None) -> JetForm:
        coords = Jet.variables(X, order) if coords is None else coords
        raw = self.fn(coords)
        return {tuple(k): _as_jet(c, coords[0]) for k, c in raw.items()}

    def values(self, X: np.ndarray) -> dict:
        X = np.atleast_2d(X)
        return {k: j.value for k, j in self.jets(X, self.loss).items()}

    def at(self, x) -> MultiIndexForm:
        vals = self.values(np.asarray(x, dtype=float)[None, :])
        return MultiIndexForm(self.chart.dim, self.degree, {k: v[0] for k, v in vals.items()})


@dataclass(frozen=True)
class VectorField:
    chart: MetricChart
    fn: Callable[[Sequence], Sequence]
    name: str = ""

    def jets(self, X: np.ndarray, order: int = jm.DEFAULT_ORDER, coords=None) -> Jet:
        coords = Jet.variables(X, order) if coords is None else coords
        return jm.stack([_as_jet(c, coords[0]) for c in self.fn(coords)], axis=-1)


# -- jet-level calculus -----------------------------------------------------

def form_d(form: JetForm, m: int) -> JetForm:
    """Exterior derivative of a jet form (coordinate components)."""
    out: dict = {}
    for k, c in form.items():
        for j in range(1, m + 1):
            if j in k:
                continue
            for key, v in ext.basis_ext(j, {k: jm.deriv(c, j - 1)}).items():
                out[key] = out[key] + v if key in out else v
    return out


def raise_indices(form: JetForm, ginv: Jet) -> dict:
    """Contravariant components ``w^I = sum_K det(ginv[I, K]) w_K``."""
    m = ginv.shape[-1]
    rows = [[ginv[..., i, j] for j in range(m)] for i in range(m)]
    return ext.pullback_coeffs(rows, form, m)


lower_indices = raise_indices  # same contraction with g in place of g^{-1}


def log_volume_density(g: Jet) -> Jet:
    """``ln sqrt(det g)``."""
    return 0.5 * jm.log(jm.det(g))


def form_delta(form: JetForm, g: Jet, ginv: Jet | None = None, logvol: Jet | None = None) -> JetForm:
    """Codifferential via the divergence of the raised form.

    For an alternating contravariant tensor ``T`` the Christoffel terms on the
    remaining indices cancel, so ``(delta w)^J = -(1/rho) d_k (rho T^{kJ})``
    with ``rho = sqrt(det g)``; the result is lowered back with ``g``.
    """
    m = g.shape[-1]
    if not form or all(len(k) == 0 for k in form):
        return {}
    ginv = jm.inv(g) if ginv is None else ginv
    logvol = log_volume_density(g) if logvol is None else logvol
    up = raise_indices(form, ginv)
    div: dict = {}
    for k in range(1, m + 1):
        dk = logvol.deriv(k - 1)
        shifted = {key: jm.deriv(c, k - 1) + c * dk for key, c in up.items() if k in key}
        for key, v in ext.basis_int(k, shifted).items():
            div[key] = div[key] - v if key in div else -v
    return lower_indices(div, g)


def form_laplacian(form: JetForm, g: Jet, ginv: Jet | None = None, logvol: Jet | None = None) -> JetForm:
    m = g.shape[-1]
    ginv = jm.inv(g) if ginv is None else ginv
    logvol = log_volume_density(g) if logvol is None else logvol
    a = form_d(form_delta(form, g, ginv, logvol), m)
    b = form_delta(form_d(form, m), g, ginv, logvol)
    return add_forms(a, b)


def add_forms(a: Mapping, b: Mapping, scale: float = 1.0) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out[k] + scale * v if k in out else scale * v
    return out


def form_values(form: Mapping) -> dict:
    return {k: jm.value_of(v) for k, v in form.items()}


def form_norm(values: Mapping, ginv: np.ndarray) -> np.ndarray:
    """Pointwise metric norm of a form given coefficient arrays of shape (B,)."""
    if not values:
        return np.zeros(ginv.shape[:-2])
    m = ginv.shape[-1]
    rows = [[ginv[..., i, j] for j in range(m)] for i in range(m)]
    up = ext.pullback_coeffs(rows, values, m)
    total = sum(values[k] * up.get(k, 0.0) for k in values)
    return np.sqrt(np.maximum(total, 0.0))


def sub_forms(a: Mapping, b: Mapping) -> dict:
    return add_forms(a, b, -1.0)


def pull_back_form(form: JetForm, jac: Jet) -> JetForm:
    """Pull back a form along a map with Jacobian ``jac`` of shape (B, m_target, m_source)."""
    n, m = jac.shape[-2], jac.shape[-1]
    rows = [[jac[..., a, k] for k in range(m)] for a in range(n)]
    return ext.pullback_coeffs(rows, form, m)


def jacobian(values: Sequence, m: int) -> Jet:
    """Jacobian jet (B, n, m) of a list of n scalar jets."""
    return jm.matrix([[jm.deriv(v, k) for k in range(m)] for v in values])


# -- frames ----------------------------------------------------------------

def gram_schmidt(vectors: Sequence, gram, tol: float = 1e-12):
    """Orthonormalize jet vectors (each shape (B, m)) against the Gram matrix ``gram``."""
    out = []
    for v in vectors:
        for u in out:
            v = v - u * _dot(u, v, gram).expand(-1)
        n2 = _dot(v, v, gram)
        if np.any(jm.value_of(n2) <= tol):
            raise NotPositiveDefinite("Gram-Schmidt met a degenerate direction")
        out.append(v * jm.sqrt(n2).reciprocal().expand(-1))
    return out


def _dot(u: Jet, v: Jet, gram: Jet) -> Jet:
    return (u * jm.matvec(gram, v)).sum(axis=-1)


def check_positive_definite(g: np.ndarray, tol: float = 1e-10):
    w = np.linalg.eigvalsh(0.5 * (g + np.swapaxes(g, -1, -2)))
    if np.any(w.min(axis=-1) <= tol):
        raise NotPositiveDefinite(f"metric not positive-definite (min eigenvalue {w.min():.3e})")


def orthonormal_coframe_jets(g: Jet):
    """Gram-Schmidt of ``dx^1..dx^m`` against ``g^{-1}``; returns (coframe rows, frame columns)."""
    m = g.shape[-1]
    check_positive_definite(g.value)
    ginv = jm.inv(g)
    basis = [Jet.constant(np.broadcast_to(np.eye(m)[j], g.shape[:-2] + (m,)), g.space) for j in range(m)]
    cof = gram_schmidt(basis, ginv)
    coframe = jm.stack(cof, axis=-2)              # (B, m, m) rows are covectors
    frame = jm.matmul(ginv, jm.transpose(coframe))  # columns are dual vectors
    return coframe, frame


def orthonormal_coframe(chart: MetricChart, x) -> tuple[list[Covector], np.ndarray]:
    """Orthonormal coframe at ``x`` and the dual frame vectors (as matrix columns)."""
    x = np.asarray(x, dtype=float)
    g = chart.metric_jet(x[None, :], 0)
    coframe, frame = orthonormal_coframe_jets(g)
    cov = [Covector(row) for row in coframe.value[0]]
    return cov, frame.value[0]


def lie_bracket_jets(X: Jet, Y: Jet) -> Jet:
    """``[X, Y]^k = X^j d_j Y^k - Y^j d_j X^k`` for jets of shape (..., m)."""
    m = X.shape[-1]
    out = None
    for j in range(m):
        term = X[..., j].expand(-1) * Y.deriv(j) - Y[..., j].expand(-1) * X.deriv(j)
        out = term if out is None else out + term
    return out


def lie_bracket(X: VectorField, Y: VectorField, x) -> np.ndarray:
    if X.chart is not Y.chart:
        raise GeometryError("vector fields live on different charts")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return lie_bracket_jets(X.jets(x, 1), Y.jets(x, 1)).value.squeeze(0) if x.shape[0] == 1 \
        else lie_bracket_jets(X.jets(x, 1), Y.jets(x, 1)).value


# -- pointwise operators on FormFields ----------------------------------

def _single(result: dict, m: int, p: int, batch: bool):
    if batch:
        return result
    return MultiIndexForm(m, p, {k: float(np.asarray(v)[0]) for k, v in result.items()})


def exterior_derivative(w: FormField, x) -> MultiIndexForm | dict:
    x = np.asarray(x, dtype=float)
    batch = x.ndim == 2
    X = np.atleast_2d(x)
    m, p = w.chart.dim, w.degree
    if p >= m:
        return {} if batch else MultiIndexForm(m, m, {})
    res = form_values(form_d(w.jets(X, 1 + w.loss), m))
    return _single(res, m, p + 1, batch)


def codifferential(w: FormField, x) -> MultiIndexForm | dict:
    x = np.asarray(x, dtype=float)
    batch = x.ndim == 2
    X = np.atleast_2d(x)
    m, p = w.chart.dim, w.degree
    if p == 0:
        return {} if batch else MultiIndexForm(m, 0, {})
    order = 1 + w.loss
    coords = Jet.variables(X, order)
    g = w.chart.metric_jet(X, coords=coords)
    res = form_values(form_delta(w.jets(X, coords=coords), g))
    return _single(res, m, p - 1, batch)


def laplacian(w: FormField, x) -> MultiIndexForm | dict:
    x = np.asarray(x, dtype=float)
    batch = x.ndim == 2
    X = np.atleast_2d(x)
    order = 2 + w.loss
    coords = Jet.variables(X, order)
    g = w.chart.metric_jet(X, coords=coords)
    res = form_values(form_laplacian(w.jets(X, coords=coords), g))
    return _single(res, w.chart.dim, w.degree, batch)


def eigen_residual(w: FormField, X: np.ndarray, eigenvalue: float) -> np.ndarray:
    """``|Delta w - lambda w| / ((1 + |lambda|) |w|)`` at each point (metric norms)."""
    X = np.atleast_2d(X)
    order = 2 + w.loss
    coords = Jet.variables(X, order)
    g = w.chart.metric_jet(X, coords=coords)
    ginv = np.linalg.inv(g.value)
    form = w.jets(X, coords=coords)
    lap = form_values(form_laplacian(form, g))
    vals = form_values(form)
    diff = sub_forms(lap, {k: eigenvalue * v for k, v in vals.items()})
    return form_norm(diff, ginv) / ((1.0 + abs(eigenvalue)) * form_norm(vals, ginv))
