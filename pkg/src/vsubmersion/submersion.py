"""Riemannian submersions: split frames, the mean-curvature covector theta,
the horizontal curvature omega, the intertwining operator Xi, and the checks
built on them (intertwining identities, fiber products, conformal variation,
fiber-volume potential).

Frame indices: ``i`` runs over the vertical frame ``e_1..e_k`` and ``a, b``
over the horizontal frame ``f_1..f_n``.  In the combined frame the vertical
vectors come first, so ``f_a`` has combined index ``k + a``.

    theta   = -sum_{i,a} g([e_i, f_a], e_i) f^a
    omega   = omega_abi = 1/2 g(e_i, [f_a, f_b])
    E       = sum_{a,b,i} omega_abi ext(e^i) int(f^a) int(f^b)
    Xi      = int(theta) + E
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import exterior as ext
from . import jets as jm
from .exterior import Covector, MultiIndexForm
from .geometry import (
    FormField, GeometryError, JetForm, MetricChart, NotPositiveDefinite,
    add_forms, check_positive_definite, form_d, form_delta, form_laplacian,
    form_norm, form_values, gram_schmidt, jacobian, log_volume_density,
    pull_back_form, sub_forms,
)
from .jets import Jet
from .report import VerificationReport

log = logging.getLogger(__name__)


class SingularPointError(GeometryError):
    pass


@dataclass(frozen=True)
class SubmersionModel:
    """Total chart, base chart and projection written in jet-generic arithmetic.

    ``adapted`` models use coordinates ``(x, y)`` with ``x`` the fiber
    coordinates and ``projection(x, y) = y``; their fiber box is the first
    ``fiber_dim`` coordinate ranges of the total chart.
    """

    name: str
    total: MetricChart
    base: MetricChart
    projection: Callable[[Sequence], Sequence]
    adapted: bool = False
    fibers_minimal_expected: bool | None = None
    horizontal_integrable_expected: bool | None = None
    factors: tuple = ()
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def fiber_dim(self) -> int:
        return self.total.dim - self.base.dim

    def project(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), X.shape[:-1])
                         for v in self.projection(list(X.T))], axis=-1)

    def admissible(self, X: np.ndarray, margin: float | None = None) -> np.ndarray:
        X = np.atleast_2d(X)
        ok = self.total.admissible(X, margin)
        if np.any(ok):
            Y = self.project(X[ok])
            ok_y = np.all(np.isfinite(Y), axis=-1)
            ok_y[ok_y] = self.base.admissible(Y[ok_y], margin)
            ok = ok.copy()
            ok[ok] = ok_y
        return ok

    def sigma(self, i: int) -> "SubmersionModel":
        """Projection of a fiber product onto its i-th factor, as a model."""
        if not self.factors:
            raise GeometryError(f"{self.name} is not a fiber product")
        m1, m2 = self.factors
        k1, k2 = m1.fiber_dim, m2.fiber_dim
        if i == 1:
            proj = lambda c: list(c[:k1]) + list(c[k1 + k2:])
            target = m1.total
        elif i == 2:
            proj = lambda c: list(c[k1:k1 + k2]) + list(c[k1 + k2:])
            target = m2.total
        else:
            raise ValueError("factor index must be 1 or 2")
        return SubmersionModel(f"sigma{i}({self.name})", self.total, target, proj)


@dataclass
class SubmersionState:
    """Jets of everything the tensors need, batched over sample points."""

    model: SubmersionModel
    points: np.ndarray
    coords: list
    g: Jet
    ginv: Jet
    logvol: Jet
    y: list
    dpi: Jet        # (B, n, m)
    frame: Jet      # (B, m, m) columns e_1..e_k, f_1..f_n
    coframe: Jet    # (B, m, m) rows e^1..e^k, f^1..f^n
    theta: Jet      # (B, n) components in the f^a coframe
    omega: Jet      # (B, n, n, k)

    @property
    def k(self) -> int:
        return self.model.fiber_dim

    @property
    def n(self) -> int:
        return self.model.base.dim

    def theta_coordinates(self) -> Jet:
        """theta as a coordinate covector, shape (B, m)."""
        k = self.k
        return (self.theta.expand(-1) * self.coframe[..., k:, :]).sum(axis=-2)


@dataclass(frozen=True)
class SplitFrame:
    vertical: np.ndarray            # (m, k) columns e_i
    horizontal: np.ndarray          # (m, n) columns f_a
    vertical_coframe: np.ndarray    # (k, m) rows e^i
    horizontal_coframe: np.ndarray  # (n, m) rows f^a
    pivots: tuple[int, ...]


@dataclass(frozen=True)
class SubmersionTensors:
    theta: Covector          # in the f^a coframe
    omega: np.ndarray        # (n, n, k)
    theta_coordinates: np.ndarray


def _pivot_columns(dpi: np.ndarray) -> tuple[int, ...]:
    _, r, piv = scipy.linalg.qr(dpi, pivoting=True)
    n = dpi.shape[0]
    if abs(r[n - 1, n - 1]) < 1e-10 * max(1.0, abs(r[0, 0])):
        raise SingularPointError("projection differential is rank deficient")
    return tuple(sorted(int(p) for p in piv[:n]))


def _kernel_basis(dpi: Jet, pivots: tuple[int, ...]) -> list[Jet]:
    """Kernel vectors of dpi, one per free column, by elimination on the pivot block."""
    n, m = dpi.shape[-2], dpi.shape[-1]
    free = [j for j in range(m) if j not in pivots]
    block = jm.Jet(dpi.coeffs[..., :, list(pivots), :], dpi.space, dpi.order)
    binv = jm.inv(block)
    out = []
    for j in free:
        sol = -jm.matvec(binv, dpi[..., :, j])  # (B, n)
        comps = []
        for c in range(m):
            if c in pivots:
                comps.append(sol[..., pivots.index(c)])
            else:
                comps.append(Jet.constant(np.full(sol.shape[:-1], 1.0 if c == j else 0.0), dpi.space))
        out.append(jm.stack(comps, axis=-1))
    return out


def _vertical_frame(dpi: Jet, g: Jet, k: int) -> Jet:
    """Orthonormal vertical frame; points are grouped by pivot pattern."""
    values = dpi.value
    groups: dict = {}
    for b in range(values.shape[0]):
        groups.setdefault(_pivot_columns(values[b]), []).append(b)
    m = dpi.shape[-1]
    if len(groups) == 1:
        (piv,) = groups
        return jm.stack(gram_schmidt(_kernel_basis(dpi, piv), g), axis=-1)
    coeffs = np.zeros(values.shape[:1] + (m, k, dpi.space.size))
    order = dpi.order
    for piv, idx in groups.items():
        idx = np.array(idx)
        part = jm.stack(gram_schmidt(_kernel_basis(dpi[idx], piv), g[idx]), axis=-1)
        coeffs[idx] = part.coeffs
        order = min(order, part.order)
    return Jet(coeffs, dpi.space, order)


def _tensors_from_frame(frame: Jet, coframe: Jet, k: int):
    """theta and omega from frame fields through their Lie brackets."""
    m = frame.shape[-1]
    # T[p, A, B] = sum_j E[j, A] d_j E[p, B]  (derivative of column B along column A)
    T = None
    for j in range(m):
        term = frame[..., j, :].expand(-2).expand(-1) * frame.deriv(j).expand(-2)
        T = term if T is None else T + term
    brackets = T - T.swapaxes(-1, -2)                 # [E_A, E_B]^p
    framed = (coframe.expand(-1).expand(-1) * brackets.expand(-4)).sum(axis=-3)  # (B, C, A, B)
    n = m - k
    theta = None
    for i in range(k):
        term = framed[..., i, i, k:]
        theta = term if theta is None else theta + term
    if theta is None:
        theta = Jet.constant(np.zeros(frame.shape[:-2] + (n,)), frame.space)
    else:
        theta = -theta
    # omega[a, b, i] = 1/2 framed[i, k+a, k+b]
    omega = 0.5 * jm.Jet(np.moveaxis(framed.coeffs[..., :k, k:, k:, :], -4, -2), frame.space, framed.order)
    return theta, omega


def submersion_state(model: SubmersionModel, X: np.ndarray, order: int = jm.DEFAULT_ORDER,
                     frame_transform: Callable | None = None) -> SubmersionState:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    coords = Jet.variables(X, order)
    g = model.total.metric_jet(X, coords=coords)
    check_positive_definite(g.value)
    ginv = jm.inv(g)
    y = [c if isinstance(c, Jet) else Jet.constant(np.broadcast_to(c, X.shape[:-1]), coords[0].space)
         for c in model.projection(coords)]
    m, n, k = model.total.dim, model.base.dim, model.fiber_dim
    dpi = jacobian(y, m)
    sv = np.linalg.svd(dpi.value, compute_uv=False)
    if np.any(sv[..., -1] < 1e-10 * np.maximum(1.0, sv[..., 0])):
        raise SingularPointError(f"{model.name}: projection differential is rank deficient")
    grads = jm.matmul(ginv, jm.transpose(dpi))    # columns are gradients of the base coordinates
    horizontal = gram_schmidt([grads[..., :, a] for a in range(n)], g)
    vertical = _vertical_frame(dpi, g, k) if k else None
    cols = ([vertical[..., :, i] for i in range(k)] if k else []) + horizontal
    frame = jm.stack(cols, axis=-1)
    if frame_transform is not None:
        frame = frame_transform(coords, frame)
    coframe = jm.matmul(jm.transpose(frame), g)
    theta, omega = _tensors_from_frame(frame, coframe, k)
    return SubmersionState(model, X, coords, g, ginv, log_volume_density(g), y, dpi,
                           frame, coframe, theta, omega)


# -- pointwise public API -----------------------------------------------

def split_frame(model: SubmersionModel, z) -> SplitFrame:
    z = np.asarray(z, dtype=float)
    st = submersion_state(model, z[None, :], order=2)
    F = st.frame.value[0]
    C = st.coframe.value[0]
    k = model.fiber_dim
    return SplitFrame(F[:, :k], F[:, k:], C[:k], C[k:], _pivot_columns(st.dpi.value[0]))


def mean_curvature_theta(model: SubmersionModel, z) -> Covector:
    z = np.asarray(z, dtype=float)
    st = submersion_state(model, z[None, :], order=2)
    return Covector(st.theta.value[0])


def curvature_omega(model: SubmersionModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    st = submersion_state(model, z[None, :], order=2)
    return st.omega.value[0]


def submersion_tensors(model: SubmersionModel, X: np.ndarray, frame_transform=None) -> list[SubmersionTensors]:
    st = submersion_state(model, X, order=2, frame_transform=frame_transform)
    th, om, tc = st.theta.value, st.omega.value, st.theta_coordinates().value
    return [SubmersionTensors(Covector(th[b]), om[b], tc[b]) for b in range(th.shape[0])]


def xi_frame(theta, omega, alpha: dict, k: int, include_e: bool = True) -> dict:
    """Apply Xi to a form given in the split coframe (ring-generic coefficients).

    ``theta[a]`` and ``omega[a][b][i]`` are indexable coefficient containers.
    """
    n = len(theta)
    out: dict = {}
    for a in range(n):
        out = add_forms(out, {key: theta[a] * c for key, c in ext.basis_int(k + a + 1, alpha).items()})
    if include_e:
        # omega and int(f^a) int(f^b) are both antisymmetric in (a, b)
        for a in range(n):
            for b in range(a + 1, n):
                inner = ext.basis_int(k + a + 1, ext.basis_int(k + b + 1, alpha))
                if not inner:
                    continue
                for i in range(k):
                    w = 2.0 * omega[a][b][i]
                    piece = ext.basis_ext(i + 1, inner)
                    out = add_forms(out, {key: w * c for key, c in piece.items()})
    return out


def xi_apply(model: SubmersionModel, z, alpha: MultiIndexForm) -> MultiIndexForm:
    """Xi at ``z`` on a form written in the split coframe (e^1..e^k, f^1..f^n)."""
    if alpha.dimension != model.total.dim:
        raise GeometryError(f"form on R^{alpha.dimension} does not match the split coframe of R^{model.total.dim}")
    z = np.asarray(z, dtype=float)
    st = submersion_state(model, z[None, :], order=2)
    th = st.theta.value[0]
    om = st.omega.value[0]
    res = xi_frame(list(th), om, alpha.coeffs, model.fiber_dim)
    p = max(alpha.degree - 1, 0)
    if alpha.degree == 0:
        return MultiIndexForm(alpha.dimension, 0, {})
    return MultiIndexForm(alpha.dimension, p, res)


def _rows(mat: Jet, m_rows: int, m_cols: int):
    return [[mat[..., r, c] for c in range(m_cols)] for r in range(m_rows)]


def to_frame(st: SubmersionState, form: JetForm) -> JetForm:
    m = st.frame.shape[-1]
    return ext.pullback_coeffs(_rows(st.frame, m, m), form, m)


def to_coordinates(st: SubmersionState, form: JetForm) -> JetForm:
    m = st.frame.shape[-1]
    return ext.pullback_coeffs(_rows(st.coframe, m, m), form, m)


def xi_jets(st: SubmersionState, form: JetForm, include_e: bool = True) -> JetForm:
    """Xi on a coordinate jet form; returns coordinate components."""
    n, k = st.n, st.k
    theta = [st.theta[..., a] for a in range(n)]
    omega = [[[st.omega[..., a, b, i] for i in range(k)] for b in range(n)] for a in range(n)]
    return to_coordinates(st, xi_frame(theta, omega, to_frame(st, form), k, include_e))


def _givens_rotation(coords: list, size: int, offset: int, m: int, rng: np.random.Generator) -> list:
    """Nested m x m matrix: product of smooth Givens rotations acting on ``offset..offset+size``."""
    like = coords[0]
    one = 1.0 + 0.0 * like
    zero = 0.0 * like
    R = [[one if i == j else zero for j in range(m)] for i in range(m)]
    for i in range(offset, offset + size):
        for j in range(i + 1, offset + size):
            w = rng.standard_normal(len(coords) + 1)
            ang = w[-1] + sum(wc * c for wc, c in zip(w, coords))
            c, s = jm.cos(ang), jm.sin(ang)
            for r in range(m):
                ri, rj = R[r][i], R[r][j]
                R[r][i] = ri * c + rj * s
                R[r][j] = rj * c - ri * s
    return R


def frame_remix_residual(model: SubmersionModel, X: np.ndarray, seed: int = 0) -> np.ndarray:
    """Tensoriality of theta and omega under point-dependent rotations of the split frame.

    The frames are rotated by ``blockdiag(V(z), H(z))``; theta must keep its
    coordinate form and omega must transform as a tensor in all three slots.
    """
    X = np.atleast_2d(X)
    k, n, m = model.fiber_dim, model.base.dim, model.total.dim
    holder = {}

    def remix(coords, frame):
        rng = np.random.default_rng(seed)
        R = _givens_rotation(list(coords), k, 0, m, rng)
        R2 = _givens_rotation(list(coords), n, k, m, rng)
        rows = [[sum((R[i][t] * R2[t][j] for t in range(1, m)), R[i][0] * R2[0][j]) for j in range(m)]
                for i in range(m)]
        Rj = jm.matrix(rows)
        holder["R"] = Rj.value
        return jm.matmul(frame, Rj)

    base = submersion_state(model, X, order=2)
    mixed = submersion_state(model, X, order=2, frame_transform=remix)
    R = holder["R"]
    ginv = base.ginv.value
    dth = mixed.theta_coordinates().value - base.theta_coordinates().value
    res = np.sqrt(np.abs(np.einsum("bi,bij,bj->b", dth, ginv, dth)))
    if k and n > 1:
        V, H = R[:, :k, :k], R[:, k:, k:]
        expected = np.einsum("bpa,bqc,bjl,bpqj->bacl", H, H, V, base.omega.value)
        dom = np.abs(mixed.omega.value - expected).reshape(len(X), -1).max(axis=1)
        res = np.maximum(res, dom)
    return res


def submersion_isometry_residual(model: SubmersionModel, X: np.ndarray) -> np.ndarray:
    """Max deviation of dpi on the horizontal frame from an isometry, and of dpi e_i from 0."""
    st = submersion_state(model, X, order=2)
    dpi = st.dpi.value
    F = st.frame.value
    k = model.fiber_dim
    Y = np.stack([jm.value_of(v) for v in st.y], axis=-1)
    gY = model.base.metric_at(Y)
    push = dpi @ F[..., :, k:]
    gram = np.swapaxes(push, -1, -2) @ gY @ push
    iso = np.abs(gram - np.eye(model.base.dim)).max(axis=(-1, -2))
    vert = np.abs(dpi @ F[..., :, :k]).max(axis=(-1, -2)) if k else np.zeros(len(X))
    return np.maximum(iso, vert)


# -- intertwining identities ---------------------------------------------

IDENTITIES = ("lemma", "delta", "laplacian", "corollary", "commutation")


def _base_operator(model: SubmersionModel, phi: FormField, Y: np.ndarray, which: str, order: int) -> dict:
    coords = Jet.variables(Y, order)
    gY = model.base.metric_jet(Y, coords=coords)
    form = phi.jets(Y, coords=coords)
    if which == "delta":
        return form_values(form_delta(form, gY))
    return form_values(form_laplacian(form, gY))


def _pull_values(values: dict, dpi: np.ndarray) -> dict:
    if not values:
        return {}
    n, m = dpi.shape[-2], dpi.shape[-1]
    rows = [[dpi[..., a, c] for c in range(m)] for a in range(n)]
    return ext.pullback_coeffs(rows, values, m)


def intertwining_terms(model: SubmersionModel, phi: FormField, X: np.ndarray,
                       identity: str = "lemma", order: int = jm.DEFAULT_ORDER) -> tuple[list[tuple[dict, dict]], SubmersionState]:
    """(lhs, rhs) coordinate values for each requested identity at the points ``X``."""
    if identity not in IDENTITIES:
        raise ValueError(f"unknown identity {identity!r}; choose from {IDENTITIES}")
    if phi.chart.dim != model.base.dim:
        raise GeometryError("form does not live on the base chart")
    st = submersion_state(model, X, order + phi.loss)
    m = model.total.dim
    pulled = pull_back_form(phi.jets(None, coords=st.y), st.dpi)
    Y = np.stack([jm.value_of(v) for v in st.y], axis=-1)
    dpi = st.dpi.value
    base_order = 2 + phi.loss
    pairs = []
    if identity in ("lemma", "delta"):
        lhs = form_values(form_delta(pulled, st.g, st.ginv, st.logvol))
        rhs = add_forms(_pull_values(_base_operator(model, phi, Y, "delta", base_order), dpi),
                        form_values(xi_jets(st, pulled)))
        pairs.append((lhs, rhs))
    if identity in ("lemma", "laplacian", "corollary", "commutation"):
        lhs = form_values(form_laplacian(pulled, st.g, st.ginv, st.logvol))
        rhs = _pull_values(_base_operator(model, phi, Y, "laplacian", base_order), dpi)
        if identity in ("lemma", "laplacian"):
            dpulled = form_d(pulled, m)
            corr = add_forms(form_d(xi_jets(st, pulled), m), xi_jets(st, dpulled))
            rhs = add_forms(rhs, form_values(corr))
        elif identity == "corollary":
            if phi.degree != 0:
                raise GeometryError("the function identity needs a 0-form")
            rhs = add_forms(rhs, form_values(xi_jets(st, form_d(pulled, m), include_e=False)))
        pairs.append((lhs, rhs))
    return pairs, st


def relative_difference(lhs: dict, rhs: dict, ginv: np.ndarray) -> np.ndarray:
    scale = 1.0 + np.maximum(form_norm(lhs, ginv), form_norm(rhs, ginv))
    return form_norm(sub_forms(lhs, rhs), ginv) / scale


def intertwining_residual(model: SubmersionModel, phi: FormField, points: np.ndarray,
                          identity: str = "lemma", tolerance: float = 1e-7,
                          order: int = jm.DEFAULT_ORDER, chunk: int = 50) -> VerificationReport:
    start = time.perf_counter()
    points = np.atleast_2d(points)
    res = []
    for lo in range(0, len(points), chunk):
        X = points[lo:lo + chunk]
        pairs, st = intertwining_terms(model, phi, X, identity, order)
        ginv = st.ginv.value
        per = [relative_difference(l, r, ginv) for l, r in pairs]
        res.extend(np.max(per, axis=0).tolist())
    return VerificationReport(
        check=f"intertwining:{identity}", residuals=res, tolerance=tolerance, points=points,
        metadata={"model": model.name, "degree": phi.degree, "form": phi.name, "identity": identity},
        wall_clock=time.perf_counter() - start)


# -- fiber products -------------------------------------------------------

def _block(mat, rows, cols):
    return [[mat[r][c] for c in cols] for r in rows]


def _solve(P, Q):
    """``P^{-1} Q`` for nested lists with a symmetric positive-definite ``P``."""
    k = len(P)
    A = [list(r) for r in P]
    B = [list(r) for r in Q]
    for c in range(k):
        piv = A[c][c]
        for r in range(c + 1, k):
            f = A[r][c] / piv
            A[r] = [A[r][j] - f * A[c][j] for j in range(k)]
            B[r] = [B[r][j] - f * B[c][j] for j in range(len(B[r]))]
    X = [None] * k
    for r in range(k - 1, -1, -1):
        row = list(B[r])
        for j in range(r + 1, k):
            row = [row[t] - A[r][j] * X[j][t] for t in range(len(row))]
        X[r] = [v / A[r][r] for v in row]
    return X


def _qt_pinv_q(P, Q):
    """``Q^T P^{-1} Q``."""
    S = _solve(P, Q)
    n = len(Q[0])
    k = len(P)
    return [[sum((Q[t][a] * S[t][b] for t in range(1, k)), Q[0][a] * S[0][b]) for b in range(n)]
            for a in range(n)]


def fiber_product(m1: SubmersionModel, m2: SubmersionModel, name: str | None = None) -> SubmersionModel:
    """Fiber product of two adapted models over the same base.

    Coordinates are ``(x1, x2, y)``.  The metric keeps each factor's vertical
    metric and connection and puts the base metric on the common horizontal
    distribution::

        g = sum_i (dx_i + C_i dy)^T P_i (dx_i + C_i dy) + g_Y,   C_i = P_i^{-1} Q_i
    """
    if not (m1.adapted and m2.adapted):
        raise GeometryError("fiber products need adapted models (coordinates (x, y), projection y)")
    if m1.base is not m2.base and (m1.base.name != m2.base.name or m1.base.dim != m2.base.dim):
        raise GeometryError(f"base mismatch: {m1.base.name} vs {m2.base.name}")
    base = m1.base
    k1, k2, n = m1.fiber_dim, m2.fiber_dim, base.dim
    m = k1 + k2 + n

    def metric(c):
        x1, x2, y = list(c[:k1]), list(c[k1:k1 + k2]), list(c[k1 + k2:])
        g1 = m1.total.metric(x1 + y)
        g2 = m2.total.metric(x2 + y)
        gy = base.metric(y)
        P1 = _block(g1, range(k1), range(k1))
        Q1 = _block(g1, range(k1), range(k1, k1 + n))
        P2 = _block(g2, range(k2), range(k2))
        Q2 = _block(g2, range(k2), range(k2, k2 + n))
        H1 = _qt_pinv_q(P1, Q1)
        H2 = _qt_pinv_q(P2, Q2)
        zero = 0.0 * c[0]
        out = [[zero] * m for _ in range(m)]
        for i in range(k1):
            for j in range(k1):
                out[i][j] = P1[i][j]
            for a in range(n):
                out[i][k1 + k2 + a] = Q1[i][a]
                out[k1 + k2 + a][i] = Q1[i][a]
        for i in range(k2):
            for j in range(k2):
                out[k1 + i][k1 + j] = P2[i][j]
            for a in range(n):
                out[k1 + i][k1 + k2 + a] = Q2[i][a]
                out[k1 + k2 + a][k1 + i] = Q2[i][a]
        for a in range(n):
            for b in range(n):
                out[k1 + k2 + a][k1 + k2 + b] = gy[a][b] + H1[a][b] + H2[a][b]
        return out

    t1, t2 = m1.total, m2.total
    chart = MetricChart(
        name=f"Z({t1.name},{t2.name})", dim=m, metric=metric,
        lower=tuple(t1.lower[:k1]) + tuple(t2.lower[:k2]) + tuple(t1.lower[k1:]),
        upper=tuple(t1.upper[:k1]) + tuple(t2.upper[:k2]) + tuple(t1.upper[k1:]),
        margin=min(t1.margin, t2.margin))
    return SubmersionModel(
        name=name or f"Z({m1.name},{m2.name})", total=chart, base=base,
        projection=lambda c: list(c[k1 + k2:]), adapted=True,
        fibers_minimal_expected=None, horizontal_integrable_expected=None,
        factors=(m1, m2),
        metadata={"horizontal-normalization": "base metric on the common horizontal distribution"})


def theta_additivity_residual(fp: SubmersionModel, points: np.ndarray) -> np.ndarray:
    """``|theta_Z - sigma_1^* theta_1 - sigma_2^* theta_2|`` (metric norm) at each point."""
    m1, m2 = fp.factors
    k1, k2 = m1.fiber_dim, m2.fiber_dim
    X = np.atleast_2d(points)
    st = submersion_state(fp, X, order=2)
    theta = st.theta_coordinates().value
    total = np.zeros_like(theta)
    for idx, fac in ((1, m1), (2, m2)):
        sel = (list(range(k1)) if idx == 1 else list(range(k1, k1 + k2))) + list(range(k1 + k2, fp.total.dim))
        sf = submersion_state(fac, X[:, sel], order=2)
        total[:, sel] += sf.theta_coordinates().value
    diff = theta - total
    ginv = st.ginv.value
    return np.sqrt(np.einsum("bi,bij,bj->b", diff, ginv, diff))


# -- conformal variation and the fiber-volume potential -----------------

def conformal_variation(model: SubmersionModel, psi: Callable[[Sequence], object], t: float) -> SubmersionModel:
    """Scale the vertical metric by ``psi(pi(z))**(2t)``; the horizontal metric is unchanged."""
    if not model.adapted:
        raise GeometryError("conformal variation needs an adapted model")
    k, n = model.fiber_dim, model.base.dim
    m = model.total.dim

    def metric(c):
        g = model.total.metric(c)
        y = list(c[k:])
        p = psi(y)
        pv = jm.value_of(p)
        if np.any(pv <= 0):
            raise GeometryError("psi must be positive")
        s = jm.exp(2.0 * t * jm.log(p))
        gy = model.base.metric(y)
        out = [[s * g[r][c_] for c_ in range(m)] for r in range(m)]
        for a in range(n):
            for b in range(n):
                out[k + a][k + b] = out[k + a][k + b] + (1.0 - s) * gy[a][b]
        return out

    chart = replace(model.total, name=f"{model.total.name}[t={t:g}]", metric=metric)
    return replace(model, name=f"{model.name}[t={t:g}]", total=chart,
                   metadata={**model.metadata, "conformal-t": t})


def fiber_volume_jets(model: SubmersionModel, Y: np.ndarray, nodes: int = 256, order: int = 2) -> Jet:
    """Jets in base coordinates of ``psi(y) = int_X sqrt(det g_xx(x, y)) dx`` (periodic trapezoid rule)."""
    if not model.adapted:
        raise GeometryError("fiber volume needs an adapted model")
    k = model.fiber_dim
    lo = np.asarray(model.total.lower[:k])
    hi = np.asarray(model.total.upper[:k])
    grids = [lo[i] + (hi[i] - lo[i]) * np.arange(nodes) / nodes for i in range(k)]
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, k)
    weight = np.prod(hi - lo) / len(mesh)
    Y = np.atleast_2d(Y)
    ycoords = Jet.variables(Y[:, None, :], order)  # (B, 1)
    space = ycoords[0].space
    xcoords = [Jet.constant(mesh[None, :, i], space) for i in range(k)]
    g = model.total.metric(xcoords + ycoords)
    P = jm.matrix([[g[i][j] if isinstance(g[i][j], Jet) else Jet.constant(np.broadcast_to(g[i][j], (len(Y), len(mesh))), space)
                    for j in range(k)] for i in range(k)])
    vol = jm.sqrt(jm.det(P))
    # the integrand may not depend on x at all; broadcast onto the mesh before summing
    vol = vol * Jet.constant(np.ones((len(Y), len(mesh))), space)
    return vol.sum(axis=-1) * weight


def minimality_potential_check(model: SubmersionModel, points: np.ndarray, psi: Callable | None = None,
                               nodes: int = 256, tolerance: float = 1e-8) -> VerificationReport:
    """Residual of ``theta + pi^* d_Y ln psi`` with ``psi`` closed form or by quadrature."""
    start = time.perf_counter()
    X = np.atleast_2d(points)
    st = submersion_state(model, X, order=2)
    omega_max = float(np.abs(st.omega.value).max()) if st.omega.shape[-1] else 0.0
    theta = st.theta_coordinates().value
    Y = np.stack([jm.value_of(v) for v in st.y], axis=-1)
    meta = {"model": model.name, "omega-max": omega_max}
    if psi is None:
        vol = fiber_volume_jets(model, Y, nodes)
        coarse = fiber_volume_jets(model, Y, nodes // 2).value
        drift = float(np.max(np.abs(vol.value - coarse) / np.abs(vol.value)))
        meta.update({"psi": "quadrature", "nodes": nodes, "quadrature-drift": drift,
                     "quadrature-converged": drift < 1e-10})
        if drift >= 1e-10:
            log.warning("fiber-volume quadrature drift %.3e at %d nodes", drift, nodes)
    else:
        yc = Jet.variables(Y, 2)
        vol = psi(yc)
        meta["psi"] = "closed-form"
    dlog = jm.log(vol)
    grad = np.stack([dlog.deriv(a).value for a in range(model.base.dim)], axis=-1)
    pulled = np.einsum("ba,bam->bm", grad, st.dpi.value)
    diff = theta + pulled
    ginv = st.ginv.value
    norm = lambda v: np.sqrt(np.einsum("bi,bij,bj->b", v, ginv, v))
    res = norm(diff) / (1.0 + norm(theta))
    return VerificationReport("minimality-potential", res.tolist(), tolerance, X, metadata=meta,
                              wall_clock=time.perf_counter() - start)


def volume_element_theta_residual(model: SubmersionModel, points: np.ndarray) -> np.ndarray:
    """Pointwise ``theta + d_Y ln sqrt(det g_xx)`` on an adapted model with integrable horizontal distribution."""
    if not model.adapted:
        raise GeometryError("needs an adapted model")
    X = np.atleast_2d(points)
    st = submersion_state(model, X, order=2)
    k = model.fiber_dim
    coords = Jet.variables(X, 2)
    g = model.total.metric_jet(X, coords=coords)
    P = Jet(g.coeffs[..., :k, :k, :], g.space, g.order)
    lg = jm.log(jm.sqrt(jm.det(P)))
    grad = np.stack([lg.deriv(j).value for j in range(model.total.dim)], axis=-1)
    grad[:, :k] = 0.0  # d_Y only
    theta = st.theta_coordinates().value
    diff = theta + grad
    ginv = st.ginv.value
    return np.sqrt(np.einsum("bi,bij,bj->b", diff, ginv, diff))
