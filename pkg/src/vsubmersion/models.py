"""Closed-form charts, submersions and eigenforms.

Complex coordinates are interleaved: ``z_k = X[2k] + i X[2k+1]`` on the
ambient space of ``S^{2n+1}`` and ``v_k = y[2k] + i y[2k+1]`` on the affine
chart of ``CP^n``.  The Fubini-Study metric is normalized so that the Hopf map
is a Riemannian submersion; for ``n = 1`` the base is the sphere of radius 1/2.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import exterior as ext
from . import jets as jm
from .geometry import AffineSubspace, FormField, GeometryError, MetricChart, jacobian
from .jets import Jet
from . import submersion as S
from .submersion import SubmersionModel, fiber_product

TWO_PI = 2.0 * math.pi


def _zero(x):
    return 0.0 * x


def _sq(u: Sequence):
    total = u[0] * u[0]
    for c in u[1:]:
        total = total + c * c
    return total


def nested_det(mat):
    """Determinant of a small nested-list matrix over any commutative ring."""
    n = len(mat)
    if n == 1:
        return mat[0][0]
    total = None
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in mat[1:]]
        term = mat[0][j] * nested_det(minor)
        if j % 2:
            term = -term
        total = term if total is None else total + term
    return total


# -- spheres -------------------------------------------------------------

def stereographic_embedding(u: Sequence, radius: float = 1.0, south: bool = False):
    s = 1.0 + _sq(u)
    last = (1.0 - _sq(u)) if south else (_sq(u) - 1.0)
    return [radius * 2.0 * c / s for c in u] + [radius * last / s]


def _uniform_sphere(m: int, south: bool = False):
    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        X = rng.standard_normal((count, m + 1))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        denom = (1.0 + X[:, m]) if south else (1.0 - X[:, m])
        return X[:, :m] / denom[:, None]
    return sampler


def sphere_model(m: int, radius: float = 1.0, south: bool = False, half_width: float = 1.5) -> MetricChart:
    """Round ``S^m`` of the given radius in a stereographic chart."""
    if m < 1 or radius <= 0:
        raise GeometryError("need m >= 1 and a positive radius")

    def metric(u):
        s = 1.0 + _sq(u)
        c = 4.0 * radius * radius / (s * s)
        zero = _zero(c)
        return [[c if i == j else zero for j in range(m)] for i in range(m)]

    return MetricChart(
        name=f"S^{m}(r={radius:g})", dim=m, metric=metric,
        lower=(-half_width,) * m, upper=(half_width,) * m,
        embedding=lambda u: stereographic_embedding(u, radius, south),
        volume_sampler=_uniform_sphere(m, south))


def embedding_metric(chart: MetricChart, X: np.ndarray, order: int = 1) -> np.ndarray:
    """Metric pulled back from the chart's embedding (the independent route)."""
    if chart.embedding is None:
        raise GeometryError(f"{chart.name} has no embedding")
    coords = Jet.variables(np.atleast_2d(X), order)
    E = chart.embedding(coords)
    J = np.stack([np.stack([jm.deriv(e, k).value * np.ones(len(np.atleast_2d(X)))
                            for k in range(chart.dim)], axis=-1) for e in E], axis=-2)
    return np.swapaxes(J, -1, -2) @ J


def scalar_curvature_2d(chart: MetricChart, x) -> float:
    """Gaussian curvature of a 2-dimensional chart at ``x`` (Brioschi formula via Christoffel symbols)."""
    if chart.dim != 2:
        raise GeometryError("Gaussian curvature needs a 2-dimensional chart")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    coords = Jet.variables(X, 3)
    g = chart.metric_jet(X, coords=coords)
    ginv = jm.inv(g)
    dg = [g.deriv(k) for k in range(2)]
    # Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
    gamma = [[[None] * 2 for _ in range(2)] for _ in range(2)]
    for k in range(2):
        for i in range(2):
            for j in range(2):
                acc = None
                for l in range(2):
                    t = ginv[..., k, l] * (dg[i][..., j, l] + dg[j][..., i, l] - dg[l][..., i, j])
                    acc = t if acc is None else acc + t
                gamma[k][i][j] = 0.5 * acc
    # R^l_{ijk} = d_j Gamma^l_ik - d_k Gamma^l_ij + Gamma^l_jp Gamma^p_ik - Gamma^l_kp Gamma^p_ij
    def riem(l, i, j, k):
        r = gamma[l][i][k].deriv(j) - gamma[l][i][j].deriv(k)
        for p in range(2):
            r = r + gamma[l][j][p] * gamma[p][i][k] - gamma[l][k][p] * gamma[p][i][j]
        return r
    # R_{1212} = g_{1l} R^l_{212}
    r1212 = g[..., 0, 0] * riem(0, 1, 0, 1) + g[..., 0, 1] * riem(1, 1, 0, 1)
    return float((r1212 / jm.det(g)).value[0])


def volume_form_field(chart: MetricChart, name: str = "vol") -> FormField:
    m = chart.dim

    def fn(u):
        return {tuple(range(1, m + 1)): jm.sqrt(nested_det(chart.metric(u)))}
    return FormField(chart, m, fn, name=name)


def nu2(radius: float = 0.5) -> FormField:
    """Area form of the sphere of the given radius in its stereographic chart."""
    chart = sphere_model(2, radius)
    return FormField(chart, 2, lambda u: {(1, 2): 4.0 * radius * radius / (1.0 + _sq(u)) ** 2},
                     name=f"nu2(r={radius:g})")


def sphere_harmonic(chart: MetricChart, poly: Callable[[Sequence], object], name: str = "Y") -> FormField:
    """Restriction of an ambient polynomial to a sphere chart (through its embedding)."""
    if chart.embedding is None:
        raise GeometryError("sphere harmonics need an embedded chart")
    return FormField(chart, 0, lambda u: {(): poly(chart.embedding(u))}, name=name)


def sphere_eigenvalue(k: int, m: int, radius: float = 1.0) -> float:
    return k * (k + m - 1) / radius ** 2


# Harmonic homogeneous polynomials on R^{m+1}, keyed by degree.
HARMONIC_POLYNOMIALS: dict[int, list[tuple[str, Callable, int]]] = {
    1: [("x1", lambda X: X[0], 1), ("x2+x3", lambda X: X[1] + X[-1], 2)],
    2: [("x1*x2", lambda X: X[0] * X[1], 2), ("x1^2-x2^2", lambda X: X[0] * X[0] - X[1] * X[1], 2)],
    3: [("x1*x2*x3", lambda X: X[0] * X[1] * X[2], 3),
        ("x1^3-3x1x2^2", lambda X: X[0] ** 3 - 3.0 * X[0] * X[1] * X[1], 2)],
}  # name, polynomial, minimal sphere dimension m needed (ambient R^{m+1})


# -- complex projective space ----------------------------------------------

def fubini_study_metric(v: Sequence):
    """Real form of the Fubini-Study metric in the affine chart (interleaved coordinates)."""
    n = len(v) // 2
    a = v[0::2]
    b = v[1::2]
    s = 1.0 + _sq(list(v))
    s2 = s * s
    g = [[None] * (2 * n) for _ in range(2 * n)]
    for j in range(n):
        for k in range(n):
            A = -(a[j] * a[k] + b[j] * b[k]) / s2
            if j == k:
                A = A + 1.0 / s
            B = -(b[j] * a[k] - a[j] * b[k]) / s2
            g[2 * j][2 * k] = A
            g[2 * j + 1][2 * k + 1] = A
            g[2 * j][2 * k + 1] = -B
            g[2 * j + 1][2 * k] = B
    return g


def cpn_chart(n: int, half_width: float = 3.0) -> MetricChart:
    return MetricChart(name=f"CP^{n}", dim=2 * n, metric=fubini_study_metric,
                       lower=(-half_width,) * (2 * n), upper=(half_width,) * (2 * n))


def kahler_form(chart: MetricChart) -> FormField:
    """``mu_2(X, Y) = g(JX, Y)`` with ``J d/da_k = d/db_k``."""
    m = chart.dim

    def fn(v):
        g = chart.metric(v)
        out = {}
        for i in range(m):
            for j in range(i + 1, m):
                # (J^T g)_{ij}: column i of J picks row b_k (i = a_k) or -a_k (i = b_k)
                out[(i + 1, j + 1)] = g[i + 1][j] if i % 2 == 0 else -g[i - 1][j]
        return out
    return FormField(chart, 2, fn, name="mu2")


def form_power(form: FormField, p: int) -> FormField:
    if p < 1:
        raise ValueError("power must be >= 1")

    def fn(v):
        base = form.fn(v)
        out = dict(base)
        for _ in range(p - 1):
            out = ext.wedge_coeffs(out, base)
        return out
    return FormField(form.chart, form.degree * p, fn, name=f"{form.name}^{p}", loss=form.loss)


# -- Hopf fibrations -------------------------------------------------------

def _hopf_projection_stereo(n: int):
    def proj(u):
        # z_k / z_n with the common 1/(1+|u|^2) factor cancelled
        wr = 2.0 * u[2 * n]
        wi = _sq(u) - 1.0
        w2 = wr * wr + wi * wi
        out = []
        for k in range(n):
            xr, xi = 2.0 * u[2 * k], 2.0 * u[2 * k + 1]
            out.append((xr * wr + xi * wi) / w2)
            out.append((xi * wr - xr * wi) / w2)
        return out
    return proj


def hopf_ambient(z: np.ndarray, n: int = 1) -> np.ndarray:
    """``(2 z1 conj(z2), |z1|^2 - |z2|^2)`` in R^3 for n = 1 (ambient Hopf map)."""
    if n != 1:
        raise GeometryError("the ambient Hopf map is implemented for S^3")
    z = np.atleast_2d(z)
    z1 = z[:, 0] + 1j * z[:, 1]
    z2 = z[:, 2] + 1j * z[:, 3]
    w = 2.0 * z1 * np.conj(z2)
    return np.stack([w.real, w.imag, np.abs(z1) ** 2 - np.abs(z2) ** 2], axis=-1)


def _last_factor_modulus(n: int):
    def avoid(U: np.ndarray) -> np.ndarray:
        X = np.stack([np.asarray(c) for c in stereographic_embedding(list(U.T))], axis=-1)
        return np.hypot(X[:, 2 * n], X[:, 2 * n + 1])
    return avoid


def hopf_model(n: int = 1, chart: str = "stereographic", check: bool = True) -> SubmersionModel:
    """Hopf fibration ``S^{2n+1} -> CP^n``; ``chart`` is 'stereographic' or 'adapted'.

    With ``check`` the Riemannian-submersion property is verified at a fixed
    sample of points and a failure raises.
    """
    model = _hopf_model(n, chart)
    if check:
        verify_submersion(model)
    return model


def verify_submersion(model: SubmersionModel, count: int = 20, tol: float = 1e-9) -> float:
    rng = np.random.default_rng(12345)
    lo, hi = np.asarray(model.total.lower), np.asarray(model.total.upper)
    X = rng.uniform(lo, hi, (8 * count, len(lo)))
    X = X[model.admissible(X)][:count]
    worst = float(S.submersion_isometry_residual(model, X).max())
    if not worst <= tol:
        raise GeometryError(f"{model.name} is not a Riemannian submersion (residual {worst:.3e})")
    return worst


def _hopf_model(n: int, chart: str) -> SubmersionModel:
    if n < 1:
        raise GeometryError("n must be >= 1")
    base = cpn_chart(n)
    if chart == "stereographic":
        sphere = sphere_model(2 * n + 1, 1.0)
        total = MetricChart(name=f"S^{2 * n + 1}", dim=2 * n + 1, metric=sphere.metric,
                            lower=sphere.lower, upper=sphere.upper,
                            avoid=_last_factor_modulus(n), embedding=sphere.embedding,
                            volume_sampler=sphere.volume_sampler)
        return SubmersionModel(f"hopf{n}", total, base, _hopf_projection_stereo(n),
                               fibers_minimal_expected=True, horizontal_integrable_expected=False,
                               metadata={"chart": "stereographic"})
    if chart == "adapted":
        m = 2 * n + 1

        def metric(c):
            t, v = c[0], list(c[1:])
            s = 1.0 + _sq(v)
            conn = [1.0 + _zero(s)]
            for k in range(n):
                conn += [-v[2 * k + 1] / s, v[2 * k] / s]
            fs = fubini_study_metric(v)
            out = [[conn[i] * conn[j] for j in range(m)] for i in range(m)]
            for i in range(2 * n):
                for j in range(2 * n):
                    out[1 + i][1 + j] = out[1 + i][1 + j] + fs[i][j]
            return out

        def embedding(c):
            t, v = c[0], list(c[1:])
            r = 1.0 / jm.sqrt(1.0 + _sq(v)) if isinstance(v[0], Jet) else 1.0 / np.sqrt(1.0 + _sq(v))
            ct, st = jm.cos(t), jm.sin(t)
            out = []
            for k in range(n):
                a, b = v[2 * k], v[2 * k + 1]
                out += [r * (ct * a - st * b), r * (st * a + ct * b)]
            out += [r * ct, r * st]
            return out

        total = MetricChart(name=f"S^{m}-adapted", dim=m, metric=metric,
                            lower=(0.0,) + base.lower, upper=(TWO_PI,) + base.upper,
                            embedding=embedding)
        return SubmersionModel(f"hopf{n}-adapted", total, base, lambda c: list(c[1:]), adapted=True,
                               fibers_minimal_expected=True, horizontal_integrable_expected=False,
                               metadata={"chart": "adapted"})
    raise GeometryError(f"unknown Hopf chart {chart!r}")


# -- tori and products -----------------------------------------------------

def flat_chart(m: int, name: str = "T", period: float = TWO_PI) -> MetricChart:
    def metric(c):
        one = 1.0 + _zero(c[0])
        zero = _zero(c[0])
        return [[one if i == j else zero for j in range(m)] for i in range(m)]
    return MetricChart(name=f"{name}^{m}", dim=m, metric=metric, lower=(0.0,) * m, upper=(period,) * m)


def warped_torus_model(f: Callable[[Sequence], object] | None = None, base_dim: int = 1,
                       name: str = "warped-torus") -> SubmersionModel:
    """``ds^2 = f(y)^2 dx^2 + |dy|^2`` on ``S^1 x T^base_dim``, projecting to ``y``."""
    if f is None:
        f = lambda y: 2.0 + jm.sin(y[0])
    base = flat_chart(base_dim)
    m = 1 + base_dim

    def metric(c):
        fy = f(list(c[1:]))
        if np.any(jm.value_of(fy) <= 0):
            raise GeometryError("warping function must be positive")
        one = 1.0 + _zero(c[0])
        zero = _zero(c[0])
        out = [[one if i == j else zero for j in range(m)] for i in range(m)]
        out[0][0] = fy * fy
        return out

    total = MetricChart(name=f"{name}-total", dim=m, metric=metric, lower=(0.0,) * m, upper=(TWO_PI,) * m)
    return SubmersionModel(name, total, base, lambda c: list(c[1:]), adapted=True,
                           fibers_minimal_expected=None, horizontal_integrable_expected=True,
                           metadata={"warping": "f(y)", "fiber-volume": lambda y: TWO_PI * f(list(y))})


def flat_torus_model(fiber_dim: int = 1, base_dim: int = 2) -> SubmersionModel:
    base = flat_chart(base_dim)
    total = flat_chart(fiber_dim + base_dim)
    return SubmersionModel("flat-torus", total, base, lambda c: list(c[fiber_dim:]), adapted=True,
                           fibers_minimal_expected=True, horizontal_integrable_expected=True)


def product_model(fiber: MetricChart, base: MetricChart, name: str | None = None) -> SubmersionModel:
    k, n = fiber.dim, base.dim
    m = k + n

    def metric(c):
        gf = fiber.metric(list(c[:k]))
        gb = base.metric(list(c[k:]))
        zero = _zero(c[0])
        out = [[zero] * m for _ in range(m)]
        for i in range(k):
            for j in range(k):
                out[i][j] = gf[i][j]
        for a in range(n):
            for b in range(n):
                out[k + a][k + b] = gb[a][b]
        return out

    total = MetricChart(name=f"{fiber.name}x{base.name}", dim=m, metric=metric,
                        lower=fiber.lower + base.lower, upper=fiber.upper + base.upper)
    return SubmersionModel(name or f"product({fiber.name},{base.name})", total, base,
                           lambda c: list(c[k:]), adapted=True,
                           fibers_minimal_expected=True, horizontal_integrable_expected=True)


def product_with_circle(model: SubmersionModel) -> SubmersionModel:
    """``Z x S^1 -> Y x S^1`` with the identity on the circle factor."""
    circle = flat_chart(1, "S")

    def times_circle(chart: MetricChart) -> MetricChart:
        m = chart.dim + 1

        def metric(c):
            g = chart.metric(list(c[:-1]))
            zero = _zero(c[0])
            out = [list(r) + [zero] for r in g] + [[zero] * (m - 1) + [1.0 + zero]]
            return out
        avoid = None
        if chart.avoid is not None:
            avoid = lambda X, a=chart.avoid: a(X[:, :-1])
        return MetricChart(name=f"{chart.name}xS1", dim=m, metric=metric,
                           lower=chart.lower + circle.lower, upper=chart.upper + circle.upper,
                           avoid=avoid)

    proj = model.projection
    return SubmersionModel(f"{model.name}xS1", times_circle(model.total), times_circle(model.base),
                           lambda c: list(proj(list(c[:-1]))) + [c[-1]],
                           fibers_minimal_expected=model.fibers_minimal_expected,
                           horizontal_integrable_expected=model.horizontal_integrable_expected)


# -- pulled-back forms and the catalog -------------------------------------

def pullback_field(model: SubmersionModel, phi: FormField) -> FormField:
    """``pi^* phi`` as a field on the total chart (coefficients composed through the projection)."""
    m = model.total.dim

    def fn(c):
        y = model.projection(c)
        coeffs = phi.fn(y)
        dpi = jacobian(y, m)
        rows = [[dpi[..., a, j] for j in range(m)] for a in range(len(y))]
        return ext.pullback_coeffs(rows, coeffs, m)
    return FormField(model.total, phi.degree, fn, name=f"pi*{phi.name}", loss=phi.loss + 1)


def base_field(model: SubmersionModel, degree: int, fn, name: str) -> FormField:
    return FormField(model.base, degree, fn, name=name)


def hopf_nu2(model: SubmersionModel) -> FormField:
    """Area form of the radius-1/2 base sphere in the affine chart of CP^1."""
    if model.base.dim != 2:
        raise GeometryError("nu2 lives on a 2-dimensional base")
    return base_field(model, 2, lambda v: {(1, 2): 1.0 / (1.0 + _sq(v)) ** 2}, "nu2")


def height_function(model: SubmersionModel) -> FormField:
    """Ambient coordinate x3 of the unit sphere, in the CP^1 chart: degree-1 harmonic on S^2(1/2)."""
    return base_field(model, 0, lambda v: {(): (_sq(v) - 1.0) / (_sq(v) + 1.0)}, "Y1")


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    model: SubmersionModel
    form: FormField
    degree: int
    base_eigenvalue: float
    total_eigenvalue: float
    provenance: str

    def total_form(self) -> FormField:
        return pullback_field(self.model, self.form)

    def to_dict(self) -> dict:
        return {"name": self.name, "model": self.model.name, "form": self.form.name,
                "degree": self.degree, "base-eigenvalue": self.base_eigenvalue,
                "total-eigenvalue": self.total_eigenvalue, "provenance": self.provenance}


def _circle_shifted(model: SubmersionModel, phi: FormField) -> FormField:
    return FormField(model.base, phi.degree,
                     lambda c: {k: v * jm.cos(c[-1]) for k, v in phi.fn(list(c[:-1])).items()},
                     name=f"{phi.name}*cos(s)")


def eigenform_catalog() -> list[CatalogEntry]:
    h1 = hopf_model(1)
    h2 = hopf_model(2)
    mu2 = kahler_form(h2.base)
    h1a = hopf_model(1, "adapted")
    fp = fiber_product(h1a, h1a, name="Z(hopf1,hopf1)")
    hc = product_with_circle(h1)
    return [
        CatalogEntry("hopf1-nu2", h1, hopf_nu2(h1), 2, 0.0, 4.0, "PAPER"),
        CatalogEntry("hopf2-mu2", h2, mu2, 2, 0.0, 8.0, "PAPER"),
        CatalogEntry("hopf2-mu2^2", h2, form_power(mu2, 2), 4, 0.0, 8.0, "PAPER"),
        CatalogEntry("hopf1-Y1", h1, height_function(h1), 0, 8.0, 8.0, "DERIVED"),
        CatalogEntry("fiber-product-hopf1-nu2", fp, hopf_nu2(fp), 2, 0.0, 8.0, "DERIVED"),
        CatalogEntry("hopf1xS1-nu2cos", hc, _circle_shifted(hc, hopf_nu2(h1)), 2, 1.0, 5.0, "DERIVED"),
    ]


def catalog_by_name() -> dict[str, CatalogEntry]:
    return {e.name: e for e in eigenform_catalog()}


def named_forms(model) -> dict[str, FormField]:
    """Named fields for a model from this module (a SubmersionModel or a sphere chart)."""
    if isinstance(model, MetricChart):
        if model.embedding is None or not model.name.startswith("S^"):
            raise GeometryError(f"no named forms for chart {model.name}")
        out = {"vol": volume_form_field(model)}
        for k, polys in HARMONIC_POLYNOMIALS.items():
            for label, poly, need in polys:
                if model.dim >= need:
                    out[f"Y{k}:{label}"] = sphere_harmonic(model, poly, f"Y{k}:{label}")
        return out
    if not isinstance(model, SubmersionModel):
        raise GeometryError("unknown model")
    out = {"vol-base": volume_form_field(model.base), "vol-total": volume_form_field(model.total)}
    if model.name.startswith("hopf") or model.factors:
        if model.base.dim == 2:
            out["nu2"] = hopf_nu2(model)
            out["Y1"] = height_function(model)
        if model.base.name.startswith("CP"):
            mu = kahler_form(model.base)
            out["mu2"] = mu
            for p in range(2, model.base.dim // 2 + 1):
                out[f"mu2^{p}"] = form_power(mu, p)
    return out


def random_polynomial_form(chart: MetricChart, degree: int, rng: np.random.Generator,
                           poly_degree: int = 2, name: str = "random") -> FormField:
    """Form whose coefficients are random polynomials of total degree <= ``poly_degree``."""
    m = chart.dim
    exps = [e for d in range(poly_degree + 1)
            for e in itertools.product(range(d + 1), repeat=m) if sum(e) == d]
    keys = ext.increasing_tuples(m, degree)
    table = {k: rng.standard_normal(len(exps)) for k in keys}

    def fn(c):
        out = {}
        for k in keys:
            acc = 0.0 * c[0]
            for w, e in zip(table[k], exps):
                term = w + 0.0 * c[0]
                for var, power in enumerate(e):
                    for _ in range(power):
                        term = term * c[var]
                acc = acc + term
            out[k] = acc
        return out
    return FormField(chart, degree, fn, name=f"{name}(p={degree})")
