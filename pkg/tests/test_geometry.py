import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from vsubmersion import jets as jm
from vsubmersion import models as M
from vsubmersion.exterior import MultiIndexForm
from vsubmersion.geometry import (AffineSubspace, FormField, GeometryError, MetricChart, NotPositiveDefinite,
                                  VectorField, codifferential, eigen_residual, exterior_derivative, form_d,
                                  form_delta, form_laplacian, form_norm, form_values, laplacian, lie_bracket,
                                  orthonormal_coframe, sub_forms)
from vsubmersion.jets import Jet


def const_metric(G):
    G = np.asarray(G, dtype=float)
    m = len(G)
    return MetricChart("const", m, lambda c: [[G[i, j] + 0.0 * c[0] for j in range(m)] for i in range(m)],
                       (-2.0,) * m, (2.0,) * m)


def random_metric_chart(m, seed):
    """``g = I + A(x) A(x)^T`` with affine ``A``: a generic, non-conformal metric."""
    rng = np.random.default_rng(seed)
    W = 0.4 * rng.standard_normal((m, m, m + 1))

    def metric(c):
        A = [[W[i, j, m] + sum(W[i, j, k] * c[k] for k in range(m)) for j in range(m)] for i in range(m)]
        return [[(1.0 if i == j else 0.0) + sum(A[i][t] * A[j][t] for t in range(m)) for j in range(m)]
                for i in range(m)]
    return MetricChart(f"random{m}", m, metric, (-1.0,) * m, (1.0,) * m)


def norm(values, chart, X):
    return form_norm(values, np.linalg.inv(chart.metric_at(X)))


# -- charts and frames -------------------------------------------------------

def test_coframe_euclidean():
    cof, frame = orthonormal_coframe(const_metric(np.eye(2)), [0.1, 0.2])
    np.testing.assert_allclose([c.components for c in cof], np.eye(2), atol=1e-15)


def test_coframe_diagonal():
    cof, frame = orthonormal_coframe(const_metric(np.diag([4.0, 9.0])), [0.0, 0.0])
    np.testing.assert_allclose([c.components for c in cof], np.diag([2.0, 3.0]), atol=1e-15)


def test_coframe_sphere_origin():
    cof, _ = orthonormal_coframe(M.sphere_model(2), [0.0, 0.0])
    np.testing.assert_allclose([c.components for c in cof], 2.0 * np.eye(2), atol=1e-15)


@given(st.integers(2, 4), st.integers(0, 50))
def test_coframe_orthonormal(m, seed):
    chart = random_metric_chart(m, seed)
    x = np.random.default_rng(seed).uniform(-0.9, 0.9, m)
    cof, frame = orthonormal_coframe(chart, x)
    C = np.array([c.components for c in cof])
    ginv = np.linalg.inv(chart.metric_at(x[None])[0])
    np.testing.assert_allclose(C @ ginv @ C.T, np.eye(m), atol=1e-12)
    np.testing.assert_allclose(C @ frame, np.eye(m), atol=1e-12)
    # Gram-Schmidt in index order: the first covector is a multiple of dx^1
    np.testing.assert_allclose(C[0, 1:], 0.0, atol=1e-14)


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        orthonormal_coframe(const_metric([[1.0, 2.0], [2.0, 1.0]]), [0.0, 0.0])


def test_singular_excluded_set_needs_codim_two():
    plane = AffineSubspace(np.zeros(3), np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), singular=True)
    with pytest.raises(GeometryError):
        MetricChart("bad", 3, lambda c: None, (-1,) * 3, (1,) * 3, excluded=(plane,))
    line = AffineSubspace(np.zeros(3), np.array([[0.0, 0.0, 1.0]]), singular=True)
    chart = const_metric(np.eye(3))
    chart = MetricChart("ok", 3, chart.metric, (-1,) * 3, (1,) * 3, excluded=(line,))
    X = np.array([[0.5, 0.0, 0.2], [0.001, 0.001, 0.3]])
    assert chart.admissible(X).tolist() == [True, False]


# -- brackets -------------------------------------------------------------------

def test_bracket_coordinate_fields():
    chart = const_metric(np.eye(2))
    d1 = VectorField(chart, lambda c: [1.0 + 0 * c[0], 0.0 * c[0]])
    d2 = VectorField(chart, lambda c: [0.0 * c[0], 1.0 + 0 * c[0]])
    np.testing.assert_allclose(lie_bracket(d1, d2, [0.3, 0.4]), 0.0)


def test_bracket_product_rule():
    chart = const_metric(np.eye(2))
    X = VectorField(chart, lambda c: [c[0] * c[0], 0.0 * c[0]])
    Y = VectorField(chart, lambda c: [1.0 + 0 * c[0], 0.0 * c[0]])
    np.testing.assert_allclose(lie_bracket(X, Y, [1.0, 0.0]), [-2.0, 0.0])


def test_bracket_rotation_matches_finite_differences():
    chart = const_metric(np.eye(2))
    rot = lambda c: [-c[1], c[0]]
    d1 = lambda c: [1.0 + 0 * c[0], 0.0 * c[0]]
    X, Y = VectorField(chart, rot), VectorField(chart, d1)
    x = np.array([0.3, -0.8])
    h = 1e-5
    Xv = lambda p: np.array([-p[1], p[0]])
    Yv = lambda p: np.array([1.0, 0.0])
    J = lambda F: np.stack([(F(x + h * e) - F(x - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
    fd = J(Yv) @ Xv(x) - J(Xv) @ Yv(x)
    np.testing.assert_allclose(lie_bracket(X, Y, x), fd, atol=1e-6)
    np.testing.assert_allclose(lie_bracket(X, Y, x), [0.0, -1.0], atol=1e-15)


# -- d, delta, Delta examples ----------------------------------------------------

def test_d_examples():
    chart = const_metric(np.eye(2))
    const = FormField(chart, 0, lambda c: {(): 3.0 + 0 * c[0]})
    assert exterior_derivative(const, [0.1, 0.2]).coeffs == {}
    w = FormField(chart, 1, lambda c: {(2,): c[0]})
    assert exterior_derivative(w, [0.1, 0.2]).coeffs == {(1, 2): 1.0}
    top = FormField(chart, 2, lambda c: {(1, 2): c[0]})
    assert exterior_derivative(top, [0.1, 0.2]).degree == 2


def test_delta_examples():
    chart = const_metric(np.eye(2))
    df = FormField(chart, 1, lambda c: {(1,): 2.0 * c[0], (2,): 2.0 * c[1]})
    assert codifferential(df, [0.3, 0.1])[()] == pytest.approx(-4.0)
    w = FormField(chart, 1, lambda c: {(1,): c[1]})
    assert codifferential(w, [0.3, 0.1])[()] == pytest.approx(0.0, abs=1e-15)
    flat = M.flat_chart(2)
    vol = FormField(flat, 2, lambda c: {(1, 2): 1.0 + 0 * c[0]})
    assert codifferential(vol, [1.0, 2.0]).norm() == 0.0


def test_laplacian_examples():
    s2 = M.sphere_model(2)
    y1 = M.named_forms(s2)["Y1:x1"]
    X = np.random.default_rng(1).uniform(-1.4, 1.4, (20, 2))
    assert eigen_residual(y1, X, 2.0).max() < 1e-8
    const = FormField(s2, 0, lambda c: {(): 1.0 + 0 * c[0]})
    assert laplacian(const, [0.2, 0.3]).norm() < 1e-14
    nu = M.nu2(0.5)
    assert np.abs(laplacian(nu, X)[(1, 2)]).max() < 1e-12


@pytest.mark.parametrize("m", [1, 2, 3, 4])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_sphere_spectrum(m, k):
    chart = M.sphere_model(m)
    X = np.random.default_rng(10 * m + k).uniform(-1.4, 1.4, (25, m))
    checked = 0
    for label, poly, need in M.HARMONIC_POLYNOMIALS[k]:
        if m < need:
            continue
        y = M.sphere_harmonic(chart, poly)
        assert eigen_residual(y, X, M.sphere_eigenvalue(k, m)).max() < 1e-7, label
        checked += 1
    assert checked or m < 2


def test_sphere_radius_scales_metric():
    X = np.random.default_rng(2).uniform(-1, 1, (5, 2))
    np.testing.assert_allclose(M.sphere_model(2, 0.5).metric_at(X), 0.25 * M.sphere_model(2).metric_at(X))
    np.testing.assert_allclose(M.sphere_model(2).metric_at(np.zeros((1, 2)))[0], 4.0 * np.eye(2))


def test_sphere_metric_matches_embedding():
    for m in (2, 3):
        chart = M.sphere_model(m)
        X = np.random.default_rng(m).uniform(-1.4, 1.4, (10, m))
        np.testing.assert_allclose(M.embedding_metric(chart, X), chart.metric_at(X), atol=1e-14)


def test_gaussian_curvature():
    assert M.scalar_curvature_2d(M.sphere_model(2), [0.0, 0.0]) == pytest.approx(1.0, rel=1e-12)
    assert M.scalar_curvature_2d(M.sphere_model(2, 0.5), [0.4, -0.2]) == pytest.approx(4.0, rel=1e-12)


# -- identities on random fields ------------------------------------------------

def _random_case(m, p, seed):
    chart = random_metric_chart(m, seed)
    rng = np.random.default_rng(seed + 1)
    w = M.random_polynomial_form(chart, p, rng)
    X = rng.uniform(-0.8, 0.8, (8, m))
    return chart, w, X


@given(st.integers(2, 4), st.data())
def test_d_squared_zero(m, data):
    p = data.draw(st.integers(0, m - 2))
    chart, w, X = _random_case(m, p, data.draw(st.integers(0, 1000)))
    ddw = form_values(form_d(form_d(w.jets(X, 2), m), m))
    assert all(np.abs(v).max() < 1e-10 for v in ddw.values())


@given(st.integers(2, 4), st.data())
def test_delta_squared_zero(m, data):
    p = data.draw(st.integers(2, m))
    chart, w, X = _random_case(m, p, data.draw(st.integers(0, 1000)))
    coords = Jet.variables(X, 3)
    g = chart.metric_jet(X, coords=coords)
    once = form_delta(w.jets(X, coords=coords), g)
    twice = form_values(form_delta(once, g))
    scale = 1.0 + norm(form_values(once), chart, X).max()
    assert norm(twice, chart, X).max() < 1e-10 * scale


@given(st.integers(2, 3), st.data())
def test_laplacian_commutes_with_d(m, data):
    p = data.draw(st.integers(0, m - 1))
    chart, w, X = _random_case(m, p, data.draw(st.integers(0, 1000)))
    coords = Jet.variables(X, 3)
    g = chart.metric_jet(X, coords=coords)
    form = w.jets(X, coords=coords)
    d_lap = form_values(form_d(form_laplacian(form, g), m))
    lap_d = form_values(form_laplacian(form_d(form, m), g))
    diff = norm(sub_forms(d_lap, lap_d), chart, X)
    assert (diff < 1e-7 * (1.0 + norm(lap_d, chart, X))).all()


@given(st.integers(2, 3), st.data())
def test_laplacian_commutes_with_delta(m, data):
    p = data.draw(st.integers(1, m))
    chart, w, X = _random_case(m, p, data.draw(st.integers(0, 1000)))
    coords = Jet.variables(X, 3)
    g = chart.metric_jet(X, coords=coords)
    form = w.jets(X, coords=coords)
    a = form_values(form_delta(form_laplacian(form, g), g))
    b = form_values(form_laplacian(form_delta(form, g), g))
    diff = norm(sub_forms(a, b), chart, X)
    assert (diff < 1e-7 * (1.0 + norm(b, chart, X))).all()


def test_laplacian_non_negative_on_functions():
    # -Delta is the analyst's Laplacian: Delta(x^2 + y^2) = -4 on the plane
    chart = const_metric(np.eye(2))
    f = FormField(chart, 0, lambda c: {(): c[0] * c[0] + c[1] * c[1]})
    assert laplacian(f, [0.2, 0.7])[()] == pytest.approx(-4.0)
