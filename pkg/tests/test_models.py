import numpy as np
import pytest

from vsubmersion import models as M
from vsubmersion import submersion as S
from vsubmersion.geometry import GeometryError, eigen_residual, exterior_derivative, codifferential
from vsubmersion.harness import sample_points


def base_points(entry, count, seed):
    return sample_points(entry.model.base, count, seed)


@pytest.fixture(scope="module")
def catalog():
    return M.catalog_by_name()


def test_catalog_contents(catalog):
    expected = {
        "hopf1-nu2": (2, 0.0, 4.0), "hopf2-mu2": (2, 0.0, 8.0), "hopf2-mu2^2": (4, 0.0, 8.0),
        "hopf1-Y1": (0, 8.0, 8.0), "fiber-product-hopf1-nu2": (2, 0.0, 8.0), "hopf1xS1-nu2cos": (2, 1.0, 5.0),
    }
    assert set(expected) <= set(catalog)
    for name, (p, lam, mu) in expected.items():
        e = catalog[name]
        assert (e.degree, e.base_eigenvalue, e.total_eigenvalue) == (p, lam, mu)
        assert e.form.degree == p
        assert e.to_dict()["provenance"] in ("PAPER", "DERIVED")


@pytest.mark.parametrize("name", ["hopf1-nu2", "hopf2-mu2", "hopf2-mu2^2", "hopf1-Y1",
                                  "fiber-product-hopf1-nu2", "hopf1xS1-nu2cos"])
def test_catalog_eigenvalues_verified(catalog, name):
    e = catalog[name]
    n_pts = 100 if e.model.total.dim <= 4 else 40
    Y = base_points(e, n_pts, 1)
    assert eigen_residual(e.form, Y, e.base_eigenvalue).max() < 1e-7
    X = sample_points(e.model, n_pts, 2)
    assert eigen_residual(e.total_form(), X, e.total_eigenvalue).max() < 1e-7
    assert e.base_eigenvalue <= e.total_eigenvalue


def test_hopf_maps_into_unit_sphere():
    Z = np.random.default_rng(0).standard_normal((50, 4))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    np.testing.assert_allclose(np.linalg.norm(M.hopf_ambient(Z), axis=1), 1.0, atol=1e-14)


def test_hopf_projection_matches_ambient_map():
    h = M.hopf_model(1)
    U = sample_points(h, 30, 3)
    Z = np.stack([np.asarray(c) for c in M.stereographic_embedding(list(U.T))], axis=-1)
    W = M.hopf_ambient(Z)
    v = h.project(U)
    # stereographic projection of the unit sphere from its north pole
    np.testing.assert_allclose(v, W[:, :2] / (1.0 - W[:, 2:3]), atol=1e-10)


def test_hopf_construction_check_rejects_bad_metric():
    good = M.hopf_model(1, check=False)
    bad_total = M.sphere_model(3, 1.3)
    bad = S.SubmersionModel("bad", bad_total, good.base, good.projection)
    with pytest.raises(GeometryError):
        M.verify_submersion(bad)


def test_unknown_hopf_chart():
    with pytest.raises(GeometryError):
        M.hopf_model(1, "polar")


def test_cp1_is_sphere_of_radius_half():
    Y = np.random.default_rng(4).uniform(-3, 3, (10, 2))
    np.testing.assert_allclose(M.cpn_chart(1).metric_at(Y), M.sphere_model(2, 0.5).metric_at(Y / 1.0), atol=1e-15)


def test_kahler_form_on_cp1_is_area_form():
    h = M.hopf_model(1)
    Y = sample_points(h.base, 50, 5)
    mu = M.kahler_form(h.base).values(Y)[(1, 2)]
    nu = M.hopf_nu2(h).values(Y)[(1, 2)]
    ratio = mu / nu
    assert np.abs(ratio - ratio[0]).max() < 1e-9 and abs(ratio[0]) > 0.1


@pytest.mark.parametrize("n", [1, 2, 3])
def test_kahler_closed_and_parallel(n):
    chart = M.cpn_chart(n)
    mu = M.kahler_form(chart)
    Y = sample_points(chart, 10, 6)
    d = exterior_derivative(mu, Y)
    assert all(np.abs(v).max() < 1e-9 for v in d.values())
    dl = codifferential(mu, Y)
    assert all(np.abs(v).max() < 1e-9 for v in dl.values())


def test_nu2_harmonic():
    nu = M.nu2(0.5)
    Y = sample_points(nu.chart, 20, 7)
    assert all(np.abs(v).max() < 1e-9 for v in codifferential(nu, Y).values())


def test_warped_torus_rejects_non_positive():
    model = M.warped_torus_model(lambda y: M.jm.sin(y[0]))
    with pytest.raises(GeometryError):
        model.total.metric_at(np.array([[0.0, 4.0]]))


def test_named_forms():
    h2 = M.hopf_model(2)
    forms = M.named_forms(h2)
    assert {"mu2", "mu2^2", "vol-base", "vol-total"} <= set(forms)
    s3 = M.named_forms(M.sphere_model(3))
    assert "Y1:x1" in s3 and "Y3:x1*x2*x3" in s3
    with pytest.raises(GeometryError):
        M.named_forms(M.flat_chart(2))


def test_volume_form_of_sphere():
    chart = M.sphere_model(2, 0.5)
    Y = sample_points(chart, 5, 8)
    np.testing.assert_allclose(M.volume_form_field(chart).values(Y)[(1, 2)], M.nu2(0.5).values(Y)[(1, 2)])


def test_sphere_volume_sampler_is_uniform():
    chart = M.sphere_model(2)
    rng = np.random.default_rng(9)
    U = chart.volume_sampler(rng, 20000)
    X = np.stack([np.asarray(c) for c in chart.embedding(list(U.T))], axis=-1)
    # mean of the height is 0 and its second moment 1/3 for the uniform measure
    assert abs(X[:, 2].mean()) < 0.02
    assert abs((X[:, 2] ** 2).mean() - 1 / 3) < 0.02
