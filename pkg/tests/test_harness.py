import json
import math

import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from vsubmersion import harness as H
from vsubmersion import models as M
from vsubmersion.geometry import AffineSubspace, FormField, MetricChart
from vsubmersion.orbifold import euclidean_chart

SCENARIOS = "scenarios"


def plane_chart():
    # excluded codimension-2 plane {x0 = x1 = 0} in R^3
    e = euclidean_chart(3)
    return MetricChart("R3-minus-plane", 3, e.metric, e.lower, e.upper,
                       excluded=(AffineSubspace((0.0, 0.0, 0.0), ((0.0, 0.0, 1.0),)),))


def test_sampling_is_deterministic():
    h = M.hopf_model(1)
    a = H.sample_points(h, 200, 11)
    b = H.sample_points(h, 200, 11)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, H.sample_points(h, 200, 12))


def test_sampling_avoids_excluded_plane():
    X = H.sample_points(plane_chart(), 5000, 3)
    assert np.hypot(X[:, 0], X[:, 1]).min() > 1e-2


def test_rejection_cap():
    chart = plane_chart()
    with pytest.raises(H.SamplingError):
        H.sample_points(chart, 10, 0, margin=10.0)
    with pytest.raises(ValueError):
        H.sample_points(chart, 0, 0)


def test_make_rng_is_philox():
    assert isinstance(H.make_rng(1).bit_generator, np.random.Philox)


def test_rayleigh_of_constant_function_is_zero():
    chart = M.sphere_model(2)
    one = FormField(chart, 0, lambda c: {(): 1.0 + 0.0 * c[0]}, name="1")
    est = H.monte_carlo_rayleigh(one, 2000, 1)
    assert est.estimate == 0.0 and est.sampler == "volume"


def test_rayleigh_of_zero_form_divides_by_zero():
    chart = M.sphere_model(2)
    zero = FormField(chart, 0, lambda c: {(): 0.0 * c[0]}, name="0")
    with pytest.raises(ZeroDivisionError):
        H.monte_carlo_rayleigh(zero, 100, 1)


def test_rayleigh_first_spherical_harmonic():
    Y1 = M.sphere_harmonic(M.sphere_model(2), lambda X: X[0])
    est = H.monte_carlo_rayleigh(Y1, 40000, 7)
    assert est.z_score(2.0) < 3.0
    assert est.stderr < 0.05


def test_rayleigh_box_sampler_on_torus():
    model = M.flat_torus_model(1, 1)
    f = FormField(model.total, 0, lambda c: {(): M.jm.cos(c[0])}, name="cos")
    est = H.monte_carlo_rayleigh(f, 20000, 3)
    assert est.sampler == "box" and est.z_score(1.0) < 4.0


def test_z_score_floor():
    est = H.RayleighEstimate(4.0, 0.0, 10, 10, "volume")
    assert est.z_score(4.0) == 0.0
    assert math.isfinite(est.z_score(4.0 + 1e-15))


def test_scenario_kebab_case_round_trip():
    sc = H.Scenario.from_dict({"model": "hopf1", "check": "theta/omega", "samples": 3, "expect": "fail"})
    assert sc.check == "theta-omega"
    assert H.Scenario.from_dict(sc.to_dict()) == sc


@pytest.mark.parametrize("bad", [
    {"model": "hopf1"},
    {"model": "hopf1", "check": "nope"},
    {"model": "hopf1", "check": "intertwining", "tolerance": -1},
    {"model": "hopf1", "check": "intertwining", "samples": 0},
    {"model": "hopf1", "check": "intertwining", "expect": "maybe"},
    {"model": "hopf1", "check": "intertwining", "colour": "red"},
])
def test_scenario_validation(bad):
    with pytest.raises(H.ConfigError):
        H.Scenario.from_dict(bad)


def test_resolve_model_errors():
    with pytest.raises(H.ConfigError):
        H.resolve_model("no-such-model")
    assert H.resolve_model("hopf1").name
    assert isinstance(H.resolve_model("hopf1-nu2"), M.CatalogEntry)


@pytest.mark.parametrize("name", ["hopf1_nu2_eigen", "flat_torus_intertwining", "hopf1_nu2_invariance",
                                  "hopf_equivariance_pq", "hopf1_theta_omega", "fiber_product_theta",
                                  "warped_torus_conformal", "warped_torus_potential"])
def test_shipped_scenarios_pass(name):
    sc = H.Scenario.load(f"{SCENARIOS}/{name}.json")
    rep = H.run_scenario(sc, write=False)
    assert rep.passed and rep.as_expected, rep.summary()


def test_expected_fail_scenario():
    rep = H.run_scenario(H.Scenario.load(f"{SCENARIOS}/hopf1_commutation_expected_fail.json"), write=False)
    assert not rep.passed and rep.as_expected
    assert rep.max_residual > 1e-3


@given(st.lists(st.floats(allow_nan=True, allow_infinity=True, width=64), max_size=20))
def test_json_round_trip_17_digits(xs):
    back = json.loads(H.dumps({"x": xs}))["x"]
    for a, b in zip(xs, back):
        if math.isfinite(a):
            assert b == a
        else:
            assert b is None


def test_dumps_skips_callables():
    assert json.loads(H.dumps({"f": lambda y: y, "a": 1})) == {"a": 1}


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert H.main(["--scenario", f"{SCENARIOS}/hopf1_nu2_eigen.json", "--report", str(out), "--samples", "20"]) == 0
    data = json.loads(out.read_text())
    assert data["pass"] and len(data["residuals"]) == 20 and data["scenario"]["samples"] == 20
    # tighter tolerance than the residuals can meet
    assert H.main(["--scenario", f"{SCENARIOS}/hopf1_nu2_eigen.json", "--report", str(out),
                   "--samples", "20", "--tolerance", "1e-300"]) == 1
    assert H.main(["--scenario", f"{SCENARIOS}/bad_config.json"]) == 2
    assert H.main(["--scenario", str(tmp_path / "missing.json")]) == 2
    assert H.main([]) == 2
    capsys.readouterr()


def test_cli_expected_fail_exits_zero(tmp_path):
    assert H.main(["--scenario", f"{SCENARIOS}/hopf1_commutation_expected_fail.json",
                   "--report", str(tmp_path / "r.json")]) == 0


def test_list_catalog(capsys):
    assert H.main(["--list-catalog"]) == 0
    data = json.loads(capsys.readouterr().out)
    names = {e["name"] for e in data["catalog"]}
    assert "hopf1-nu2" in names and "hopf1" in data["models"]
