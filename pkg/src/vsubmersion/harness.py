"""Scenario runner: seeded sampling, Monte Carlo Rayleigh quotients, JSON reports and the ``verify`` CLI.

Random numbers come from numpy's ``Philox`` counter-based bit generator keyed
by the scenario seed, so a seed reproduces the same samples on every platform
numpy supports.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import models as M
from . import orbifold as O
from . import submersion as S
from .geometry import (FormField, GeometryError, MetricChart, eigen_residual, form_d, form_delta,
                       form_norm, form_values)
from .jets import Jet
from .report import VerificationReport

CHECKS = ("intertwining", "eigen-residual", "invariance", "equivariance", "theta-omega",
          "fiber-product", "conformal", "potential", "rayleigh", "isometry")
EPS = np.finfo(float).eps


class ConfigError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


# -- sampling -------------------------------------------------------------

def sample_points(target, N: int, seed: int, margin: float | None = None,
                  cap_factor: int = 100) -> np.ndarray:
    """``N`` points uniform in the chart box, away from excluded sets (rejection, cap ``cap_factor * N`` draws)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    chart = target.total if isinstance(target, S.SubmersionModel) else target
    rng = make_rng(seed)
    lo, hi = np.asarray(chart.lower), np.asarray(chart.upper)
    kept, have, drawn = [], 0, 0
    while have < N:
        if drawn >= cap_factor * N:
            raise SamplingError(f"rejection cap hit on {chart.name}: {have}/{N} after {drawn} draws")
        batch = min(max(2 * (N - have), 16), cap_factor * N - drawn)
        X = lo + (hi - lo) * rng.random((batch, chart.dim))
        drawn += batch
        ok = target.admissible(X, margin)
        kept.append(X[ok])
        have += int(ok.sum())
    return np.concatenate(kept)[:N]


# -- Monte Carlo Rayleigh quotient -----------------------------------------

@dataclass(frozen=True)
class RayleighEstimate:
    estimate: float
    stderr: float
    samples: int
    draws: int
    sampler: str

    def z_score(self, target: float) -> float:
        """Distance to ``target`` in standard errors, with the stderr floored at rounding level."""
        sigma = max(self.stderr, 64.0 * EPS * max(abs(target), abs(self.estimate), 1.0))
        return abs(self.estimate - target) / sigma


def _rayleigh_terms(phi: FormField, X: np.ndarray):
    chart = phi.chart
    coords = Jet.variables(X, 1 + phi.loss)
    g = chart.metric_jet(X, coords=coords)
    ginv = np.linalg.inv(g.value)
    form = phi.jets(X, coords=coords)
    dphi = form_values(form_d(form, chart.dim)) if phi.degree < chart.dim else {}
    dlt = form_values(form_delta(form, g)) if phi.degree > 0 else {}
    num = form_norm(dphi, ginv) ** 2 + form_norm(dlt, ginv) ** 2
    den = form_norm(form_values(form), ginv) ** 2
    return num, den, np.sqrt(np.linalg.det(g.value))


def monte_carlo_rayleigh(phi: FormField, N: int, seed: int, chunk: int = 2000) -> RayleighEstimate:
    """Ratio estimate of ``int |d phi|^2 + |delta phi|^2 / int |phi|^2`` over the chart.

    Charts with a ``volume_sampler`` are sampled from the Riemannian volume
    directly; otherwise points are uniform in the box and weighted by
    ``sqrt(det g)``.  Points inside the excluded margin are rejected, which
    drops a set of volume ``O(margin^2)`` around codimension-2 excluded sets
    and biases non-constant integrands at that order.
    """
    chart = phi.chart
    rng = make_rng(seed)
    lo, hi = np.asarray(chart.lower), np.asarray(chart.upper)
    sampler = "volume" if chart.volume_sampler is not None else "box"
    nums, dens = [], []
    have = drawn = 0
    while have < N:
        if drawn >= 100 * N:
            raise SamplingError(f"rejection cap hit on {chart.name}")
        want = min(chunk, N - have)
        if sampler == "volume":
            X = chart.volume_sampler(rng, want)
        else:
            X = lo + (hi - lo) * rng.random((want, chart.dim))
        drawn += want
        # volume samples cover the whole chart; only excluded sets are avoided
        X = X[chart.admissible(X, box=sampler == "box")]
        if not len(X):
            continue
        num, den, vol = _rayleigh_terms(phi, X)
        w = np.ones(len(X)) if sampler == "volume" else vol
        nums.append(w * num)
        dens.append(w * den)
        have += len(X)
    a = np.concatenate(nums)[:N]
    b = np.concatenate(dens)[:N]
    if not np.any(b > 0):
        raise ZeroDivisionError("form vanishes at every sample")
    R = a.mean() / b.mean()
    resid = a - R * b
    stderr = float(np.sqrt(resid.var(ddof=1) / N) / b.mean()) if N > 1 else float("inf")
    return RayleighEstimate(float(R), stderr, N, drawn, sampler)


# -- scenarios ------------------------------------------------------------

@dataclass
class Scenario:
    model: Any
    check: str
    tolerance: float = 1e-7
    samples: int = 100
    seed: int = 0
    output: str | None = None
    expect: str = "pass"
    name: str | None = None
    form: str | None = None
    degree: int | None = None
    eigenvalue: float | None = None
    identity: str | None = None
    target: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.check == "theta/omega":
            self.check = "theta-omega"
        if self.check not in CHECKS:
            raise ConfigError(f"unknown check {self.check!r}; choose from {CHECKS}")
        if not (isinstance(self.tolerance, (int, float)) and self.tolerance > 0):
            raise ConfigError("tolerance must be > 0")
        if not (isinstance(self.samples, int) and self.samples >= 1):
            raise ConfigError("samples must be an integer >= 1")
        if self.expect not in ("pass", "fail"):
            raise ConfigError("expect must be 'pass' or 'fail'")

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            attr = key.replace("-", "_")
            if attr not in known:
                raise ConfigError(f"unknown scenario field {key!r}")
            kwargs[attr] = value
        if "model" not in kwargs or "check" not in kwargs:
            raise ConfigError("scenario needs 'model' and 'check'")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("scenario file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or (f.name == "params" and not v):
                continue
            out[f.name.replace("_", "-")] = v
        return out


def _named_models() -> dict:
    return {
        "hopf1": lambda: M.hopf_model(1),
        "hopf2": lambda: M.hopf_model(2),
        "hopf1-adapted": lambda: M.hopf_model(1, "adapted"),
        "hopf2-adapted": lambda: M.hopf_model(2, "adapted"),
        "warped-torus": lambda: M.warped_torus_model(),
        "warped-torus-2": lambda: M.warped_torus_model(base_dim=2),
        "flat-torus": lambda: M.flat_torus_model(),
        "fiber-product-hopf1": lambda: S.fiber_product(M.hopf_model(1, "adapted"), M.hopf_model(1, "adapted"),
                                                       name="Z(hopf1,hopf1)"),
        "hopf1xS1": lambda: M.product_with_circle(M.hopf_model(1)),
        "sphere2": lambda: M.sphere_model(2),
        "sphere3": lambda: M.sphere_model(3),
    }


MODEL_NAMES = tuple(_named_models())


def resolve_model(ref):
    """Model, chart or catalog entry from a name or an inline ``{"kind": ...}`` definition."""
    if isinstance(ref, dict):
        kind = ref.get("kind")
        try:
            if kind == "hopf":
                return M.hopf_model(int(ref.get("n", 1)), ref.get("chart", "stereographic"))
            if kind == "warped-torus":
                return M.warped_torus_model(base_dim=int(ref.get("base-dim", 1)))
            if kind == "flat-torus":
                return M.flat_torus_model(int(ref.get("fiber-dim", 1)), int(ref.get("base-dim", 2)))
            if kind == "sphere":
                return M.sphere_model(int(ref["m"]), float(ref.get("radius", 1.0)))
        except (KeyError, ValueError, GeometryError) as exc:
            raise ConfigError(f"bad inline model {ref}: {exc}") from exc
        raise ConfigError(f"unknown inline model kind {kind!r}")
    catalog = M.catalog_by_name()
    if ref in catalog:
        return catalog[ref]
    named = _named_models()
    if ref in named:
        return named[ref]()
    raise ConfigError(f"unknown model {ref!r}; known: {sorted(named) + sorted(catalog)}")


def _submersion(obj) -> S.SubmersionModel:
    if isinstance(obj, M.CatalogEntry):
        return obj.model
    if isinstance(obj, S.SubmersionModel):
        return obj
    raise ConfigError("this check needs a submersion model")


def _base_forms(sc: Scenario, model: S.SubmersionModel, count: int = 1) -> list[FormField]:
    if sc.form in (None, "random"):
        if sc.degree is None:
            raise ConfigError("random forms need 'degree'")
        rng = make_rng(sc.seed + 1)
        return [M.random_polynomial_form(model.base, int(sc.degree), rng, name=f"random{i}") for i in range(count)]
    forms = M.named_forms(model)
    if sc.form not in forms:
        raise ConfigError(f"unknown form {sc.form!r} for {model.name}; known: {sorted(forms)}")
    return [forms[sc.form]]


def _eigen_target(sc: Scenario, obj):
    """(form, eigenvalue, chart-or-model to sample on, metadata)."""
    meta = {}
    if isinstance(obj, M.CatalogEntry):
        meta.update(obj.to_dict())
        meta["lambda<=mu"] = obj.base_eigenvalue <= obj.total_eigenvalue
        if (sc.target or "total") == "base":
            return obj.form, obj.base_eigenvalue if sc.eigenvalue is None else sc.eigenvalue, obj.model.base, meta
        return (obj.total_form(), obj.total_eigenvalue if sc.eigenvalue is None else sc.eigenvalue,
                obj.model, meta)
    if sc.eigenvalue is None:
        raise ConfigError("eigen checks outside the catalog need 'eigenvalue'")
    if isinstance(obj, MetricChart):
        forms = M.named_forms(obj)
        if sc.form not in forms:
            raise ConfigError(f"unknown form {sc.form!r}; known: {sorted(forms)}")
        return forms[sc.form], sc.eigenvalue, obj, meta
    (phi,) = _base_forms(sc, obj)
    if (sc.target or "total") == "base":
        return phi, sc.eigenvalue, obj.base, meta
    return M.pullback_field(obj, phi), sc.eigenvalue, obj, meta


def _chunked(fn, X: np.ndarray, chunk: int = 50) -> np.ndarray:
    return np.concatenate([np.asarray(fn(X[i:i + chunk])) for i in range(0, len(X), chunk)])


def _run_check(sc: Scenario, obj) -> tuple[list[float], np.ndarray | None, dict]:
    p = sc.params
    if sc.check == "eigen-residual":
        phi, lam, where, meta = _eigen_target(sc, obj)
        X = sample_points(where, sc.samples, sc.seed)
        res = _chunked(lambda Y: eigen_residual(phi, Y, lam), X)
        meta.update({"form": phi.name, "eigenvalue": lam})
        return res.tolist(), X, meta

    if sc.check == "rayleigh":
        phi, lam, _, meta = _eigen_target(sc, obj)
        est = monte_carlo_rayleigh(phi, sc.samples, sc.seed)
        meta.update({"estimate": est.estimate, "stderr": est.stderr, "draws": est.draws,
                     "sampler": est.sampler, "eigenvalue": lam, "residual": "z-score |R - mu| / stderr"})
        return [est.z_score(lam)], None, meta

    model = _submersion(obj)
    X = sample_points(model, sc.samples, sc.seed)
    meta: dict = {"model": model.name}

    if sc.check == "intertwining":
        ident = sc.identity or "lemma"
        if ident not in S.IDENTITIES:
            raise ConfigError(f"unknown identity {ident!r}")
        forms = [obj.form] if isinstance(obj, M.CatalogEntry) and sc.form is None and sc.degree is None \
            else _base_forms(sc, model, int(p.get("forms", 1)))
        res = np.zeros(len(X))
        for phi in forms:
            r = S.intertwining_residual(model, phi, X, ident, sc.tolerance)
            res = np.maximum(res, r.residuals)
        remix = S.frame_remix_residual(model, X[:min(len(X), 10)], seed=sc.seed)
        meta.update({"identity": ident, "forms": [f.name for f in forms],
                     "frame-remix-max": float(remix.max())})
        return res.tolist(), X, meta

    if sc.check == "isometry":
        return _chunked(lambda Y: S.submersion_isometry_residual(model, Y), X).tolist(), X, meta

    if sc.check == "theta-omega":
        st = S.submersion_state(model, X, order=2)
        th = np.abs(st.theta.value).max(axis=-1) if model.base.dim else np.zeros(len(X))
        om = np.abs(st.omega.value).reshape(len(X), -1).max(axis=-1) if st.omega.value.size else np.zeros(len(X))
        res = S.frame_remix_residual(model, X, seed=sc.seed)
        if model.fibers_minimal_expected:
            res = np.maximum(res, th)
        if model.horizontal_integrable_expected:
            res = np.maximum(res, om)
        meta.update({"theta-max": float(th.max()), "omega-max": float(om.max()),
                     "fibers-minimal-expected": model.fibers_minimal_expected,
                     "horizontal-integrable-expected": model.horizontal_integrable_expected})
        return res.tolist(), X, meta

    if sc.check == "fiber-product":
        if not model.factors:
            raise ConfigError("fiber-product check needs a fiber product model")
        add = S.theta_additivity_residual(model, X)
        iso = np.maximum(S.submersion_isometry_residual(model.sigma(1), X),
                         S.submersion_isometry_residual(model.sigma(2), X))
        meta.update({"theta-additivity-max": float(add.max()), "sigma-isometry-max": float(iso.max())})
        return np.maximum(add, iso).tolist(), X, meta

    if sc.check == "conformal":
        psi = model.metadata.get("fiber-volume")
        if psi is None:
            raise ConfigError(f"{model.name} has no closed-form fiber volume for the conformal check")
        ts = p.get("t", [-1.0, 0.5, 2.0])
        ts = [ts] if isinstance(ts, (int, float)) else list(ts)
        k = model.fiber_dim
        th0 = S.submersion_state(model, X, order=2).theta_coordinates().value
        res = np.zeros(len(X))
        for t in ts:
            st = S.submersion_state(S.conformal_variation(model, psi, float(t)), X, order=2)
            diff = st.theta_coordinates().value - (1.0 + t * k) * th0
            gi = st.ginv.value
            nrm = lambda v: np.sqrt(np.abs(np.einsum("bi,bij,bj->b", v, gi, v)))
            res = np.maximum(res, nrm(diff) / (1.0 + nrm(th0)))
        meta["t"] = ts
        return res.tolist(), X, meta

    if sc.check == "potential":
        mode = p.get("psi", "quadrature")
        psi = None
        if mode == "closed-form":
            psi = model.metadata.get("fiber-volume")
            if psi is None:
                raise ConfigError(f"{model.name} has no closed-form fiber volume")
        rep = S.minimality_potential_check(model, X, psi, int(p.get("nodes", 256)), sc.tolerance)
        meta.update(rep.metadata)
        return rep.residuals, X, meta

    if sc.check == "invariance":
        n = int(p.get("n", 5))
        on = p.get("on", "base")
        chart = model.base if on == "base" else model.total
        action = O.cyclic_action(n, tuple(p.get("weights", [1])), chart, name=f"Z_{n} on {chart.name}")
        (phi,) = _base_forms(sc, model) if on == "base" else [M.pullback_field(model, _base_forms(sc, model)[0])]
        pts = X if on == "total" else model.project(X)
        rep = O.invariance_residual(action, phi, pts, sc.tolerance)
        meta.update(rep.metadata)
        meta["axioms-residual"] = action.axioms_residual()
        meta["isometry-residual"] = action.isometry_residual(rep.points)
        return rep.residuals, rep.points, meta

    if sc.check == "equivariance":
        if "p" in p and "q" in p:
            up, down = O.hopf_actions(p=int(p["p"]), q=int(p["q"]))
        else:
            up, down = O.hopf_actions(int(p.get("n", 5)))
        Z = O.random_sphere_points(4, sc.samples, make_rng(sc.seed))
        rep = O.equivariance_check(up, down, M.hopf_ambient, Z, sc.tolerance)
        meta.update(rep.metadata)
        meta["axioms-residual"] = max(up.axioms_residual(), down.axioms_residual())
        return rep.residuals, Z, meta

    raise ConfigError(f"check {sc.check!r} not handled")


def run_scenario(sc: Scenario, write: bool = True) -> VerificationReport:
    start = time.perf_counter()
    obj = resolve_model(sc.model)
    res, X, meta = _run_check(sc, obj)
    report = VerificationReport(check=sc.check, residuals=[float(r) for r in res], tolerance=float(sc.tolerance),
                                points=X, expect=sc.expect, scenario=sc.to_dict(), metadata=meta,
                                wall_clock=time.perf_counter() - start)
    if write and sc.output:
        write_report(report, sc.output)
    return report


# -- JSON with 17 significant digits -------------------------------------

def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items() if not callable(v)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    return json.dumps(str(obj))


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits (non-finite floats become null)."""
    return _encode(obj, indent, 0) + "\n"


def write_report(report: VerificationReport, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(report.to_dict()), encoding="utf-8")


# -- CLI --------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="verify", description="Run a verification scenario.")
    ap.add_argument("--scenario", help="scenario JSON file")
    ap.add_argument("--samples", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--tolerance", type=float)
    ap.add_argument("--report", help="report path (overrides the scenario's output)")
    ap.add_argument("--list-catalog", action="store_true")
    args = ap.parse_args(argv)

    if args.list_catalog:
        sys.stdout.write(dumps({"models": list(MODEL_NAMES),
                                "catalog": [e.to_dict() for e in M.eigenform_catalog()]}))
        return 0
    if not args.scenario:
        print("error: --scenario is required", file=sys.stderr)
        return 2
    try:
        sc = Scenario.load(args.scenario)
        over = {k: v for k, v in (("samples", args.samples), ("seed", args.seed),
                                  ("tolerance", args.tolerance), ("output", args.report)) if v is not None}
        sc = Scenario.from_dict({**sc.to_dict(), **over})
        report = run_scenario(sc)
    except (ConfigError, GeometryError, SamplingError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    print(report.summary())
    return 0 if report.as_expected else 1


if __name__ == "__main__":
    sys.exit(main())
