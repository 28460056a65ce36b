"""Scenario files: one JSON document drives every check.

A scenario fixes the chart, the anchor, optionally a connection,
structure functions, a force or a Lagrangian, plus named curves,
sections and points.  Whatever a check needs and the file does not
provide is synthesised deterministically from the configured seed, so
two runs of the same file with the same flags produce identical
reports.

Error messages carry JSON-pointer-ish paths ("/anchor/0/1") back into
the document.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import algebroid as alg
from . import expr as ex
from .berwald import verify_affine_reproduction, verify_prop6_prop7
from .bundle import (AdmissibleCurve, AnchorSpec, ChartSpec, EPoint, SectionE,
                     SectionEbar, SectionV, ValidationError, check_admissible)
from .connection import (Connection, NotAffineError, hish_residual, is_affine,
                         verify_prop5)
from .report import CheckResult, Report, apply_expectations
from .sampling import SampleBox
from .transport import TransportConfig, verify_prop1, verify_prop4

_TOP_KEYS = {"name", "chart", "parameters", "anchor", "connection",
             "structure", "pseudo_sode", "lagrangian", "curves", "sections",
             "points", "model_vector", "config", "checks", "expect_fail"}

_PARAM_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_COORD_RE = re.compile(r"^(?:[xy][0-9]+|u)$")

CHECK_ORDER = ("validate", "prop1", "prop4", "prop5", "hish", "berwald",
               "prop67", "sode", "lagrangian", "direct")


class ScenarioError(ValueError):
    """Load-time problem, located by a pointer path into the document."""

    def __init__(self, path: str, msg: str):
        self.path = path
        self.msg = msg
        super().__init__(f"{path}: {msg}")


@dataclass
class Scenario:
    name: str
    chart: ChartSpec
    anchor: AnchorSpec
    conn: Connection | None
    structure: alg.AlgebroidSpec | None
    force: list | None            # symbolic force components, if any
    lagrangian: ex.Expr | None
    curves: dict
    sections: dict
    points: dict
    model_vector: np.ndarray
    cfg: TransportConfig
    sampler: SampleBox
    span: tuple
    checks: list
    expect_fail: list
    connection_source: str = "none"
    defaults_used: list = field(default_factory=list)

    def section(self, name: str):
        return self.sections[name]

    def first_curve(self):
        if not self.curves:
            return None
        return next(iter(self.curves.values()))


def _want(doc, key, types, path, required=False, default=None):
    if key not in doc:
        if required:
            raise ScenarioError(f"/{key}", "missing required key")
        return default
    v = doc[key]
    if not isinstance(v, types):
        raise ScenarioError(f"/{key}",
                            f"expected {types[0].__name__ if isinstance(types, tuple) else types.__name__}, "
                            f"got {type(v).__name__}")
    return v


def _parse_expr(text, path, params):
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return ex.Const(float(text))
    if not isinstance(text, str):
        raise ScenarioError(path, f"expected expression string, got "
                                  f"{type(text).__name__}")
    try:
        e = ex.parse(text, params=tuple(params))
    except ex.ParseError as err:
        raise ScenarioError(path, f"bad expression {text!r}: {err}") from None
    if params:
        e = ex.subst(e, {p: ex.Const(v) for p, v in params.items()})
    return ex.fold(e)


def _expr_matrix(rows, path, params, shape):
    nr, nc = shape
    if not isinstance(rows, list) or len(rows) != nr:
        raise ScenarioError(path, f"expected {nr} rows")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != nc:
            raise ScenarioError(f"{path}/{i}", f"expected {nc} entries")
        out.append([_parse_expr(c, f"{path}/{i}/{j}", params)
                    for j, c in enumerate(row)])
    return out


def _expr_vector(items, path, params, length):
    if not isinstance(items, list) or len(items) != length:
        raise ScenarioError(path, f"expected {length} entries")
    return [_parse_expr(c, f"{path}/{i}", params)
            for i, c in enumerate(items)]


def _float_vector(items, path, length):
    if not isinstance(items, list) or len(items) != length:
        raise ScenarioError(path, f"expected {length} numbers")
    out = []
    for i, v in enumerate(items):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ScenarioError(f"{path}/{i}", "expected a number")
        out.append(float(v))
    return out


class _Defaults:
    """Seeded fallback objects, drawn in a fixed order.

    The draw order never depends on which objects the file provides, so
    a partially specified scenario stays reproducible.
    """

    def __init__(self, chart: ChartSpec, seed: int):
        rng = np.random.default_rng(seed)

        def draw(n, lo=-1.0, hi=1.0):
            return [round(float(v), 3) for v in rng.uniform(lo, hi, n)]

        self.s = draw(chart.l, -0.8, 0.8)
        self.sigma = draw(2 * chart.k, -0.6, 0.6)
        self.sigmabar = draw(2 * chart.k, -0.6, 0.6)
        self.e1_x = draw(chart.n, -0.4, 0.4)
        self.e1_y = draw(chart.k, -0.5, 0.5)
        self.e2_y = draw(chart.k, -0.5, 0.5)
        self.a0 = draw(chart.k, -1.0, 1.0)
        self.e0_x = draw(chart.n, -0.4, 0.4)
        self.e0_y = draw(chart.k, -0.5, 0.5)


def _affine_in_x1(pairs):
    c0, c1 = pairs
    return ex.fold(ex.Add(ex.Const(c0), ex.Mul(ex.Const(c1), ex.Var("x1"))))


def load_scenario(source, overrides: dict | None = None) -> Scenario:
    """Build a Scenario from a path, a JSON string or a dict.

    ``overrides`` may carry h_step, tol, samples, seed taken from the
    command line; they replace the file's config before any derived
    object is built.
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = source if "{" in str(source) else open(source).read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise ScenarioError("/", f"not valid JSON: {err}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("/", "top level must be an object")
    for key in doc:
        if key not in _TOP_KEYS:
            raise ScenarioError(f"/{key}", "unknown key")

    name = _want(doc, "name", str, "/name", default="scenario")

    chart_doc = _want(doc, "chart", dict, "/chart", required=True)
    for key in chart_doc:
        if key not in {"n", "k", "l", "anchored_in_E"}:
            raise ScenarioError(f"/chart/{key}", "unknown key")
    n = chart_doc.get("n")
    k = chart_doc.get("k")
    if not isinstance(n, int) or n < 1:
        raise ScenarioError("/chart/n", "need an integer >= 1")
    if not isinstance(k, int) or k < 1:
        raise ScenarioError("/chart/k", "need an integer >= 1")
    anchored = chart_doc.get("anchored_in_E", False)
    if not isinstance(anchored, bool):
        raise ScenarioError("/chart/anchored_in_E", "need a boolean")
    l = chart_doc.get("l", k + 1 if anchored else None)
    if l is None:
        raise ScenarioError("/chart/l", "required unless anchored_in_E")
    if not isinstance(l, int) or l < 1:
        raise ScenarioError("/chart/l", "need an integer >= 1")
    if anchored and l != k + 1:
        raise ScenarioError("/chart/l", f"anchored_in_E forces l == k+1 "
                                        f"== {k+1}, got {l}")
    try:
        chart = ChartSpec(n=n, k=k, l=l, anchored_in_E=anchored)
    except ValidationError as err:
        raise ScenarioError("/chart", str(err)) from None

    params = {}
    pdoc = _want(doc, "parameters", dict, "/parameters", default={})
    for pname, pval in pdoc.items():
        if not _PARAM_RE.match(pname) or _COORD_RE.match(pname):
            raise ScenarioError(f"/parameters/{pname}",
                                "invalid parameter name")
        if not isinstance(pval, (int, float)) or isinstance(pval, bool):
            raise ScenarioError(f"/parameters/{pname}", "expected a number")
        params[pname] = float(pval)

    rho = _expr_matrix(_want(doc, "anchor", list, "/anchor", required=True),
                       "/anchor", params, (n, l))
    try:
        anchor = AnchorSpec(chart, rho)
    except ValidationError as err:
        raise ScenarioError("/anchor", str(err)) from None

    structure = None
    if "structure" in doc:
        sdoc = _want(doc, "structure", dict, "/structure")
        for key in sdoc:
            if key not in {"C", "C0"}:
                raise ScenarioError(f"/structure/{key}", "unknown key")
        if not chart.anchored_in_E:
            raise ScenarioError("/structure",
                                "structure functions need anchored_in_E")
        craw = sdoc.get("C", [[["0"] * k for _ in range(k)]
                              for _ in range(k)])
        if not isinstance(craw, list) or len(craw) != k:
            raise ScenarioError("/structure/C", f"expected {k} blocks")
        C = [_expr_matrix(craw[g], f"/structure/C/{g}", params, (k, k))
             for g in range(k)]
        C0 = _expr_matrix(sdoc.get("C0", [["0"] * k for _ in range(k)]),
                          "/structure/C0", params, (k, k))
        try:
            structure = alg.AlgebroidSpec(anchor, C, C0)
        except ValidationError as err:
            raise ScenarioError("/structure", str(err)) from None

    force = None
    if "pseudo_sode" in doc:
        if structure is None:
            raise ScenarioError("/pseudo_sode", "needs a structure block")
        force = _expr_vector(doc["pseudo_sode"], "/pseudo_sode", params, k)

    lagrangian = None
    if "lagrangian" in doc:
        if structure is None:
            raise ScenarioError("/lagrangian", "needs a structure block")
        lagrangian = _parse_expr(doc["lagrangian"], "/lagrangian", params)
        extra = ex.free_vars(lagrangian) - set(chart.xnames) - set(chart.ynames)
        if extra:
            raise ScenarioError("/lagrangian",
                                f"depends on {sorted(extra)}")

    cfg_doc = _want(doc, "config", dict, "/config", default={})
    for key in cfg_doc:
        if key not in {"h_step", "tol", "samples", "seed", "box", "span"}:
            raise ScenarioError(f"/config/{key}", "unknown key")
    overrides = overrides or {}

    def cfgval(key, kind, default):
        if key in overrides and overrides[key] is not None:
            return overrides[key]
        v = cfg_doc.get(key, default)
        if not isinstance(v, kind) or isinstance(v, bool):
            raise ScenarioError(f"/config/{key}", "wrong type")
        return v

    h_step = float(cfgval("h_step", (int, float), 1e-3))
    tol = float(cfgval("tol", (int, float), 1e-8))
    samples = int(cfgval("samples", int, 64))
    seed = int(cfgval("seed", int, 0))
    if h_step <= 0:
        raise ScenarioError("/config/h_step", "must be positive")
    if samples < 1:
        raise ScenarioError("/config/samples", "must be >= 1")
    span_raw = cfg_doc.get("span", [0.0, 1.0])
    span = tuple(_float_vector(span_raw, "/config/span", 2))
    if span[1] <= span[0]:
        raise ScenarioError("/config/span", "need span[1] > span[0]")

    box_doc = cfg_doc.get("box", {})
    if not isinstance(box_doc, dict):
        raise ScenarioError("/config/box", "expected an object")
    for key in box_doc:
        if key not in {"lo", "hi", "overrides"}:
            raise ScenarioError(f"/config/box/{key}", "unknown key")
    box_over = {}
    for vname, bnds in box_doc.get("overrides", {}).items():
        box_over[vname] = tuple(_float_vector(
            bnds, f"/config/box/overrides/{vname}", 2))
    sampler = SampleBox(lo=float(box_doc.get("lo", -1.0)),
                        hi=float(box_doc.get("hi", 1.0)),
                        count=samples, seed=seed, overrides=box_over)
    cfg = TransportConfig(h_step=h_step, tol=tol)

    defaults = _Defaults(chart, seed)
    defaults_used = []

    conn = None
    connection_source = "none"
    if "connection" in doc:
        gamma = _expr_matrix(doc["connection"], "/connection", params, (k, l))
        try:
            conn = Connection(anchor, gamma)
        except ValidationError as err:
            raise ScenarioError("/connection", str(err)) from None
        connection_source = "explicit"

    eff_force = force
    if eff_force is None and lagrangian is not None and structure is not None \
            and chart.k == 1:
        try:
            eff_force = alg.lagrangian_sode(structure, lagrangian, sampler)
        except alg.DegenerateLagrangianError:
            eff_force = None
    symbolic_force = isinstance(eff_force, list) and \
        all(isinstance(c, ex.Expr) for c in eff_force)
    if conn is None and structure is not None and symbolic_force:
        conn = alg.sode_connection(structure, eff_force)
        connection_source = "pseudo_sode" if force is not None \
            else "lagrangian"

    curves = {}
    cdoc = _want(doc, "curves", dict, "/curves", default={})
    for cname, cbody in cdoc.items():
        path = f"/curves/{cname}"
        if not isinstance(cbody, dict):
            raise ScenarioError(path, "expected an object")
        for key in cbody:
            if key not in {"base", "components", "domain"}:
                raise ScenarioError(f"{path}/{key}", "unknown key")
        base = _expr_vector(cbody.get("base"), f"{path}/base", params, n)
        comps = _expr_vector(cbody.get("components"), f"{path}/components",
                             params, l)
        domain = tuple(_float_vector(cbody.get("domain", [0.0, 1.0]),
                                     f"{path}/domain", 2))
        try:
            curves[cname] = AdmissibleCurve(chart, base, comps, domain)
        except ValidationError as err:
            raise ScenarioError(path, str(err)) from None

    sections = {}
    sdoc = _want(doc, "sections", dict, "/sections", default={})
    kinds = {"V": (SectionV, l), "E": (SectionE, k), "Ebar": (SectionEbar, k)}
    for sname, sbody in sdoc.items():
        path = f"/sections/{sname}"
        if not isinstance(sbody, dict):
            raise ScenarioError(path, "expected an object")
        for key in sbody:
            if key not in {"kind", "components"}:
                raise ScenarioError(f"{path}/{key}", "unknown key")
        kind = sbody.get("kind")
        if kind not in kinds:
            raise ScenarioError(f"{path}/kind", "expected V, E or Ebar")
        cls, length = kinds[kind]
        comps = _expr_vector(sbody.get("components"), f"{path}/components",
                             params, length)
        try:
            sections[sname] = cls(chart, comps)
        except ValidationError as err:
            raise ScenarioError(path, str(err)) from None

    points = {}
    pdoc = _want(doc, "points", dict, "/points", default={})
    for pname, pbody in pdoc.items():
        path = f"/points/{pname}"
        if not isinstance(pbody, dict):
            raise ScenarioError(path, "expected an object")
        for key in pbody:
            if key not in {"x", "y"}:
                raise ScenarioError(f"{path}/{key}", "unknown key")
        px = _float_vector(pbody.get("x"), f"{path}/x", n)
        py = _float_vector(pbody.get("y"), f"{path}/y", k)
        points[pname] = EPoint.of(px, py)

    if "model_vector" in doc:
        mv = np.array(_float_vector(doc["model_vector"], "/model_vector", k))
    else:
        mv = np.array(defaults.a0)
        defaults_used.append("model_vector")

    # Reserved names fall back to seeded defaults.
    if "s" not in sections:
        sections["s"] = SectionV(chart, [ex.Const(v) for v in defaults.s])
        defaults_used.append("sections/s")
    if "sigma" not in sections:
        sections["sigma"] = SectionE(chart, [
            _affine_in_x1(defaults.sigma[2 * i:2 * i + 2]) for i in range(k)])
        defaults_used.append("sections/sigma")
    if "sigmabar" not in sections:
        sections["sigmabar"] = SectionEbar(chart, [
            _affine_in_x1(defaults.sigmabar[2 * i:2 * i + 2])
            for i in range(k)])
        defaults_used.append("sections/sigmabar")
    if "e1" not in points:
        if curves:
            first = next(iter(curves.values()))
            u0 = first.domain[0]
            e1x = [ex.evaluate(c, {"u": u0}) for c in first.base]
        else:
            e1x = defaults.e1_x
        points["e1"] = EPoint.of(e1x, defaults.e1_y)
        defaults_used.append("points/e1")
    if "e2" not in points:
        points["e2"] = EPoint.of(list(points["e1"].x), defaults.e2_y)
        defaults_used.append("points/e2")
    if "e0" not in points:
        points["e0"] = EPoint.of(defaults.e0_x, defaults.e0_y)
        defaults_used.append("points/e0")

    checks_raw = doc.get("checks", "all")
    if checks_raw == "all":
        checks = ["all"]
    else:
        if not isinstance(checks_raw, list):
            raise ScenarioError("/checks", 'expected "all" or a list')
        checks = []
        for i, cn in enumerate(checks_raw):
            if cn not in CHECK_ORDER:
                raise ScenarioError(f"/checks/{i}", f"unknown check {cn!r}")
            checks.append(cn)

    expect_fail = doc.get("expect_fail", [])
    if not isinstance(expect_fail, list):
        raise ScenarioError("/expect_fail", "expected a list")
    for i, cn in enumerate(expect_fail):
        if cn not in CHECK_ORDER:
            raise ScenarioError(f"/expect_fail/{i}", f"unknown check {cn!r}")

    return Scenario(
        name=name, chart=chart, anchor=anchor, conn=conn,
        structure=structure, force=eff_force if symbolic_force else None,
        lagrangian=lagrangian, curves=curves, sections=sections,
        points=points, model_vector=mv, cfg=cfg, sampler=sampler, span=span,
        checks=checks, expect_fail=list(expect_fail),
        connection_source=connection_source, defaults_used=defaults_used)


# ---------------------------------------------------------------------------
# Check registry

def _need_conn(scn):
    if scn.conn is None:
        return "no connection (explicit, pseudo_sode or k=1 lagrangian)"
    return None


def _need_affine(scn):
    why = _need_conn(scn)
    if why:
        return why
    if not is_affine(scn.conn, scn.sampler):
        return "connection coefficients are not affine in y"
    return None


def _need_structure(scn):
    if scn.structure is None:
        return "no structure block"
    return None


def _run_validate(scn: Scenario) -> CheckResult:
    t0 = time.perf_counter()
    if scn.structure is not None:
        res = alg.validate_algebroid(scn.structure, scn.sampler)
    else:
        res = CheckResult(
            name="validate", status="pass",
            provenance="chart, anchor and named objects parsed and "
                       "shape-checked at load",
            residual=0.0, tolerance=1e-9, details={"structure": False})
    worst = res.residual or 0.0
    details = dict(res.details)
    for cname, curve in scn.curves.items():
        ok, resid, worst_u = check_admissible(scn.anchor, curve)
        details[f"curve_{cname}"] = resid
        if not ok:
            details[f"curve_{cname}_worst_u"] = worst_u
        worst = max(worst, resid)
    status = "pass" if res.status == "pass" and worst <= 1e-9 else "fail"
    return CheckResult(
        name="validate", status=status, provenance=res.provenance +
        ("; admissibility of every named curve" if scn.curves else ""),
        residual=worst, tolerance=res.tolerance, witness=res.witness,
        details=details, elapsed=time.perf_counter() - t0)


def _run_prop1(scn: Scenario) -> CheckResult:
    curve = scn.first_curve()
    return verify_prop1(scn.conn, curve, scn.points["e1"], scn.points["e2"],
                        scn.cfg)


def _run_prop4(scn: Scenario) -> CheckResult:
    return verify_prop4(scn.conn, scn.sections["s"], scn.points["e0"],
                        scn.model_vector, scn.span, scn.cfg)


def _run_prop5(scn: Scenario) -> CheckResult:
    t0 = time.perf_counter()
    resid, witness = verify_prop5(scn.conn, scn.sections["s"],
                                  scn.sections["sigma"],
                                  scn.sections["sigmabar"], scn.sampler)
    tol = 1e-12
    return CheckResult(
        name="prop5", status="pass" if resid <= tol else "fail",
        provenance="bracket route for the two covariant derivatives: "
                   "verticality and agreement with the coordinate formulas",
        residual=resid, tolerance=tol, witness=witness,
        elapsed=time.perf_counter() - t0)


def _run_hish(scn: Scenario) -> CheckResult:
    t0 = time.perf_counter()
    resid, witness = hish_residual(scn.conn, scn.sections["s"],
                                   scn.sections["sigma"], scn.sampler)
    tol = 1e-12
    return CheckResult(
        name="hish", status="pass" if resid <= tol else "fail",
        provenance="horizontal lift along a section equals its tangent "
                   "image minus the vertical bracket correction",
        residual=resid, tolerance=tol, witness=witness,
        elapsed=time.perf_counter() - t0)


def _run_berwald(scn: Scenario) -> CheckResult:
    return verify_affine_reproduction(scn.conn, scn.sections["s"],
                                      scn.sections["sigma"],
                                      scn.sections["sigmabar"], scn.sampler)


def _run_prop67(scn: Scenario) -> CheckResult:
    return verify_prop6_prop7(scn.conn, scn.sections["s"], scn.points["e0"],
                              scn.model_vector, scn.span, scn.cfg,
                              scn.sampler)


def _run_sode(scn: Scenario) -> CheckResult:
    return alg.verify_sode_suite(scn.structure, scn.force, scn.sampler)


def _run_lagrangian(scn: Scenario) -> CheckResult:
    return alg.euler_lagrange_check(scn.structure, scn.lagrangian, scn.force,
                                    scn.points["e0"], scn.span, scn.cfg)


def _run_direct(scn: Scenario) -> CheckResult:
    return alg.verify_direct_formulae(scn.structure, scn.conn, scn.sampler,
                                      seed=scn.sampler.seed)


def _need_prop1(scn):
    why = _need_conn(scn)
    if why:
        return why
    if not scn.curves:
        return "no curves"
    return None


def _need_sode(scn):
    why = _need_structure(scn)
    if why:
        return why
    if scn.force is None:
        return "no symbolic force (pseudo_sode or k=1 lagrangian)"
    return None


def _need_lagrangian(scn):
    why = _need_sode(scn)
    if why:
        return why
    if scn.lagrangian is None:
        return "no lagrangian"
    return None


def _need_direct(scn):
    why = _need_structure(scn)
    if why:
        return why
    return _need_conn(scn)


CHECKS = {
    "validate": (lambda scn: None, _run_validate),
    "prop1": (_need_prop1, _run_prop1),
    "prop4": (lambda scn: _need_conn(scn), _run_prop4),
    "prop5": (_need_affine, _run_prop5),
    "hish": (lambda scn: _need_conn(scn), _run_hish),
    "berwald": (_need_affine, _run_berwald),
    "prop67": (lambda scn: _need_conn(scn), _run_prop67),
    "sode": (_need_sode, _run_sode),
    "lagrangian": (_need_lagrangian, _run_lagrangian),
    "direct": (_need_direct, _run_direct),
}


def resolve_checks(scn: Scenario, requested=None):
    """Expand "all" against applicability; reject impossible requests.

    Returns the list of names to run.  Explicitly requested checks that
    cannot run raise ScenarioError (a configuration problem), while
    "all" silently keeps only the applicable ones.
    """
    requested = requested if requested is not None else scn.checks
    if requested == ["all"] or requested == "all":
        return [nm for nm in CHECK_ORDER if CHECKS[nm][0](scn) is None]
    out = []
    for nm in requested:
        if nm not in CHECKS:
            raise ScenarioError("/checks", f"unknown check {nm!r}")
        why = CHECKS[nm][0](scn)
        if why:
            raise ScenarioError("/checks", f"check {nm!r} not applicable: "
                                           f"{why}")
        out.append(nm)
    return out


def run_checks(scn: Scenario, names=None) -> Report:
    names = resolve_checks(scn, names)
    results = []
    for nm in names:
        t0 = time.perf_counter()
        try:
            results.append(CHECKS[nm][1](scn))
        except (NotAffineError, ValidationError, ex.EvalDomainError,
                alg.DegenerateLagrangianError) as err:
            results.append(CheckResult(
                name=nm, status="error",
                provenance="check aborted before producing a residual",
                details={"error": str(err)},
                elapsed=time.perf_counter() - t0))
    results = apply_expectations(results, scn.expect_fail)
    config = {
        "h_step": scn.cfg.h_step,
        "tol": scn.cfg.tol,
        "samples": scn.sampler.count,
        "span": list(scn.span),
        "connection_source": scn.connection_source,
    }
    return Report(name=scn.name, seed=scn.sampler.seed, config=config,
                  checks=results)
