"""Berwald-type linearisation of a generalised connection.

Any connection, affine or not, induces a linear covariant operator on
sections of the pulled-back enlarged bundle, in two flavours that
differ only in how a vertical direction acts on the affine generator:
not at all ("plain", the pulled-back affine bundle picture) or by minus
the corresponding model vector ("hat", the pulled-back model picture).

The derivative tables over the adapted frame are:

    horizontal on e_0:    Gamma^g_a - y^b d(Gamma^g_a)/dy^b
    horizontal on e_b:    d(Gamma^g_a)/dy^b
    vertical on e_0:      0 (plain) or -delta (hat)
    vertical on e_b:      0

and the operator extends to arbitrary arguments by tensoriality in the
direction and the Leibniz rule over the prolonged anchor.
"""

from __future__ import annotations

import json
import time

import numpy as np

from . import expr as ex
from .bundle import ProlongedSection, SectionE, SectionEbar, SectionV, TildeSection
from .connection import (Connection, adapted_components, affine_split,
                         horizontal_basis, nabla, nabla_bar, nabla_tilde)
from .program import compile_exprs
from .report import CheckResult
from .sampling import SampleBox
from .transport import DiscreteCurve, TransportConfig, _grid, _us, lie_transport
from . import kernels

VARIANTS = ("plain", "hat")


class BerwaldTable:
    """Coefficient tables of one linearisation variant."""

    def __init__(self, conn: Connection, variant: str):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        self.conn = conn
        self.variant = variant
        chart = conn.chart
        self.h_e0 = []   # [a][gamma]
        self.h_ebar = []  # [a][beta][gamma]
        for a in range(chart.l):
            row0 = []
            for g in range(chart.k):
                drift = ex.esum(
                    ex.Mul(ex.Var(f"y{b+1}"),
                           ex.differentiate(conn.gamma[g][a], f"y{b+1}"))
                    for b in range(chart.k))
                row0.append(ex.fold(ex.Sub(conn.gamma[g][a], drift)))
            self.h_e0.append(row0)
            self.h_ebar.append(
                [[ex.differentiate(conn.gamma[g][a], f"y{b+1}")
                  for g in range(chart.k)] for b in range(chart.k)])
        if variant == "plain":
            self.v_e0 = [[ex.Const(0.0) for _ in range(chart.k)]
                         for _ in range(chart.k)]
        else:
            self.v_e0 = [[ex.Const(-1.0 if g == al else 0.0)
                          for g in range(chart.k)] for al in range(chart.k)]
        # Vertical directions never act on model frame sections.
        self.v_ebar = [[[ex.Const(0.0) for _ in range(chart.k)]
                        for _ in range(chart.k)] for _ in range(chart.k)]


def berwald_table(conn: Connection, variant: str) -> BerwaldTable:
    return BerwaldTable(conn, variant)


def covariant_D(conn: Connection, variant: str, Z: ProlongedSection,
                X: TildeSection, table: BerwaldTable | None = None
                ) -> TildeSection:
    """Apply the linearised operator along Z to an enlarged-bundle section.

    Z is given in coordinate-frame components; X in (e_0, e_alpha)
    components, possibly y-dependent.  The result pairs with the dual
    generator as the anchor derivative of X^0, by construction.
    """
    chart = conn.chart
    if table is None:
        table = BerwaldTable(conn, variant)
    elif table.variant != variant or table.conn is not conn:
        raise ValueError("table does not belong to this connection/variant")
    za, W = adapted_components(conn, Z)
    vf = Z.anchor_field(conn.anchor)
    comp0 = vf.apply(X.comp0)
    comps = []
    for g in range(chart.k):
        terms = [vf.apply(X.comps[g])]
        for a in range(chart.l):
            terms.append(ex.Mul(X.comp0, ex.Mul(za[a], table.h_e0[a][g])))
        for al in range(chart.k):
            terms.append(ex.Mul(X.comp0, ex.Mul(W[al], table.v_e0[al][g])))
        for b in range(chart.k):
            for a in range(chart.l):
                terms.append(ex.Mul(X.comps[b],
                                    ex.Mul(za[a], table.h_ebar[a][b][g])))
        comps.append(ex.fold(ex.esum(terms)))
    return TildeSection(comp0, comps)


# ---------------------------------------------------------------------------
# Exports

def table_to_doc(table: BerwaldTable) -> dict:
    chart = table.conn.chart
    return {
        "variant": table.variant,
        "dimensions": {"n": chart.n, "k": chart.k, "l": chart.l},
        "horizontal_on_e0": [[ex.to_str(c) for c in row]
                             for row in table.h_e0],
        "horizontal_on_ebar": [[[ex.to_str(c) for c in row]
                                for row in block]
                               for block in table.h_ebar],
        "vertical_on_e0": [[ex.to_str(c) for c in row]
                           for row in table.v_e0],
        "vertical_on_ebar": [[[ex.to_str(c) for c in row]
                              for row in block]
                             for block in table.v_ebar],
    }


def table_to_json(table: BerwaldTable) -> str:
    return json.dumps(table_to_doc(table), indent=2, sort_keys=True) + "\n"


def table_to_text(table: BerwaldTable) -> str:
    chart = table.conn.chart
    rows = []
    for a in range(chart.l):
        for g in range(chart.k):
            rows.append((f"D[H{a+1}] e0    . ebar{g+1}",
                         ex.to_str(table.h_e0[a][g])))
        for b in range(chart.k):
            for g in range(chart.k):
                rows.append((f"D[H{a+1}] ebar{b+1} . ebar{g+1}",
                             ex.to_str(table.h_ebar[a][b][g])))
    for al in range(chart.k):
        for g in range(chart.k):
            rows.append((f"D[V{al+1}] e0    . ebar{g+1}",
                         ex.to_str(table.v_e0[al][g])))
    width = max(len(r[0]) for r in rows)
    lines = [f"variant: {table.variant}"]
    lines.extend(f"{label:<{width}} = {value}" for label, value in rows)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Verifiers

def _sample_max(comps, names, sampler: SampleBox):
    worst, witness = 0.0, None
    names = sorted(names, key=ex.var_sort_key)
    for env in sampler.envs(names):
        for c in comps:
            v = abs(ex.evaluate(c, env))
            if witness is None or v > worst:
                worst, witness = v, dict(env)
    return worst, witness


def verify_affine_reproduction(conn: Connection, s: SectionV, sigma: SectionE,
                               sbar: SectionEbar, sampler: SampleBox,
                               tol: float = 1e-12) -> CheckResult:
    """On affine coefficients the linearisation restricts to the three
    covariant derivatives of the affine theory."""
    t0 = time.perf_counter()
    chart = conn.chart
    split = affine_split(conn)
    Hs = ProlongedSection(
        list(s.comps),
        [ex.fold(ex.Neg(ex.esum(ex.Mul(s.comps[a], conn.gamma[al][a])
                                for a in range(chart.l))))
         for al in range(chart.k)])
    residuals = []
    # Affine-bundle sections, plain variant.
    X = TildeSection(ex.Const(1.0), list(sigma.comps))
    got = covariant_D(conn, "plain", Hs, X)
    want = nabla(conn, s, sigma, split)
    residuals.append(ex.fold(got.comp0))
    residuals.extend(ex.fold(ex.Sub(g, w))
                     for g, w in zip(got.comps, want.comps))
    # Model sections, both variants.
    Xbar = TildeSection(ex.Const(0.0), list(sbar.comps))
    wantbar = nabla_bar(conn, s, sbar, split)
    for variant in VARIANTS:
        got = covariant_D(conn, variant, Hs, Xbar)
        residuals.append(ex.fold(got.comp0))
        residuals.extend(ex.fold(ex.Sub(g, w))
                         for g, w in zip(got.comps, wantbar.comps))
    # General enlarged sections against the bracket route.
    Xgen = TildeSection(sigma.comps[0] if chart.k else ex.Const(1.0),
                        [ex.Add(c, ex.Const(1.0)) for c in sbar.comps])
    got = covariant_D(conn, "plain", Hs, Xgen)
    want = nabla_tilde(conn, s, Xgen)
    residuals.append(ex.fold(ex.Sub(got.comp0, want.comp0)))
    residuals.extend(ex.fold(ex.Sub(g, w))
                     for g, w in zip(got.comps, want.comps))
    names = set(chart.xnames) | set(chart.ynames)
    worst, witness = _sample_max(residuals, names, sampler)
    return CheckResult(
        name="berwald", status="pass" if worst <= tol else "fail",
        provenance="linearised operator on affine coefficients reproduces "
                   "the covariant derivatives on points, vectors and "
                   "enlarged sections",
        residual=worst, tolerance=tol, witness=witness,
        details={}, elapsed=time.perf_counter() - t0)


def _parallel_section_ode(conn: Connection, variant: str, s: SectionV,
                          with_e0: bool):
    """Symbolic RHS for D-parallel transport along the flow of h(s).

    State: x, y, and the section values A (affine when with_e0, model
    otherwise).  Derived from the coefficient tables, not from the
    transport module.
    """
    chart = conn.chart
    table = BerwaldTable(conn, variant)
    anames = [f"a{g+1}" for g in range(chart.k)]
    rhs = []
    for g in range(chart.k):
        terms = []
        for a in range(chart.l):
            if with_e0:
                terms.append(ex.Mul(s.comps[a], table.h_e0[a][g]))
            for b in range(chart.k):
                terms.append(ex.Mul(ex.Var(anames[b]),
                                    ex.Mul(s.comps[a], table.h_ebar[a][b][g])))
        rhs.append(ex.fold(ex.Neg(ex.esum(terms))))
    return anames, rhs


def verify_prop6_prop7(conn: Connection, s: SectionV, e0, a0, span,
                       cfg: TransportConfig | None = None,
                       sampler: SampleBox | None = None,
                       tol_vertical: float = 1e-12) -> CheckResult:
    """Parallel sections of the linearisations match Lie transport.

    Horizontal, plain: a D-parallel affine value along the flow of h(s)
    is fibre translation by the Lie-transported difference vector.
    Horizontal, hat: a D-parallel model value is the Lie-transported
    vector itself.  Vertical, both variants: the appropriate sections
    are parallel identically (symbolic).
    """
    cfg = cfg or TransportConfig()
    sampler = sampler or SampleBox()
    t0 = time.perf_counter()
    chart = conn.chart
    a0 = np.asarray(a0, dtype=float)

    flow = lie_transport(conn, s, e0, a0 - np.asarray(e0.y), span, cfg)
    ys = flow.values[:, chart.n:chart.n + chart.k]
    etas = flow.values[:, chart.n + chart.k:]

    duv, h = _grid(float(span[0]), float(span[1]), cfg.h_step)
    residual_h = 0.0
    for variant, target in (("plain", ys + etas),
                            ("hat", lie_transport(conn, s, e0, a0, span, cfg)
                             .values[:, chart.n + chart.k:])):
        anames, arhs = _parallel_section_ode(conn, variant, s,
                                             with_e0=(variant == "plain"))
        xdot = [ex.fold(ex.esum(ex.Mul(s.comps[a], conn.anchor.rho[i][a])
                                for a in range(chart.l)))
                for i in range(chart.n)]
        ydot = [ex.fold(ex.Neg(ex.esum(ex.Mul(s.comps[a], conn.gamma[al][a])
                                       for a in range(chart.l))))
                for al in range(chart.k)]
        names = chart.xnames + chart.ynames + anames
        prog = compile_exprs(xdot + ydot + arhs, names)
        init = np.concatenate([np.asarray(e0.x), np.asarray(e0.y), a0])
        traj = kernels.rk4(prog, names, init, float(span[0]), h, duv)
        picked = traj[:, chart.n + chart.k:]
        residual_h = max(residual_h, float(np.max(np.abs(picked - target))))

    # Vertical directions, symbolically.
    vert_resid = []
    for al in range(chart.k):
        V = ProlongedSection([ex.Const(0.0)] * chart.l,
                             [ex.Const(1.0 if b == al else 0.0)
                              for b in range(chart.k)])
        sbar_comps = [ex.Add(ex.Var(f"x{(i % chart.n)+1}"), ex.Const(float(i)))
                      for i in range(chart.k)]
        basic = TildeSection(ex.Const(1.0), list(sbar_comps))
        got = covariant_D(conn, "plain", V, basic)
        vert_resid.extend([got.comp0, *got.comps])
        moving = TildeSection(
            ex.Const(1.0),
            [ex.Add(ex.Var(f"y{b+1}"), sbar_comps[b]) for b in range(chart.k)])
        got = covariant_D(conn, "hat", V, moving)
        vert_resid.extend([got.comp0, *got.comps])
    vert_resid = [ex.fold(c) for c in vert_resid]
    structural = all(c == ex.Const(0.0) for c in vert_resid)
    if structural:
        residual_v = 0.0
    else:
        residual_v, _ = _sample_max(vert_resid,
                                    set(chart.xnames) | set(chart.ynames),
                                    sampler)
    ok = residual_h <= cfg.tol and residual_v <= tol_vertical
    return CheckResult(
        name="prop67", status="pass" if ok else "fail",
        provenance="parallel sections of both linearisations along "
                   "horizontal flows are Lie transports; vertical "
                   "directions annihilate the appropriate sections",
        residual=max(residual_h, residual_v), tolerance=cfg.tol,
        witness=None,
        details={"horizontal_residual": residual_h,
                 "vertical_residual": residual_v,
                 "vertical_structural": structural},
        elapsed=time.perf_counter() - t0)
