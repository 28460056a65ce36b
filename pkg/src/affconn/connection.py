"""Generalised connections over the anchor map.

A connection is the local data Gamma^alpha_a(x, y): the horizontal lift
of an anchored-bundle point (x, v) at e = (x, y) is the tangent vector
(rho(x) v, -Gamma(x, y) v).  Nothing here assumes linearity in v or any
structure on Gamma beyond smoothness; the affine case is detected and
split, and the three covariant derivatives it induces (on points, on
model vectors, and on enlarged-fibre sections) are built from it.

The bracket identity checks pit the coordinate formulas against
honestly computed vector-field brackets on the total space, so the two
routes share no algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as ex
from .bundle import (AnchorSpec, ChartSpec, EPoint, ProlongedSection,
                     SectionE, SectionEbar, SectionV, TildeSection,
                     ValidationError, VectorFieldE, canonical_section,
                     vertical_lift, vf_bracket)
from .expr import Expr
from .sampling import SampleBox


class NotAffineError(ValueError):
    """Raised when an affine-only operation meets a non-affine connection."""


@dataclass
class Connection:
    anchor: AnchorSpec
    gamma: list  # k rows of l expressions in (x, y)

    def __post_init__(self):
        chart = self.chart
        if len(self.gamma) != chart.k:
            raise ValidationError(
                f"connection needs {chart.k} coefficient rows, "
                f"got {len(self.gamma)}")
        allowed = set(chart.xnames) | set(chart.ynames)
        for al, row in enumerate(self.gamma):
            if len(row) != chart.l:
                raise ValidationError(
                    f"connection row {al+1} needs {chart.l} entries, "
                    f"got {len(row)}")
            for a, entry in enumerate(row):
                extra = ex.free_vars(entry) - allowed
                if extra:
                    raise ValidationError(
                        f"connection coefficient ({al+1},{a+1}) depends on "
                        f"{sorted(extra)}")

    @property
    def chart(self) -> ChartSpec:
        return self.anchor.chart


@dataclass
class AffineSplit:
    """Gamma^alpha_a = gamma0[alpha][a](x) + gamma1[alpha][a][beta](x) y^beta."""

    gamma0: list
    gamma1: list


def h_apply(conn: Connection, e: EPoint, v):
    """Horizontal lift of (x, v) at e: returns (xdot, ydot)."""
    chart = conn.chart
    env = e.env()
    v = [float(c) for c in v]
    if len(v) != chart.l:
        raise ValidationError(f"expected {chart.l} components, got {len(v)}")
    xdot = tuple(
        sum(ex.evaluate(conn.anchor.rho[i][a], env) * v[a]
            for a in range(chart.l))
        for i in range(chart.n))
    ydot = tuple(
        -sum(ex.evaluate(conn.gamma[al][a], env) * v[a]
             for a in range(chart.l))
        for al in range(chart.k))
    return xdot, ydot


def horizontal_basis(conn: Connection) -> list:
    """The l horizontal frame sections of the prolongation."""
    chart = conn.chart
    out = []
    for a in range(chart.l):
        za = [ex.Const(1.0 if b == a else 0.0) for b in range(chart.l)]
        vert = [ex.fold(ex.Neg(conn.gamma[al][a])) for al in range(chart.k)]
        out.append(ProlongedSection(za, vert))
    return out


def adapted_components(conn: Connection, Z: ProlongedSection):
    """Adapted-frame components (z^a, W^alpha) of a prolonged section."""
    chart = conn.chart
    W = [ex.fold(ex.Add(Z.vert[al],
                        ex.esum(ex.Mul(Z.za[a], conn.gamma[al][a])
                                for a in range(chart.l))))
         for al in range(chart.k)]
    return [ex.fold(c) for c in Z.za], W


def from_adapted(conn: Connection, za, W) -> ProlongedSection:
    """Rebuild coordinate-frame components from adapted ones."""
    chart = conn.chart
    vert = [ex.fold(ex.Sub(W[al],
                           ex.esum(ex.Mul(za[a], conn.gamma[al][a])
                                   for a in range(chart.l))))
            for al in range(chart.k)]
    return ProlongedSection(list(za), vert)


def connection_map_K(conn: Connection, e: EPoint, v, Q, tol: float = 1e-9):
    """Vertical part of a prolongation element (v, Q) at e.

    Q = (xdot, ydot) must satisfy xdot = rho(e) v within ``tol``;
    returns K^alpha = ydot^alpha + Gamma^alpha_a(e) v^a.
    """
    chart = conn.chart
    env = e.env()
    xdot, ydot = Q
    v = [float(c) for c in v]
    for i in range(chart.n):
        expect = sum(ex.evaluate(conn.anchor.rho[i][a], env) * v[a]
                     for a in range(chart.l))
        if abs(xdot[i] - expect) > tol:
            raise ValidationError(
                f"(v, Q) is not in the prolongation: xdot[{i+1}]={xdot[i]} "
                f"but rho(e)v={expect}")
    return tuple(
        ydot[al] + sum(ex.evaluate(conn.gamma[al][a], env) * v[a]
                       for a in range(chart.l))
        for al in range(chart.k))


# ---------------------------------------------------------------------------
# Affine structure

def _second_y_derivatives(conn: Connection):
    chart = conn.chart
    for al in range(chart.k):
        for a in range(chart.l):
            for b1 in range(chart.k):
                d1 = ex.differentiate(conn.gamma[al][a], f"y{b1+1}")
                for b2 in range(b1, chart.k):
                    yield al, a, ex.differentiate(d1, f"y{b2+1}")


def is_affine(conn: Connection, sampler: SampleBox | None = None) -> bool:
    """True when every coefficient is affine in the fibre coordinates."""
    for _, _, second in _second_y_derivatives(conn):
        if not ex.is_zero(second, sampler):
            return False
    return True


def affine_split(conn: Connection, sampler: SampleBox | None = None) -> AffineSplit:
    """Split affine coefficients into constant and linear parts in y.

    gamma0 is Gamma at y=0, gamma1 the y-derivative; raises
    NotAffineError naming the first offending coefficient.
    """
    chart = conn.chart
    for al, a, second in _second_y_derivatives(conn):
        if not ex.is_zero(second, sampler):
            raise NotAffineError(
                f"coefficient ({al+1},{a+1}) is not affine in y")
    y0 = {f"y{b+1}": ex.Const(0.0) for b in range(chart.k)}
    gamma0 = [[ex.fold(ex.subst(conn.gamma[al][a], y0))
               for a in range(chart.l)] for al in range(chart.k)]
    # The y-derivative may still mention y through terms that cancel
    # (affineness above is a sampled statement); evaluating it at y=0
    # normalises the linear part to x-only form.
    gamma1 = [[[ex.fold(ex.subst(
        ex.differentiate(conn.gamma[al][a], f"y{b+1}"), y0))
                for b in range(chart.k)]
               for a in range(chart.l)] for al in range(chart.k)]
    return AffineSplit(gamma0, gamma1)


def horizontal_field(conn: Connection, s: SectionV) -> VectorFieldE:
    """The vector field h(s) on the total space for a basic section s."""
    chart = conn.chart
    xcomps = [ex.fold(ex.esum(ex.Mul(s.comps[a], conn.anchor.rho[i][a])
                              for a in range(chart.l)))
              for i in range(chart.n)]
    ycomps = [ex.fold(ex.Neg(ex.esum(ex.Mul(s.comps[a], conn.gamma[al][a])
                                     for a in range(chart.l))))
              for al in range(chart.k)]
    return VectorFieldE(xcomps, ycomps)


def rho_of_section(anchor: AnchorSpec, s: SectionV) -> list:
    """Base vector field rho(s), one expression per base direction."""
    chart = anchor.chart
    return [ex.fold(ex.esum(ex.Mul(s.comps[a], anchor.rho[i][a])
                            for a in range(chart.l)))
            for i in range(chart.n)]


def _rho_s_apply(anchor: AnchorSpec, s: SectionV, f: Expr) -> Expr:
    comps = rho_of_section(anchor, s)
    return ex.fold(ex.esum(ex.Mul(comps[i], ex.differentiate(f, f"x{i+1}"))
                           for i in range(anchor.chart.n)))


def nabla(conn: Connection, s: SectionV, sigma: SectionE,
          split: AffineSplit | None = None) -> SectionEbar:
    """Covariant derivative of an affine-bundle section (affine case)."""
    chart = conn.chart
    if split is None:
        split = affine_split(conn)
    comps = []
    for al in range(chart.k):
        terms = []
        for a in range(chart.l):
            inner = ex.esum(
                [ex.esum(ex.Mul(conn.anchor.rho[i][a],
                                ex.differentiate(sigma.comps[al], f"x{i+1}"))
                         for i in range(chart.n)),
                 split.gamma0[al][a],
                 ex.esum(ex.Mul(split.gamma1[al][a][b], sigma.comps[b])
                         for b in range(chart.k))])
            terms.append(ex.Mul(s.comps[a], inner))
        comps.append(ex.fold(ex.esum(terms)))
    return SectionEbar(chart, comps)


def nabla_bar(conn: Connection, s: SectionV, sbar: SectionEbar,
              split: AffineSplit | None = None) -> SectionEbar:
    """Covariant derivative of a model-bundle section (affine case)."""
    chart = conn.chart
    if split is None:
        split = affine_split(conn)
    comps = []
    for al in range(chart.k):
        terms = []
        for a in range(chart.l):
            inner = ex.esum(
                [ex.esum(ex.Mul(conn.anchor.rho[i][a],
                                ex.differentiate(sbar.comps[al], f"x{i+1}"))
                         for i in range(chart.n)),
                 ex.esum(ex.Mul(split.gamma1[al][a][b], sbar.comps[b])
                         for b in range(chart.k))])
            terms.append(ex.Mul(s.comps[a], inner))
        comps.append(ex.fold(ex.esum(terms)))
    return SectionEbar(chart, comps)


def nabla_tilde(conn: Connection, s: SectionV, X: TildeSection) -> TildeSection:
    """Derivative of an enlarged-fibre section via the bracket route.

    The vertical part of [h(s), v(X)] plus rho(s)(X^0) times the
    canonical section.  Works for any connection; for affine ones it
    restricts to nabla and nabla_bar on the two component types.
    """
    chart = conn.chart
    hs = horizontal_field(conn, s)
    vX = vertical_lift(chart, X)
    br = vf_bracket(hs, vX)
    comp0 = _rho_s_apply(conn.anchor, s, X.comp0)
    comps = [ex.fold(ex.Add(br.ycomps[al], ex.Mul(comp0, ex.Var(f"y{al+1}"))))
             for al in range(chart.k)]
    return TildeSection(comp0, comps)


# ---------------------------------------------------------------------------
# Identity checks

def _max_abs(exprs, names, sampler: SampleBox):
    """Max |value| over the sample set; returns (max, witness env)."""
    worst = 0.0
    witness = None
    names = sorted(names, key=ex.var_sort_key)
    for env in sampler.envs(names):
        for e in exprs:
            v = abs(ex.evaluate(e, env))
            if v > worst or witness is None:
                worst = v
                witness = dict(env)
    return worst, witness


def hish_residual(conn: Connection, s: SectionV, sigma: SectionE,
                  sampler: SampleBox):
    """Residual of the horizontal lift against tangent-map-minus-bracket.

    Along e = sigma(x) the lift of (x, s) must equal T(sigma)(rho(s))
    minus the vertical field [h(s), v(sigma)] there.
    """
    chart = conn.chart
    hs = horizontal_field(conn, s)
    Xsec = TildeSection(ex.Const(1.0), list(sigma.comps))
    br = vf_bracket(hs, vertical_lift(chart, Xsec))
    onsec = {f"y{al+1}": sigma.comps[al] for al in range(chart.k)}
    rho_s = rho_of_section(conn.anchor, s)
    residuals = []
    for al in range(chart.k):
        tsig = ex.esum(ex.Mul(rho_s[i],
                              ex.differentiate(sigma.comps[al], f"x{i+1}"))
                       for i in range(chart.n))
        lift = ex.subst(hs.ycomps[al], onsec)
        residuals.append(ex.fold(ex.Sub(lift,
                                        ex.Sub(tsig, ex.subst(br.ycomps[al],
                                                              onsec)))))
    return _max_abs(residuals, set(chart.xnames), sampler)


def verify_prop5(conn: Connection, s: SectionV, sigma: SectionE,
                 sbar: SectionEbar, sampler: SampleBox,
                 split: AffineSplit | None = None):
    """Bracket route vs coordinate formulas for the affine derivatives.

    Checks that [h(s), v(sigma)] and [h(s), v(sigmabar)] are vertical
    and reproduce nabla and nabla_bar.  Returns (max_residual, witness).
    """
    chart = conn.chart
    if split is None:
        split = affine_split(conn)
    hs = horizontal_field(conn, s)
    residuals = []
    for X, formula in (
            (TildeSection(ex.Const(1.0), list(sigma.comps)),
             nabla(conn, s, sigma, split)),
            (TildeSection(ex.Const(0.0), list(sbar.comps)),
             nabla_bar(conn, s, sbar, split))):
        br = vf_bracket(hs, vertical_lift(chart, X))
        residuals.extend(br.xcomps)
        for al in range(chart.k):
            residuals.append(ex.fold(ex.Sub(br.ycomps[al], formula.comps[al])))
    names = set(chart.xnames) | set(chart.ynames)
    return _max_abs(residuals, names, sampler)
