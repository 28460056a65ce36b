"""Charts, anchored bundles, sections and admissible curves.

The setting is an affine bundle over an n-dimensional base with k fibre
coordinates y1..yk, together with an anchored vector bundle with fibre
dimension l and anchor matrix rho[i][a] mapping its sections to base
vector fields.  When the anchoring lives on the affine bundle itself
(the Lie algebroid situation), l = k+1 and the extra index 0 labels the
affine generator; that flag changes nothing here except validation.

Affine fibre elements are represented against the frame (e_0, e_alpha):
a point of the affine fibre has e_0-coefficient 1, a vector of the
underlying model fibre has e_0-coefficient 0, and a general element of
the enlarged fibre carries both components.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .expr import Expr


class ValidationError(ValueError):
    """A chart, section or curve violates its structural contract."""


@dataclass(frozen=True)
class ChartSpec:
    n: int
    k: int
    l: int
    anchored_in_E: bool = False

    def __post_init__(self):
        if self.n < 1 or self.k < 1 or self.l < 1:
            raise ValidationError("chart dimensions must be positive")
        if self.anchored_in_E and self.l != self.k + 1:
            raise ValidationError(
                f"anchoring on the affine bundle needs l == k+1, "
                f"got l={self.l}, k={self.k}")

    @property
    def xnames(self):
        return [f"x{i+1}" for i in range(self.n)]

    @property
    def ynames(self):
        return [f"y{a+1}" for a in range(self.k)]


@dataclass
class AnchorSpec:
    """Anchor matrix rho[i][a], one expression per base direction i."""

    chart: ChartSpec
    rho: list  # n rows of l expressions, free only in x

    def __post_init__(self):
        errs = validate_anchor(self.chart, self.rho)
        if errs:
            raise ValidationError("; ".join(errs))


def validate_anchor(chart: ChartSpec, rho) -> list:
    errs = []
    allowed = set(chart.xnames)
    if len(rho) != chart.n:
        errs.append(f"anchor needs {chart.n} rows, got {len(rho)}")
        return errs
    for i, row in enumerate(rho):
        if len(row) != chart.l:
            errs.append(f"anchor row {i+1} needs {chart.l} entries, "
                        f"got {len(row)}")
            continue
        for a, entry in enumerate(row):
            extra = ex.free_vars(entry) - allowed
            if extra:
                errs.append(
                    f"anchor entry ({i+1},{a+1}) depends on "
                    f"{sorted(extra)}; only base coordinates are allowed")
    return errs


def validate_chart(chart: ChartSpec, rho) -> list:
    """Structural errors for a chart/anchor pair, empty when valid."""
    try:
        ChartSpec(chart.n, chart.k, chart.l, chart.anchored_in_E)
    except ValidationError as e:
        return [str(e)]
    return validate_anchor(chart, rho)


@dataclass(frozen=True)
class EPoint:
    """A point of the affine bundle: base values x, fibre values y."""

    x: tuple
    y: tuple

    @staticmethod
    def of(x, y) -> "EPoint":
        return EPoint(tuple(float(v) for v in x), tuple(float(v) for v in y))

    def env(self) -> dict:
        env = {f"x{i+1}": v for i, v in enumerate(self.x)}
        env.update({f"y{a+1}": v for a, v in enumerate(self.y)})
        return env


@dataclass(frozen=True)
class VPoint:
    """A point of the anchored bundle: base values x, fibre values v."""

    x: tuple
    v: tuple

    @staticmethod
    def of(x, v) -> "VPoint":
        return VPoint(tuple(float(t) for t in x), tuple(float(t) for t in v))


@dataclass(frozen=True)
class TildeVector:
    """Numeric element of the enlarged fibre at a base point."""

    x: tuple
    c0: float
    cbar: tuple

    @staticmethod
    def of(x, c0, cbar) -> "TildeVector":
        return TildeVector(tuple(float(v) for v in x), float(c0),
                           tuple(float(v) for v in cbar))


@dataclass
class TildeSection:
    """Section of the enlarged bundle: components against (e_0, e_alpha).

    ``comp0`` and ``comps`` may depend on x only (a basic section) or on
    x and y (a section along the projection); basicness is a predicate,
    not a constraint.
    """

    comp0: Expr
    comps: list

    def is_basic(self, chart: ChartSpec) -> bool:
        allowed = set(chart.xnames)
        used = ex.free_vars(self.comp0)
        for c in self.comps:
            used |= ex.free_vars(c)
        return used <= allowed

    def fold(self) -> "TildeSection":
        return TildeSection(ex.fold(self.comp0),
                            [ex.fold(c) for c in self.comps])


def _check_basic(comps, chart: ChartSpec, what: str):
    allowed = set(chart.xnames)
    for idx, c in enumerate(comps):
        extra = ex.free_vars(c) - allowed
        if extra:
            raise ValidationError(
                f"{what} component {idx+1} depends on {sorted(extra)}; "
                f"only base coordinates are allowed")


@dataclass
class SectionV:
    """Basic section of the anchored bundle, components s^a(x)."""

    chart: ChartSpec
    comps: list

    def __post_init__(self):
        if len(self.comps) != self.chart.l:
            raise ValidationError(
                f"section needs {self.chart.l} components, got {len(self.comps)}")
        _check_basic(self.comps, self.chart, "anchored-bundle section")


@dataclass
class SectionE:
    """Section of the affine bundle, fibre components sigma^alpha(x)."""

    chart: ChartSpec
    comps: list

    def __post_init__(self):
        if len(self.comps) != self.chart.k:
            raise ValidationError(
                f"section needs {self.chart.k} components, got {len(self.comps)}")
        _check_basic(self.comps, self.chart, "affine-bundle section")


@dataclass
class SectionEbar:
    """Section of the model vector bundle, components sigmabar^alpha(x)."""

    chart: ChartSpec
    comps: list

    def __post_init__(self):
        if len(self.comps) != self.chart.k:
            raise ValidationError(
                f"section needs {self.chart.k} components, got {len(self.comps)}")
        _check_basic(self.comps, self.chart, "model-bundle section")


@dataclass
class VectorFieldE:
    """Vector field on the total space: d/dx and d/dy components."""

    xcomps: list
    ycomps: list

    def apply(self, f: Expr) -> Expr:
        """Directional derivative of a scalar on the total space."""
        terms = []
        for i, c in enumerate(self.xcomps):
            terms.append(ex.Mul(c, ex.differentiate(f, f"x{i+1}")))
        for a, c in enumerate(self.ycomps):
            terms.append(ex.Mul(c, ex.differentiate(f, f"y{a+1}")))
        return ex.fold(ex.esum(terms))

    def fold(self) -> "VectorFieldE":
        return VectorFieldE([ex.fold(c) for c in self.xcomps],
                            [ex.fold(c) for c in self.ycomps])


def vf_bracket(v1: VectorFieldE, v2: VectorFieldE) -> VectorFieldE:
    """Coordinate Lie bracket [v1, v2] on the total space."""
    xcomps = [ex.fold(ex.Sub(v1.apply(c2), v2.apply(c1)))
              for c1, c2 in zip(v1.xcomps, v2.xcomps)]
    ycomps = [ex.fold(ex.Sub(v1.apply(c2), v2.apply(c1)))
              for c1, c2 in zip(v1.ycomps, v2.ycomps)]
    return VectorFieldE(xcomps, ycomps)


@dataclass
class ProlongedSection:
    """Section of the prolongation in the coordinate frame.

    ``za`` are the components against the lifted frame of the anchored
    bundle (length l), ``vert`` the components against the vertical
    frame (length k).  The adapted frame of a connection mixes them:
    W^alpha = vert^alpha + za^a Gamma^alpha_a, recoverable both ways.
    """

    za: list
    vert: list

    def anchor_field(self, anchor: AnchorSpec) -> VectorFieldE:
        """Image under the prolonged anchor, a vector field on E."""
        chart = anchor.chart
        xcomps = [ex.fold(ex.esum(ex.Mul(self.za[a], anchor.rho[i][a])
                                  for a in range(chart.l)))
                  for i in range(chart.n)]
        return VectorFieldE(xcomps, [ex.fold(c) for c in self.vert])

    def fold(self) -> "ProlongedSection":
        return ProlongedSection([ex.fold(c) for c in self.za],
                                [ex.fold(c) for c in self.vert])


# ---------------------------------------------------------------------------
# Canonical objects and fibre maps

def canonical_section(chart: ChartSpec) -> TildeSection:
    """The tautological section: e_0 plus y^alpha e_alpha."""
    return TildeSection(ex.Const(1.0),
                        [ex.Var(f"y{a+1}") for a in range(chart.k)])


def theta_map(e: EPoint, te: TildeVector) -> TildeVector:
    """Subtract the e_0-part times the affine point: lands in the model fibre."""
    lam = te.c0
    cbar = tuple(te.cbar[a] - lam * e.y[a] for a in range(len(te.cbar)))
    return TildeVector(te.x, 0.0, cbar)


def tilde_decompose(chart: ChartSpec, X: TildeSection):
    """Split X into f * (canonical section) + model part.

    Returns (f, comps) with f the e_0-component and comps the model
    components X^alpha - X^0 y^alpha, folded.
    """
    f = ex.fold(X.comp0)
    comps = [ex.fold(ex.Sub(X.comps[a], ex.Mul(X.comp0, ex.Var(f"y{a+1}"))))
             for a in range(chart.k)]
    return f, comps


def vertical_lift(chart: ChartSpec, X: TildeSection) -> VectorFieldE:
    """Vertical vector field with components X^alpha - X^0 y^alpha.

    The canonical section lifts to the zero field, which the folding
    rules produce structurally.
    """
    _, comps = tilde_decompose(chart, X)
    return VectorFieldE([ex.Const(0.0)] * chart.n, comps)


# ---------------------------------------------------------------------------
# Curves

@dataclass
class AdmissibleCurve:
    """Curve data: base curve cM(u) and anchored components c(u)."""

    chart: ChartSpec
    base: list   # n expressions in u
    comps: list  # l expressions in u
    domain: tuple

    def __post_init__(self):
        if len(self.base) != self.chart.n:
            raise ValidationError(
                f"curve base needs {self.chart.n} components, got {len(self.base)}")
        if len(self.comps) != self.chart.l:
            raise ValidationError(
                f"curve needs {self.chart.l} components, got {len(self.comps)}")
        for what, comps in (("curve base", self.base), ("curve", self.comps)):
            for idx, c in enumerate(comps):
                extra = ex.free_vars(c) - {"u"}
                if extra:
                    raise ValidationError(
                        f"{what} component {idx+1} depends on {sorted(extra)}; "
                        f"only the parameter u is allowed")
        a, b = self.domain
        if not (float(a) < float(b)):
            raise ValidationError("curve domain must be a nonempty interval")

    def base_env(self, u: float) -> dict:
        return {f"x{i+1}": ex.evaluate(self.base[i], {"u": u})
                for i in range(self.chart.n)}


def chebyshev_nodes(a: float, b: float, count: int) -> np.ndarray:
    """Chebyshev-Lobatto nodes on [a, b], endpoints included."""
    j = np.arange(count)
    t = np.cos(np.pi * j / (count - 1))
    return 0.5 * (a + b) + 0.5 * (b - a) * t[::-1]


def check_admissible(anchor: AnchorSpec, curve: AdmissibleCurve,
                     nodes: int = 33, tol: float = 1e-9):
    """Test d(cM)/du == rho(cM(u)) c(u) on Chebyshev nodes.

    Returns (ok, max_residual, worst_u).
    """
    chart = anchor.chart
    xsub = {f"x{i+1}": curve.base[i] for i in range(chart.n)}
    residuals = []
    for i in range(chart.n):
        lhs = ex.differentiate(curve.base[i], "u")
        rhs = ex.esum(ex.Mul(ex.subst(anchor.rho[i][a], xsub), curve.comps[a])
                      for a in range(chart.l))
        residuals.append(ex.fold(ex.Sub(lhs, rhs)))
    a, b = float(curve.domain[0]), float(curve.domain[1])
    worst = 0.0
    worst_u = a
    for u in chebyshev_nodes(a, b, nodes):
        env = {"u": float(u)}
        for r in residuals:
            val = abs(ex.evaluate(r, env))
            if val > worst:
                worst = val
                worst_u = float(u)
    return worst <= tol, worst, worst_u
