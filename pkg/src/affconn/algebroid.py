"""Affine Lie algebroid structure and second-order dynamics.

Here the anchored bundle is the enlarged bundle of the affine bundle
itself (l = k+1, index 0 for the affine generator).  Structure
functions C[g][al][be] and C0[g][be] encode the brackets of the frame;
the prolongation then carries a bracket of its own, extended from the
frame relations by the Leibniz rule over the prolonged anchor.

A pseudo-SODE is a prolonged section whose lifted components are
(1, y^1..y^k); its dynamics exponent is the force f^alpha.  Such a
section splits the prolongation through the projector built from the
vertical endomorphism, which is exactly a connection; its coefficients
and the associated linearisations are constructed and cross-checked
here, including force fields of Lagrangian type.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import kernels
from .bundle import (AnchorSpec, ChartSpec, EPoint, ProlongedSection,
                     TildeSection, ValidationError)
from .connection import Connection, adapted_components
from .expr import Expr
from .program import compile_exprs
from .report import CheckResult
from .sampling import SampleBox
from .transport import DiscreteCurve, TransportConfig, _grid, _us


class DegenerateLagrangianError(ValueError):
    """The fibre Hessian is numerically singular on the sample box."""


@dataclass
class AlgebroidSpec:
    """Structure data over an anchored chart with l == k+1.

    C[g][al][be] are the model-frame bracket coefficients
    (antisymmetric in al, be), C0[g][be] the bracket of the affine
    generator with the model frame.  All entries depend on x only.
    """

    anchor: AnchorSpec
    C: list
    C0: list

    def __post_init__(self):
        chart = self.chart
        if not chart.anchored_in_E:
            raise ValidationError(
                "algebroid structure requires an anchored_in_E chart")
        k = chart.k
        allowed = set(chart.xnames)

        def check_entry(e, where):
            extra = ex.free_vars(e) - allowed
            if extra:
                raise ValidationError(
                    f"structure function {where} depends on {sorted(extra)}")

        if len(self.C) != k or any(len(b) != k for b in self.C) or \
                any(len(r) != k for b in self.C for r in b):
            raise ValidationError(f"C must be {k}x{k}x{k}")
        if len(self.C0) != k or any(len(r) != k for r in self.C0):
            raise ValidationError(f"C0 must be {k}x{k}")
        for g in range(k):
            for al in range(k):
                for be in range(k):
                    check_entry(self.C[g][al][be], f"C[{g+1}][{al+1}][{be+1}]")
                check_entry(self.C0[g][al], f"C0[{g+1}][{al+1}]")

    @property
    def chart(self) -> ChartSpec:
        return self.anchor.chart

    def structure(self, a: int, b: int, g: int) -> Expr:
        """Coefficient of e_{g+1} in the frame bracket [e_a, e_b], a,b in 0..k."""
        if a == 0 and b == 0:
            return ex.Const(0.0)
        if a == 0:
            return self.C0[g][b - 1]
        if b == 0:
            return ex.Neg(self.C0[g][a - 1])
        return self.C[g][a - 1][b - 1]


def zero_structure(anchor: AnchorSpec) -> AlgebroidSpec:
    k = anchor.chart.k
    z = ex.Const(0.0)
    return AlgebroidSpec(
        anchor,
        [[[z for _ in range(k)] for _ in range(k)] for _ in range(k)],
        [[z for _ in range(k)] for _ in range(k)])


# ---------------------------------------------------------------------------
# Brackets on the prolongation

def prolonged_bracket(spec: AlgebroidSpec, Z1: ProlongedSection,
                      Z2: ProlongedSection) -> ProlongedSection:
    """Bracket of prolonged sections: frame relations plus Leibniz terms."""
    chart = spec.chart
    k, l = chart.k, chart.l
    vf1 = Z1.anchor_field(spec.anchor)
    vf2 = Z2.anchor_field(spec.anchor)
    za = []
    for c in range(l):
        terms = []
        if c >= 1:
            for a in range(l):
                for b in range(l):
                    terms.append(ex.Mul(ex.Mul(Z1.za[a], Z2.za[b]),
                                        spec.structure(a, b, c - 1)))
        terms.append(vf1.apply(Z2.za[c]))
        terms.append(ex.Neg(vf2.apply(Z1.za[c])))
        za.append(ex.fold(ex.esum(terms)))
    vert = [ex.fold(ex.Sub(vf1.apply(Z2.vert[g]), vf2.apply(Z1.vert[g])))
            for g in range(k)]
    return ProlongedSection(za, vert)


def vertical_endomorphism(chart: ChartSpec, Z: ProlongedSection
                          ) -> ProlongedSection:
    """S(Z): the lifted components, recentred and sent vertical."""
    k = chart.k
    vert = [ex.fold(ex.Sub(Z.za[g + 1], ex.Mul(Z.za[0], ex.Var(f"y{g+1}"))))
            for g in range(k)]
    return ProlongedSection([ex.Const(0.0)] * chart.l, vert)


def pseudo_sode(spec: AlgebroidSpec, f) -> ProlongedSection:
    """The second-order section with force components f^alpha(x, y)."""
    chart = spec.chart
    if len(f) != chart.k:
        raise ValidationError(
            f"force needs {chart.k} components, got {len(f)}")
    allowed = set(chart.xnames) | set(chart.ynames)
    for al, c in enumerate(f):
        extra = ex.free_vars(c) - allowed
        if extra:
            raise ValidationError(
                f"force component {al+1} depends on {sorted(extra)}")
    za = [ex.Const(1.0)] + [ex.Var(f"y{g+1}") for g in range(chart.k)]
    return ProlongedSection(za, list(f))


def is_pseudo_sode(chart: ChartSpec, Z: ProlongedSection,
                   sampler: SampleBox | None = None) -> bool:
    if not ex.is_zero(ex.Sub(Z.za[0], ex.Const(1.0)), sampler):
        return False
    for g in range(chart.k):
        if not ex.is_zero(ex.Sub(Z.za[g + 1], ex.Var(f"y{g+1}")), sampler):
            return False
    return True


def d_gamma_S(spec: AlgebroidSpec, gamma_sec: ProlongedSection,
              Z: ProlongedSection) -> ProlongedSection:
    """Dynamical derivative of the vertical endomorphism along gamma_sec."""
    chart = spec.chart
    first = prolonged_bracket(spec, gamma_sec,
                              vertical_endomorphism(chart, Z))
    second = vertical_endomorphism(chart, prolonged_bracket(spec, gamma_sec, Z))
    za = [ex.fold(ex.Sub(a, b)) for a, b in zip(first.za, second.za)]
    vert = [ex.fold(ex.Sub(a, b)) for a, b in zip(first.vert, second.vert)]
    return ProlongedSection(za, vert)


def horizontal_projector(spec: AlgebroidSpec, f, Z: ProlongedSection
                         ) -> ProlongedSection:
    """P_H(Z) for the splitting induced by the pseudo-SODE with force f."""
    gamma_sec = pseudo_sode(spec, f)
    dgs = d_gamma_S(spec, gamma_sec, Z)
    half = ex.Const(0.5)
    za = [ex.fold(ex.Mul(half, ex.Add(ex.Sub(Z.za[c], dgs.za[c]),
                                      ex.Mul(Z.za[0], gamma_sec.za[c]))))
          for c in range(spec.chart.l)]
    vert = [ex.fold(ex.Mul(half, ex.Add(ex.Sub(Z.vert[g], dgs.vert[g]),
                                        ex.Mul(Z.za[0], gamma_sec.vert[g]))))
            for g in range(spec.chart.k)]
    return ProlongedSection(za, vert)


def sode_connection(spec: AlgebroidSpec, f) -> Connection:
    """Connection induced by a pseudo-SODE: coefficients from the projector.

    Column 0 holds the affine coefficient, columns 1..k the linear ones.
    The force components must be expressions (see lagrangian_sode for
    the k>1 Lagrangian case, which is numeric-only).
    """
    chart = spec.chart
    k = chart.k
    for c in f:
        if not isinstance(c, Expr):
            raise ValidationError(
                "sode_connection needs symbolic force components")
    gamma = []
    for al in range(k):
        lin = []
        for be in range(k):
            lin.append(ex.fold(ex.Mul(ex.Const(-0.5), ex.esum([
                ex.differentiate(f[al], f"y{be+1}"),
                ex.esum(ex.Mul(ex.Var(f"y{g+1}"), spec.C[al][g][be])
                        for g in range(k)),
                spec.C0[al][be]]))))
        aff = ex.fold(ex.Sub(ex.Neg(f[al]),
                             ex.esum(ex.Mul(ex.Var(f"y{be+1}"), lin[be])
                                     for be in range(k))))
        gamma.append([aff] + lin)
    return Connection(spec.anchor, gamma)


# ---------------------------------------------------------------------------
# Validation

def _sample_max(comps, names, sampler: SampleBox):
    worst, witness = 0.0, None
    names = sorted(names, key=ex.var_sort_key)
    for env in sampler.envs(names):
        for c in comps:
            v = abs(ex.evaluate(c, env))
            if witness is None or v > worst:
                worst, witness = v, dict(env)
    return worst, witness


def _rho_apply(anchor: AnchorSpec, col: int, g: Expr) -> Expr:
    """Base vector field of frame section ``col`` applied to g(x)."""
    chart = anchor.chart
    return ex.fold(ex.esum(
        ex.Mul(anchor.rho[i][col], ex.differentiate(g, f"x{i+1}"))
        for i in range(chart.n)))


def jacobiator(spec: AlgebroidSpec, a: int, b: int, c: int) -> list:
    """Components of the frame Jacobi sum for indices in 0..k."""
    chart = spec.chart
    k = chart.k
    comps = []
    for d in range(k):
        terms = []
        for (p, q, r) in ((a, b, c), (b, c, a), (c, a, b)):
            for g in range(k):
                terms.append(ex.Mul(spec.structure(p, q, g),
                                    spec.structure(g + 1, r, d)))
            terms.append(ex.Neg(_rho_apply(spec.anchor, r,
                                           spec.structure(p, q, d))))
        comps.append(ex.fold(ex.esum(terms)))
    return comps


def validate_algebroid(spec: AlgebroidSpec, sampler: SampleBox | None = None,
                       jacobi: str = "sample", tol: float = 1e-9
                       ) -> CheckResult:
    """Antisymmetry, anchor compatibility and the Jacobi identity.

    ``jacobi`` is "sample" (default) or "structural" (fold must reach
    zero exactly).
    """
    t0 = time.perf_counter()
    sampler = sampler or SampleBox()
    chart = spec.chart
    k = chart.k
    residuals = []
    details = {}

    anti = []
    for g in range(k):
        for al in range(k):
            for be in range(al, k):
                anti.append(ex.fold(ex.Add(spec.C[g][al][be],
                                           spec.C[g][be][al])))
    residuals.extend(anti)

    compat = []
    for a in range(k + 1):
        for b in range(a + 1, k + 1):
            for i in range(chart.n):
                lie = ex.Sub(_rho_apply(spec.anchor, a, spec.anchor.rho[i][b]),
                             _rho_apply(spec.anchor, b, spec.anchor.rho[i][a]))
                through = ex.esum(
                    ex.Mul(spec.structure(a, b, g), spec.anchor.rho[i][g + 1])
                    for g in range(k))
                compat.append(ex.fold(ex.Sub(through, lie)))
    residuals.extend(compat)

    jac = []
    for a in range(k + 1):
        for b in range(a + 1, k + 1):
            for c in range(b + 1, k + 1):
                jac.extend(jacobiator(spec, a, b, c))

    structural_jac = all(j == ex.Const(0.0) for j in jac)
    if jacobi == "structural":
        details["jacobi_mode"] = "structural"
        jac_res = 0.0 if structural_jac else float("inf")
        if not structural_jac:
            jr, _ = _sample_max(jac, set(chart.xnames), sampler)
            jac_res = max(jr, tol * 10)
    else:
        details["jacobi_mode"] = "sample"
        jac_res, _ = _sample_max(jac, set(chart.xnames), sampler) \
            if jac else (0.0, None)
    worst, witness = _sample_max(residuals, set(chart.xnames), sampler) \
        if residuals else (0.0, None)
    worst = max(worst, jac_res)
    details["jacobi_structural"] = structural_jac
    return CheckResult(
        name="validate", status="pass" if worst <= tol else "fail",
        provenance="frame antisymmetry, anchor morphism property and "
                   "Jacobi identity of the structure functions",
        residual=worst, tolerance=tol, witness=witness, details=details,
        elapsed=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Lagrangian dynamics

def _hessian(chart: ChartSpec, L: Expr) -> list:
    return [[ex.differentiate(ex.differentiate(L, f"y{al+1}"), f"y{be+1}")
             for be in range(chart.k)] for al in range(chart.k)]


def _force_numerator(spec: AlgebroidSpec, L: Expr) -> list:
    """Right-hand side b_beta with the Hessian not yet inverted."""
    chart = spec.chart
    k = chart.k
    out = []
    for be in range(k):
        dLdy_terms = []
        for g in range(k):
            coeff = ex.Add(
                ex.esum(ex.Mul(ex.Var(f"y{mu+1}"), spec.C[g][mu][be])
                        for mu in range(k)),
                spec.C0[g][be])
            dLdy_terms.append(ex.Mul(coeff, ex.differentiate(L, f"y{g+1}")))
        mixed = []
        for i in range(chart.n):
            speed = ex.Add(spec.anchor.rho[i][0],
                           ex.esum(ex.Mul(ex.Var(f"y{mu+1}"),
                                          spec.anchor.rho[i][mu + 1])
                                   for mu in range(k)))
            mixed.append(ex.Mul(speed,
                                ex.differentiate(
                                    ex.differentiate(L, f"y{be+1}"),
                                    f"x{i+1}")))
        out.append(ex.fold(ex.esum([
            ex.esum(ex.Mul(spec.anchor.rho[i][be + 1],
                           ex.differentiate(L, f"x{i+1}"))
                    for i in range(chart.n)),
            ex.esum(dLdy_terms),
            ex.Neg(ex.esum(mixed))])))
    return out


class LagrangianForceField:
    """Numeric force for k > 1: Hessian solved pointwise.

    Evaluable and finite-difference differentiable; has no symbolic
    form, so it cannot feed sode_connection.
    """

    def __init__(self, spec: AlgebroidSpec, L: Expr):
        self.spec = spec
        self.L = L
        chart = spec.chart
        self.k = chart.k
        self._names = chart.xnames + chart.ynames
        self._g = compile_exprs([e for row in _hessian(chart, L) for e in row],
                                self._names)
        self._b = compile_exprs(_force_numerator(spec, L), self._names)

    def evaluate(self, env: dict) -> np.ndarray:
        pt = np.array([[env[n] for n in self._names]])
        g = kernels.eval_many(self._g, pt)[0].reshape(self.k, self.k)
        b = kernels.eval_many(self._b, pt)[0]
        return np.linalg.solve(g, b)

    def d_dy(self, env: dict, be: int, eps: float = 1e-6) -> np.ndarray:
        hi = dict(env)
        lo = dict(env)
        hi[f"y{be+1}"] = env[f"y{be+1}"] + eps
        lo[f"y{be+1}"] = env[f"y{be+1}"] - eps
        return (self.evaluate(hi) - self.evaluate(lo)) / (2 * eps)


def check_regularity(spec: AlgebroidSpec, L: Expr,
                     sampler: SampleBox | None = None,
                     cond_limit: float = 1e12):
    """Raise DegenerateLagrangianError when the Hessian condition blows up."""
    sampler = sampler or SampleBox()
    chart = spec.chart
    hess = _hessian(chart, L)
    names = sorted(set(chart.xnames) | set(chart.ynames), key=ex.var_sort_key)
    worst = 1.0
    for env in sampler.envs(names):
        g = np.array([[ex.evaluate(hess[al][be], env)
                       for be in range(chart.k)] for al in range(chart.k)])
        c = np.linalg.cond(g)
        if not np.isfinite(c) or c > cond_limit:
            pt = {n: float(env[n]) for n in names}
            raise DegenerateLagrangianError(
                f"fibre Hessian is singular (cond={c:.3e}) at {pt}")
        worst = max(worst, float(c))
    return worst


def lagrangian_sode(spec: AlgebroidSpec, L: Expr,
                    sampler: SampleBox | None = None):
    """Force induced by a regular Lagrangian.

    Returns a list of expressions when k == 1 (the scalar Hessian
    divides symbolically); a LagrangianForceField otherwise.
    """
    chart = spec.chart
    allowed = set(chart.xnames) | set(chart.ynames)
    extra = ex.free_vars(L) - allowed
    if extra:
        raise ValidationError(f"Lagrangian depends on {sorted(extra)}")
    check_regularity(spec, L, sampler)
    if chart.k == 1:
        g = _hessian(chart, L)[0][0]
        b = _force_numerator(spec, L)[0]
        return [ex.fold(ex.Div(b, g))]
    return LagrangianForceField(spec, L)


def sode_flow(spec: AlgebroidSpec, f, e0: EPoint, span,
              cfg: TransportConfig | None = None) -> DiscreteCurve:
    """Integral curve of the pseudo-SODE through e0 (columns x, y)."""
    cfg = cfg or TransportConfig()
    chart = spec.chart
    vf = pseudo_sode(spec, f).anchor_field(spec.anchor)
    names = chart.xnames + chart.ynames
    a, b = float(span[0]), float(span[1])
    nsteps, h = _grid(a, b, cfg.h_step)
    prog = compile_exprs(vf.xcomps + vf.ycomps, names)
    init = np.array(list(e0.x) + list(e0.y))
    traj = kernels.rk4(prog, names, init, a, h, nsteps)
    return DiscreteCurve(_us(a, h, nsteps), names, traj)


def euler_lagrange_check(spec: AlgebroidSpec, L: Expr, f, e0: EPoint, span,
                         cfg: TransportConfig | None = None,
                         tol: float = 1e-6) -> CheckResult:
    """Finite-difference momentum balance along an integrated trajectory.

    d/du of dL/dy^beta is taken by central differences on the stored
    grid and compared against the algebraic right-hand side; this never
    touches the symbolic force formula, so it is an independent oracle
    for the Lagrangian dynamics.
    """
    cfg = cfg or TransportConfig()
    t0 = time.perf_counter()
    chart = spec.chart
    k = chart.k
    traj = sode_flow(spec, f, e0, span, cfg)
    names = chart.xnames + chart.ynames
    momenta = [ex.differentiate(L, f"y{be+1}") for be in range(k)]
    rhs = []
    for be in range(k):
        force_terms = [ex.esum(ex.Mul(spec.anchor.rho[i][be + 1],
                                      ex.differentiate(L, f"x{i+1}"))
                              for i in range(chart.n))]
        for g in range(k):
            coeff = ex.Add(
                ex.esum(ex.Mul(ex.Var(f"y{mu+1}"), spec.C[g][mu][be])
                        for mu in range(k)),
                spec.C0[g][be])
            force_terms.append(ex.Mul(coeff, ex.differentiate(L, f"y{g+1}")))
        rhs.append(ex.fold(ex.esum(force_terms)))
    prog = compile_exprs(momenta + rhs, names)
    vals = kernels.eval_many(prog, traj.values)
    p = vals[:, :k]
    q = vals[:, k:]
    h = float(traj.us[1] - traj.us[0])
    dp = (p[2:] - p[:-2]) / (2 * h)
    resid = np.abs(dp - q[1:-1])
    worst = float(np.max(resid)) if resid.size else 0.0
    idx = int(np.argmax(np.max(resid, axis=1))) + 1 if resid.size else 0
    return CheckResult(
        name="lagrangian", status="pass" if worst <= tol else "fail",
        provenance="discrete momentum balance along the integrated "
                   "trajectory (central differences vs algebraic side)",
        residual=worst, tolerance=tol,
        witness={"u": float(traj.us[idx])},
        details={"h_step": cfg.h_step}, elapsed=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Direct bracket formulas for the linearisations

def _vertical_part(conn: Connection, Z: ProlongedSection) -> list:
    """Adapted vertical components: anchor image then vertical inverse."""
    _, W = adapted_components(conn, Z)
    return W


def _j_part(Z: ProlongedSection) -> tuple:
    """Forget the vertical block; read the lifted components as a section."""
    return Z.za[0], list(Z.za[1:])


def berwald_direct(spec: AlgebroidSpec, conn: Connection, variant: str,
                   Z: ProlongedSection, X: TildeSection) -> TildeSection:
    """The linearised operator through projectors and prolonged brackets.

    Plain: bracket the horizontal part with the vertical lift of X, and
    the vertical part with the horizontal lift of X, project each back,
    and add the anchor derivative of the e_0 component along the
    horizontal part times the canonical section.  Hat: the horizontal
    lift is taken of X minus its e_0 part, and the last term uses the
    full anchor image of Z.
    """
    chart = spec.chart
    k, l = chart.k, chart.l
    za, W = adapted_components(conn, Z)
    PH = ProlongedSection(
        za, [ex.fold(ex.Neg(ex.esum(ex.Mul(za[a], conn.gamma[g][a])
                                    for a in range(l))))
             for g in range(k)])
    PV = ProlongedSection([ex.Const(0.0)] * l, W)
    VX = ProlongedSection(
        [ex.Const(0.0)] * l,
        [ex.fold(ex.Sub(X.comps[g], ex.Mul(X.comp0, ex.Var(f"y{g+1}"))))
         for g in range(k)])
    if variant == "plain":
        hz = [X.comp0] + list(X.comps)
    elif variant == "hat":
        hz = [ex.Const(0.0)] + [
            ex.fold(ex.Sub(X.comps[g], ex.Mul(X.comp0, ex.Var(f"y{g+1}"))))
            for g in range(k)]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    HX = ProlongedSection(
        hz, [ex.fold(ex.Neg(ex.esum(ex.Mul(hz[a], conn.gamma[g][a])
                                    for a in range(l))))
             for g in range(k)])
    b1 = prolonged_bracket(spec, PH, VX)
    b2 = prolonged_bracket(spec, PV, HX)
    w1 = _vertical_part(conn, b1)
    j0, jbar = _j_part(b2)
    carrier = PH if variant == "plain" else Z
    t3 = carrier.anchor_field(spec.anchor).apply(X.comp0)
    comp0 = ex.fold(ex.Add(j0, t3))
    comps = [ex.fold(ex.esum([w1[g], jbar[g],
                              ex.Mul(t3, ex.Var(f"y{g+1}"))]))
             for g in range(k)]
    return TildeSection(comp0, comps)


def _poly(rng, names, trig: bool = False) -> Expr:
    """Small random coefficient function with reproducible coefficients."""
    terms = [ex.Const(round(float(rng.uniform(-1, 1)), 3))]
    for nm in names:
        terms.append(ex.Mul(ex.Const(round(float(rng.uniform(-1, 1)), 3)),
                            ex.Var(nm)))
    if trig and len(names) >= 1:
        terms.append(ex.Mul(ex.Const(round(float(rng.uniform(-1, 1)), 3)),
                            ex.Sin(ex.Var(names[0]))))
    return ex.esum(terms)


def verify_direct_formulae(spec: AlgebroidSpec, conn: Connection,
                           sampler: SampleBox, seed: int = 0,
                           tol: float = 1e-9) -> CheckResult:
    """Direct bracket route vs the table route, both variants.

    Directions run over the horizontal and vertical frames with random
    function coefficients; arguments over the canonical section and
    random basic sections.
    """
    from .berwald import covariant_D

    t0 = time.perf_counter()
    chart = spec.chart
    k, l = chart.k, chart.l
    rng = np.random.default_rng(seed)
    allnames = chart.xnames + chart.ynames

    directions = []
    for a in range(l):
        za = [ex.Const(0.0)] * l
        za[a] = _poly(rng, allnames)
        directions.append(ProlongedSection(
            za, [ex.fold(ex.Neg(ex.Mul(za[a], conn.gamma[g][a])))
                 for g in range(k)]))
    for al in range(k):
        vert = [ex.Const(0.0)] * k
        vert[al] = _poly(rng, allnames)
        directions.append(ProlongedSection([ex.Const(0.0)] * l, vert))
    directions.append(ProlongedSection(
        [_poly(rng, allnames) for _ in range(l)],
        [_poly(rng, allnames) for _ in range(k)]))

    args = [TildeSection(ex.Const(1.0),
                         [ex.Var(f"y{g+1}") for g in range(k)])]
    args.append(TildeSection(ex.Const(0.0),
                             [_poly(rng, chart.xnames, trig=True)
                              for _ in range(k)]))
    args.append(TildeSection(ex.Const(1.0),
                             [_poly(rng, chart.xnames)
                              for _ in range(k)]))
    args.append(TildeSection(_poly(rng, chart.xnames),
                             [_poly(rng, chart.xnames)
                              for _ in range(k)]))

    residuals = []
    for variant in ("plain", "hat"):
        for Z in directions:
            for X in args:
                got = berwald_direct(spec, conn, variant, Z, X)
                want = covariant_D(conn, variant, Z, X)
                residuals.append(ex.fold(ex.Sub(got.comp0, want.comp0)))
                residuals.extend(ex.fold(ex.Sub(a, b))
                                 for a, b in zip(got.comps, want.comps))
    worst, witness = _sample_max(residuals,
                                 set(chart.xnames) | set(chart.ynames),
                                 sampler)
    return CheckResult(
        name="direct", status="pass" if worst <= tol else "fail",
        provenance="projector/bracket construction of the linearised "
                   "operators equals the coefficient-table construction",
        residual=worst, tolerance=tol, witness=witness,
        details={"directions": len(directions), "arguments": len(args)},
        elapsed=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Pseudo-SODE verification suite

def _section_residual(P: ProlongedSection, Q: ProlongedSection) -> list:
    out = [ex.fold(ex.Sub(a, b)) for a, b in zip(P.za, Q.za)]
    out.extend(ex.fold(ex.Sub(a, b)) for a, b in zip(P.vert, Q.vert))
    return out


def verify_sode_suite(spec: AlgebroidSpec, f, sampler: SampleBox,
                      tol: float = 1e-10) -> CheckResult:
    """Identities tying the pseudo-SODE, its projector and its connection.

    Includes: projector fixes the dynamics and the horizontal frame and
    kills the vertical frame; the vertical endomorphism's dynamical
    derivative has the expected eigensections; the reconstructed
    coefficients solve the defining relation; the frame brackets of the
    induced splitting match their closed forms (structurally when the
    coefficients and structure functions fold all the way down).
    """
    t0 = time.perf_counter()
    chart = spec.chart
    k, l = chart.k, chart.l
    gamma_sec = pseudo_sode(spec, f)
    conn = sode_connection(spec, f)
    residuals = []
    details = {}

    # Defining relation of the coefficients.
    coeff = [ex.fold(ex.esum([conn.gamma[al][0],
                              ex.esum(ex.Mul(ex.Var(f"y{be+1}"),
                                             conn.gamma[al][be + 1])
                                      for be in range(k)),
                              f[al]])) for al in range(k)]
    residuals.extend(coeff)

    # S kills the dynamics, and twice over anything.
    SG = vertical_endomorphism(chart, gamma_sec)
    residuals.extend(SG.za)
    residuals.extend(SG.vert)
    probe = ProlongedSection(
        [ex.Var("x1")] + [ex.Var(f"y{g+1}") for g in range(k)],
        [ex.Const(1.0)] * k)
    SS = vertical_endomorphism(chart,
                               vertical_endomorphism(chart, probe))
    residuals.extend(SS.za)
    residuals.extend(SS.vert)

    # Projector behaviour.
    residuals.extend(_section_residual(
        horizontal_projector(spec, f, gamma_sec), gamma_sec))
    H = []
    for a in range(l):
        za = [ex.Const(1.0 if b == a else 0.0) for b in range(l)]
        H.append(ProlongedSection(
            za, [ex.fold(ex.Neg(conn.gamma[g][a])) for g in range(k)]))
    zero_ts = ProlongedSection([ex.Const(0.0)] * l, [ex.Const(0.0)] * k)
    for a in range(l):
        residuals.extend(_section_residual(
            horizontal_projector(spec, f, H[a]), H[a]))
    for al in range(k):
        V = ProlongedSection([ex.Const(0.0)] * l,
                             [ex.Const(1.0 if b == al else 0.0)
                              for b in range(k)])
        residuals.extend(_section_residual(
            horizontal_projector(spec, f, V), zero_ts))

    # Eigensections of the dynamical derivative of S.
    sbar = [ex.Add(ex.Var("x1"), ex.Const(float(g))) for g in range(k)]
    Vs = ProlongedSection([ex.Const(0.0)] * l, list(sbar))
    got = d_gamma_S(spec, gamma_sec, Vs)
    residuals.extend(_section_residual(got, Vs))
    Hs = ProlongedSection(
        [ex.Const(0.0)] + list(sbar),
        [ex.fold(ex.Neg(ex.esum(ex.Mul(sbar[al], conn.gamma[g][al + 1])
                                for al in range(k)))) for g in range(k)])
    got = d_gamma_S(spec, gamma_sec, Hs)
    minus = ProlongedSection([ex.fold(ex.Neg(c)) for c in Hs.za],
                             [ex.fold(ex.Neg(c)) for c in Hs.vert])
    residuals.extend(_section_residual(got, minus))
    got = d_gamma_S(spec, gamma_sec, gamma_sec)
    residuals.extend(got.za)
    residuals.extend(got.vert)

    # The dynamics is the horizontal lift of the canonical section.
    recomb = ProlongedSection(
        [ex.fold(ex.esum([H[0].za[c]] +
                         [ex.Mul(ex.Var(f"y{al+1}"), H[al + 1].za[c])
                          for al in range(k)])) for c in range(l)],
        [ex.fold(ex.esum([H[0].vert[g]] +
                         [ex.Mul(ex.Var(f"y{al+1}"), H[al + 1].vert[g])
                          for al in range(k)])) for g in range(k)])
    residuals.extend(_section_residual(recomb, gamma_sec))

    # Frame brackets of the splitting vs closed forms.
    hv = []
    for a in range(l):
        for al in range(k):
            V = ProlongedSection([ex.Const(0.0)] * l,
                                 [ex.Const(1.0 if b == al else 0.0)
                                  for b in range(k)])
            got = prolonged_bracket(spec, H[a], V)
            want = ProlongedSection(
                [ex.Const(0.0)] * l,
                [ex.differentiate(conn.gamma[g][a], f"y{al+1}")
                 for g in range(k)])
            hv.extend(_section_residual(got, want))
    rho1 = [H[a].anchor_field(spec.anchor) for a in range(l)]
    for a in range(l):
        for b in range(a + 1, l):
            got = prolonged_bracket(spec, H[a], H[b])
            want_za = [ex.Const(0.0)] + [spec.structure(a, b, g)
                                         for g in range(k)]
            want_vert = []
            for g in range(k):
                want_vert.append(ex.fold(ex.Sub(
                    rho1[b].apply(conn.gamma[g][a]),
                    rho1[a].apply(conn.gamma[g][b]))))
            hv.extend(_section_residual(got,
                                        ProlongedSection(want_za, want_vert)))
    residuals.extend(hv)
    details["hv_structural"] = all(c == ex.Const(0.0) for c in hv)

    residuals = [ex.fold(c) for c in residuals]
    worst, witness = _sample_max(residuals,
                                 set(chart.xnames) | set(chart.ynames),
                                 sampler)
    return CheckResult(
        name="sode", status="pass" if worst <= tol else "fail",
        provenance="pseudo-SODE splitting identities: projector algebra, "
                   "vertical endomorphism eigensections, coefficient "
                   "relation and frame brackets",
        residual=worst, tolerance=tol, witness=witness, details=details,
        elapsed=time.perf_counter() - t0)
