"""Linearisation tables, the induced operator, and its transport laws."""

import json

import numpy as np
import pytest

from affconn import expr as ex
from affconn.berwald import (BerwaldTable, berwald_table, covariant_D,
                             table_to_doc, table_to_json, table_to_text,
                             verify_affine_reproduction, verify_prop6_prop7)
from affconn.bundle import (EPoint, ProlongedSection, SectionE, SectionEbar,
                            SectionV, TildeSection)
from affconn.connection import horizontal_basis
from affconn.sampling import SampleBox

from conftest import conn_11

P = ex.parse

ENV = {"x1": 0.3, "y1": 1.7}


def ev(e, env=None):
    return ex.evaluate(e, env or ENV)


class TestTableEntries:
    def test_affine_coefficients(self):
        # gamma = x1 + 0.5 y1 and 0.2 - 0.4 y1: the e0 rows lose the
        # linear part, the ebar rows keep exactly its slope
        t = berwald_table(conn_11("x1 + 0.5*y1", "0.2 - 0.4*y1"), "plain")
        assert ev(t.h_e0[0][0]) == pytest.approx(0.3)
        assert ev(t.h_e0[1][0]) == pytest.approx(0.2)
        assert ev(t.h_ebar[0][0][0]) == pytest.approx(0.5)
        assert ev(t.h_ebar[1][0][0]) == pytest.approx(-0.4)

    def test_nonaffine_coefficients(self):
        t = berwald_table(conn_11("y1^2", "0"), "plain")
        # y^2 - y * 2y = -y^2
        assert ev(t.h_e0[0][0]) == pytest.approx(-(1.7 ** 2))
        assert ev(t.h_ebar[0][0][0]) == pytest.approx(2 * 1.7)

    def test_variants_differ_only_vertically(self):
        conn = conn_11("sin(y1)", "x1*y1")
        plain = berwald_table(conn, "plain")
        hat = berwald_table(conn, "hat")
        for a in range(2):
            assert ev(plain.h_e0[a][0]) == ev(hat.h_e0[a][0])
            assert ev(plain.h_ebar[a][0][0]) == ev(hat.h_ebar[a][0][0])
        assert plain.v_e0[0][0] == ex.Const(0.0)
        assert hat.v_e0[0][0] == ex.Const(-1.0)
        assert plain.v_ebar[0][0][0] == ex.Const(0.0)
        assert hat.v_ebar[0][0][0] == ex.Const(0.0)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            berwald_table(conn_11("0", "0"), "twisted")


class TestCovariantD:
    def test_horizontal_basis_on_frame_sections(self):
        conn = conn_11("x1 + 0.5*y1", "0.2 - 0.4*y1")
        t = berwald_table(conn, "plain")
        e0 = TildeSection(ex.Const(1.0), [ex.Const(0.0)])
        ebar1 = TildeSection(ex.Const(0.0), [ex.Const(1.0)])
        for a, H in enumerate(horizontal_basis(conn)):
            got = covariant_D(conn, "plain", H, e0, t)
            assert ex.is_zero(got.comp0)
            assert ev(got.comps[0]) == pytest.approx(ev(t.h_e0[a][0]))
            got = covariant_D(conn, "plain", H, ebar1, t)
            assert ev(got.comps[0]) == pytest.approx(ev(t.h_ebar[a][0][0]))

    def test_vertical_direction_acts_by_variant(self):
        conn = conn_11("sin(y1)", "0")
        V = ProlongedSection([ex.Const(0.0)] * 2, [ex.Const(1.0)])
        e0 = TildeSection(ex.Const(1.0), [ex.Const(0.0)])
        plain = covariant_D(conn, "plain", V, e0)
        assert ex.is_zero(plain.comp0) and ex.is_zero(plain.comps[0])
        hat = covariant_D(conn, "hat", V, e0)
        assert ev(hat.comps[0]) == pytest.approx(-1.0)

    def test_leibniz_over_the_anchor(self):
        # D_Z(F X) = rho~(Z)(F) X + F D_Z X for a scalar F on E
        conn = conn_11("x1*y1", "cos(x1)")
        Z = ProlongedSection([P("x1"), P("2")], [P("y1")])
        X = TildeSection(P("x1"), [P("sin(x1) + y1")])
        F = P("x1^2 + y1")
        FX = TildeSection(ex.Mul(F, X.comp0),
                          [ex.Mul(F, c) for c in X.comps])
        got = covariant_D(conn, "hat", Z, FX)
        dF = Z.anchor_field(conn.anchor).apply(F)
        base = covariant_D(conn, "hat", Z, X)
        want0 = ex.Add(ex.Mul(dF, X.comp0), ex.Mul(F, base.comp0))
        want1 = ex.Add(ex.Mul(dF, X.comps[0]), ex.Mul(F, base.comps[0]))
        assert ev(got.comp0) == pytest.approx(ev(want0))
        assert ev(got.comps[0]) == pytest.approx(ev(want1))

    def test_tensorial_in_the_direction(self):
        conn = conn_11("x1*y1", "cos(x1)")
        Z = ProlongedSection([P("x1"), P("2")], [P("y1")])
        F = P("y1 - x1")
        FZ = ProlongedSection([ex.Mul(F, c) for c in Z.za],
                              [ex.Mul(F, c) for c in Z.vert])
        X = TildeSection(P("x1"), [P("sin(x1) + y1")])
        got = covariant_D(conn, "plain", FZ, X)
        base = covariant_D(conn, "plain", Z, X)
        assert ev(got.comp0) == pytest.approx(ev(F) * ev(base.comp0))
        assert ev(got.comps[0]) == pytest.approx(ev(F) * ev(base.comps[0]))

    def test_mismatched_table_rejected(self):
        conn = conn_11("0", "0")
        other = berwald_table(conn_11("x1", "0"), "plain")
        Z = horizontal_basis(conn)[0]
        X = TildeSection(ex.Const(1.0), [ex.Const(0.0)])
        with pytest.raises(ValueError, match="table"):
            covariant_D(conn, "plain", Z, X, other)


class TestVerifiers:
    def test_affine_reproduction(self):
        conn = conn_11("x1 + 0.5*y1", "0.2 - 0.4*y1")
        chart = conn.chart
        s = SectionV(chart, [P("1"), P("0.3")])
        sigma = SectionE(chart, [P("sin(x1)")])
        sbar = SectionEbar(chart, [P("cos(x1) + 2")])
        res = verify_affine_reproduction(conn, s, sigma, sbar, SampleBox())
        assert res.status == "pass"
        assert res.residual <= 1e-12

    def test_parallel_sections_are_lie_transports_affine(self):
        conn = conn_11("x1 + 0.5*y1", "0.2 - 0.4*y1")
        s = SectionV(conn.chart, [P("1"), P("0.3")])
        res = verify_prop6_prop7(conn, s, EPoint.of([0.1], [0.4]), [0.9],
                                 (0.0, 1.0))
        assert res.status == "pass"
        assert res.details["horizontal_residual"] <= 1e-8
        assert res.details["vertical_structural"] is True
        assert res.details["vertical_residual"] == 0.0

    def test_parallel_sections_are_lie_transports_nonaffine(self):
        # the transport law is a statement about the linearised tables,
        # so it does not need affine coefficients
        conn = conn_11("sin(y1)", "0")
        s = SectionV(conn.chart, [P("1"), P("0")])
        res = verify_prop6_prop7(conn, s, EPoint.of([0.0], [0.4]), [0.7],
                                 (0.0, 0.8))
        assert res.status == "pass"
        assert res.details["vertical_structural"] is True


class TestExports:
    def test_doc_shape_and_json_round_trip(self):
        t = berwald_table(conn_11("x1 + 0.5*y1", "0.2 - 0.4*y1"), "hat")
        doc = table_to_doc(t)
        assert doc["variant"] == "hat"
        assert doc["dimensions"] == {"n": 1, "k": 1, "l": 2}
        assert len(doc["horizontal_on_e0"]) == 2
        assert doc["vertical_on_e0"] == [["-1"]]
        text = table_to_json(t)
        assert text.endswith("\n")
        assert json.loads(text) == doc
        # every entry parses back to an expression
        for row in doc["horizontal_on_e0"]:
            for entry in row:
                ex.parse(entry)

    def test_text_layout(self):
        t = berwald_table(conn_11("y1^2", "0"), "plain")
        text = table_to_text(t)
        lines = text.splitlines()
        assert lines[0] == "variant: plain"
        # one row per table entry: 2*(1+1) horizontal + 1 vertical
        assert len(lines) == 1 + 5
        eq_cols = {line.index("=") for line in lines[1:]}
        assert len(eq_cols) == 1
