"""Scenario loading, check resolution, report rendering and the CLI."""

import json
import subprocess
import sys

import pytest

from affconn import expr as ex
from affconn.cli import main
from affconn.report import (CheckResult, Report, apply_expectations,
                            reformat_json, text_from_doc, to_json)
from affconn.scenario import (CHECK_ORDER, ScenarioError, load_scenario,
                              resolve_checks, run_checks)


def tiny_doc(**extra):
    doc = {
        "name": "tiny",
        "chart": {"n": 1, "k": 1, "l": 2},
        "anchor": [["1", "x1"]],
        "connection": [["x1 + 0.5*y1", "0.2 - 0.4*y1"]],
        "checks": ["prop5", "hish", "berwald"],
    }
    doc.update(extra)
    return doc


def anchored_doc(**extra):
    doc = {
        "name": "drift",
        "chart": {"n": 1, "k": 1, "anchored_in_E": True},
        "parameters": {"c": 0.7},
        "anchor": [["-c*x1", "1"]],
        "structure": {"C0": [["c"]]},
        "pseudo_sode": ["-y1"],
        "checks": ["validate", "sode"],
    }
    doc.update(extra)
    return doc


def write_doc(tmp_path, doc, name="scn.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestLoader:
    def test_sources_agree(self, tmp_path):
        doc = tiny_doc()
        from_dict = load_scenario(doc)
        from_string = load_scenario(json.dumps(doc))
        from_path = load_scenario(write_doc(tmp_path, doc))
        for scn in (from_string, from_path):
            assert scn.name == from_dict.name
            assert scn.connection_source == "explicit"
            assert [p.y[0] for p in (scn.points["e1"], scn.points["e2"])] \
                == [p.y[0] for p in (from_dict.points["e1"],
                                     from_dict.points["e2"])]

    def test_defaults_are_deterministic(self):
        a = load_scenario(tiny_doc())
        b = load_scenario(tiny_doc())
        assert [ex.to_str(c) for c in a.sections["s"].comps] \
            == [ex.to_str(c) for c in b.sections["s"].comps]
        assert list(a.model_vector) == list(b.model_vector)
        assert a.points["e0"].x == b.points["e0"].x
        assert "sections/s" in a.defaults_used
        assert "points/e1" in a.defaults_used
        assert "model_vector" in a.defaults_used

    def test_draw_order_ignores_provided_objects(self):
        bare = load_scenario(tiny_doc())
        partial = load_scenario(tiny_doc(
            sections={"s": {"kind": "V", "components": ["1", "0"]}}))
        # providing s must not shift the seeded e1/e2 fibre draws
        assert partial.points["e1"].y == bare.points["e1"].y
        assert partial.points["e2"].y == bare.points["e2"].y
        assert "sections/s" not in partial.defaults_used
        assert ex.to_str(partial.sections["s"].comps[0]) == "1"

    def test_default_e1_sits_over_first_curve(self):
        scn = load_scenario(tiny_doc(
            curves={"line": {"base": ["u + 2"], "components": ["1", "0"],
                             "domain": [0.0, 1.0]}}))
        assert scn.points["e1"].x[0] == pytest.approx(2.0)

    def test_parameters_substitute_into_expressions(self):
        scn = load_scenario(tiny_doc(
            parameters={"c": 0.25},
            connection=[["c*y1", "0"]]))
        got = ex.evaluate(scn.conn.gamma[0][0], {"x1": 0.0, "y1": 1.0})
        assert got == pytest.approx(0.25)

    def test_pseudo_sode_connection_source(self):
        scn = load_scenario(anchored_doc())
        assert scn.connection_source == "pseudo_sode"
        assert scn.conn is not None
        env = {"x1": 0.2, "y1": 1.0}
        assert ex.evaluate(scn.conn.gamma[0][1], env) == pytest.approx(0.15)

    def test_lagrangian_connection_source(self):
        doc = anchored_doc()
        del doc["pseudo_sode"]
        doc["lagrangian"] = "0.5*y1^2"
        doc["checks"] = ["validate", "sode", "lagrangian"]
        scn = load_scenario(doc)
        assert scn.connection_source == "lagrangian"
        assert scn.force is not None

    def test_overrides_reach_config_and_sampler(self):
        scn = load_scenario(tiny_doc(), overrides={
            "h_step": 0.5, "tol": 1e-6, "samples": 8, "seed": 7})
        assert scn.cfg.h_step == 0.5
        assert scn.cfg.tol == 1e-6
        assert scn.sampler.count == 8
        assert scn.sampler.seed == 7
        rep = run_checks(scn, ["hish"])
        assert rep.seed == 7
        assert rep.config["h_step"] == 0.5


class TestLoaderErrors:
    def err(self, doc):
        with pytest.raises(ScenarioError) as ei:
            load_scenario(doc)
        return ei.value

    def test_not_json(self):
        assert self.err("{oops").path == "/"

    def test_top_level_must_be_object(self):
        assert self.err('[{"name": "x"}]').path == "/"

    def test_unknown_top_key(self):
        assert self.err(tiny_doc(extra_block=1)).path == "/extra_block"

    def test_chart_errors(self):
        assert self.err(tiny_doc(chart={"n": 1, "k": 0, "l": 2})).path \
            == "/chart/k"
        err = self.err(tiny_doc(
            chart={"n": 1, "k": 1, "l": 3, "anchored_in_E": True},
            anchor=[["0", "1"]]))
        assert err.path == "/chart/l"
        assert "forces" in err.msg

    def test_anchor_shape(self):
        assert self.err(tiny_doc(anchor=[["1"]])).path == "/anchor/0"

    def test_bad_expression_carries_pointer(self):
        err = self.err(tiny_doc(connection=[["x1 +* y1", "0"]]))
        assert err.path.startswith("/connection")
        assert "bad expression" in err.msg

    def test_bad_parameter_name(self):
        assert self.err(tiny_doc(parameters={"x1": 2.0})).path \
            == "/parameters/x1"

    def test_section_kind_checked(self):
        err = self.err(tiny_doc(
            sections={"s": {"kind": "W", "components": ["1", "0"]}}))
        assert err.path == "/sections/s/kind"

    def test_point_shape_checked(self):
        err = self.err(tiny_doc(points={"e1": {"x": [0.0], "y": []}}))
        assert err.path == "/points/e1/y"

    def test_unknown_check_name(self):
        assert self.err(tiny_doc(checks=["nope"])).path == "/checks/0"

    def test_structure_requires_anchored_chart(self):
        err = self.err(tiny_doc(structure={"C0": [["0"]]}))
        assert err.path == "/structure"

    def test_inadmissible_curve_rejected(self):
        err = self.err(tiny_doc(curves={"bad": {
            "base": ["u"], "components": ["1", "0"], "domain": [1.0, 0.0]}}))
        assert err.path == "/curves/bad"


class TestCheckResolution:
    def test_all_keeps_only_applicable(self):
        scn = load_scenario(tiny_doc(checks="all"))
        resolved = resolve_checks(scn, "all")
        assert "validate" in resolved
        assert "prop5" in resolved
        assert "sode" not in resolved        # no structure block
        assert "prop1" not in resolved       # no curves
        assert resolved == [nm for nm in CHECK_ORDER if nm in resolved]

    def test_nonaffine_drops_affine_only_checks(self):
        scn = load_scenario(tiny_doc(connection=[["y1^2", "0"]],
                                     checks="all"))
        resolved = resolve_checks(scn, "all")
        assert "prop5" not in resolved
        assert "berwald" not in resolved
        assert "hish" in resolved

    def test_explicit_inapplicable_is_an_error(self):
        scn = load_scenario(tiny_doc())
        with pytest.raises(ScenarioError, match="not applicable"):
            resolve_checks(scn, ["sode"])

    def test_unknown_name_is_an_error(self):
        scn = load_scenario(tiny_doc())
        with pytest.raises(ScenarioError, match="unknown check"):
            resolve_checks(scn, ["frobnicate"])

    def test_expect_fail_flips_to_xfail(self):
        scn = load_scenario(tiny_doc(
            connection=[["y1^2", "0"]],
            curves={"line": {"base": ["u"], "components": ["1", "0"],
                             "domain": [0.0, 1.0]}},
            points={"e1": {"x": [0.0], "y": [0.2]},
                    "e2": {"x": [0.0], "y": [0.7]}},
            checks=["prop1"],
            expect_fail=["prop1"]))
        rep = run_checks(scn)
        assert rep.checks[0].status == "xfail"
        assert rep.ok


class TestReportRendering:
    def small_report(self):
        checks = [
            CheckResult(name="hish", status="pass", provenance="lift route",
                        residual=1.2e-15, tolerance=1e-12),
            CheckResult(name="prop1", status="fail", provenance="transport",
                        residual=0.25, tolerance=1e-8,
                        witness={"u": 1.0}),
        ]
        return Report(name="tiny", seed=0, config={"h_step": 1e-3},
                      checks=checks)

    def test_json_is_canonical_and_reformat_idempotent(self):
        rep = self.small_report()
        text = to_json(rep)
        assert text.endswith("\n")
        assert reformat_json(text) == text
        scrambled = json.dumps(json.loads(text), indent=None,
                               sort_keys=False)
        assert reformat_json(scrambled) == text

    def test_text_from_doc_matches_render(self):
        rep = self.small_report()
        text = text_from_doc(json.loads(to_json(rep)))
        assert "scenario: tiny" in text
        assert "FAIL: 1 passed, 1 failed" in text
        assert "2.500e-01" in text

    def test_expectations_and_summary(self):
        checks = [CheckResult(name="a", status="fail", provenance=""),
                  CheckResult(name="b", status="pass", provenance=""),
                  CheckResult(name="c", status="pass", provenance="")]
        apply_expectations(checks, ["a", "b"])
        assert [c.status for c in checks] == ["xfail", "xpass", "pass"]
        rep = Report(name="x", seed=0, config={}, checks=checks)
        assert not rep.ok          # xpass counts against the run
        assert rep.summary()["xfail"] == 1
        assert rep.summary()["xpass"] == 1


class TestCliInProcess:
    def test_validate_passes(self, tmp_path, capsys):
        rc = main(["validate", "--scenario",
                   write_doc(tmp_path, anchored_doc())])
        out = capsys.readouterr().out
        assert rc == 0
        assert "validate" in out and "PASS" in out

    def test_validate_failure_sets_exit_one(self, tmp_path, capsys):
        doc = anchored_doc(structure={"C0": [["0"]]})  # incompatible anchor
        doc["checks"] = ["validate"]
        del doc["pseudo_sode"]
        rc = main(["validate", "--scenario", write_doc(tmp_path, doc)])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out

    def test_check_selects_names(self, tmp_path, capsys):
        rc = main(["check", "--scenario", write_doc(tmp_path, tiny_doc()),
                   "--check", "prop5,hish"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "prop5" in out and "hish" in out and "berwald" not in out

    def test_check_rejects_empty_selection(self, tmp_path, capsys):
        rc = main(["check", "--scenario", write_doc(tmp_path, tiny_doc()),
                   "--check", " , "])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_check_inapplicable_is_config_error(self, tmp_path, capsys):
        rc = main(["check", "--scenario", write_doc(tmp_path, tiny_doc()),
                   "--check", "sode"])
        assert rc == 2
        assert "not applicable" in capsys.readouterr().err

    def test_report_defaults_to_json(self, tmp_path, capsys):
        rc = main(["report", "--scenario", write_doc(tmp_path, tiny_doc()),
                   "--seed", "42"])
        doc = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert doc["format"] == "affconn-report/1"
        assert doc["seed"] == 42
        assert doc["summary"]["status"] == "pass"
        names = [c["name"] for c in doc["checks"]]
        assert "prop5" in names and "hish" in names

    def test_transport_csv_and_out_file(self, tmp_path, capsys):
        doc = tiny_doc(
            curves={"line": {"base": ["u"], "components": ["1", "0"],
                             "domain": [0.0, 1.0]}},
            points={"e1": {"x": [0.0], "y": [0.2]}})
        path = write_doc(tmp_path, doc)
        rc = main(["transport", "--scenario", path, "--step", "0.25"])
        out = capsys.readouterr().out
        assert rc == 0
        lines = out.splitlines()
        assert lines[0] == "u,x1,y1"
        assert len(lines) == 6
        first = [float(v) for v in lines[1].split(",")]
        assert first == [0.0, 0.0, 0.2]

        target = tmp_path / "lift.csv"
        rc = main(["transport", "--scenario", path, "--step", "0.25",
                   "--out", str(target)])
        assert rc == 0
        assert target.read_text() == out

    def test_transport_json_document(self, tmp_path, capsys):
        doc = tiny_doc(
            curves={"line": {"base": ["u"], "components": ["1", "0"],
                             "domain": [0.0, 1.0]}})
        rc = main(["transport", "--scenario", write_doc(tmp_path, doc),
                   "--step", "0.5", "--format", "json"])
        got = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert got["format"] == "affconn-transport/1"
        assert got["columns"] == ["u", "x1", "y1"]
        assert len(got["rows"]) == 3

    def test_transport_needs_a_curve(self, tmp_path, capsys):
        rc = main(["transport", "--scenario",
                   write_doc(tmp_path, tiny_doc())])
        assert rc == 2
        assert "no curves" in capsys.readouterr().err

    def test_berwald_json_has_both_variants(self, tmp_path, capsys):
        rc = main(["berwald", "--scenario", write_doc(tmp_path, tiny_doc()),
                   "--format", "json"])
        doc = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert doc["format"] == "affconn-berwald/1"
        assert doc["plain"]["variant"] == "plain"
        assert doc["hat"]["vertical_on_e0"] == [["-1"]]

    def test_berwald_text_has_both_variants(self, tmp_path, capsys):
        rc = main(["berwald", "--scenario", write_doc(tmp_path, tiny_doc())])
        out = capsys.readouterr().out
        assert rc == 0
        assert "variant: plain" in out and "variant: hat" in out

    def test_berwald_needs_a_connection(self, tmp_path, capsys):
        doc = anchored_doc()
        del doc["pseudo_sode"]
        rc = main(["berwald", "--scenario", write_doc(tmp_path, doc)])
        assert rc == 2
        assert "no connection" in capsys.readouterr().err

    def test_sode_text_and_json(self, tmp_path, capsys):
        path = write_doc(tmp_path, anchored_doc())
        rc = main(["sode", "--scenario", path])
        out = capsys.readouterr().out
        assert rc == 0
        assert "suite: pass" in out
        assert "gamma[1][0..1]" in out

        rc = main(["sode", "--scenario", path, "--format", "json"])
        doc = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert doc["format"] == "affconn-sode/1"
        assert doc["force"] == ["-y1"]
        assert doc["check"]["status"] == "pass"
        assert len(doc["gamma"]) == 1 and len(doc["gamma"][0]) == 2

    def test_sode_needs_symbolic_force(self, tmp_path, capsys):
        doc = anchored_doc()
        del doc["pseudo_sode"]
        rc = main(["sode", "--scenario", write_doc(tmp_path, doc)])
        assert rc == 2
        assert "force" in capsys.readouterr().err

    def test_scenario_error_exits_two(self, tmp_path, capsys):
        rc = main(["validate", "--scenario",
                   write_doc(tmp_path, tiny_doc(chart={"n": 0, "k": 1,
                                                       "l": 2}))])
        assert rc == 2
        assert "/chart/n" in capsys.readouterr().err

    def test_missing_file_exits_two(self, capsys):
        rc = main(["validate", "--scenario", "/nonexistent/scn.json"])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestCliSubprocess:
    def run(self, *argv):
        return subprocess.run([sys.executable, "-m", "affconn", *argv],
                              capture_output=True, text=True)

    def test_report_bytes_are_reproducible(self, tmp_path):
        path = write_doc(tmp_path, tiny_doc())
        runs = [self.run("report", "--scenario", path, "--seed", "42")
                for _ in range(2)]
        assert all(r.returncode == 0 for r in runs)
        assert runs[0].stdout == runs[1].stdout
        assert json.loads(runs[0].stdout)["seed"] == 42

    def test_console_script_version(self):
        out = subprocess.run(["affconn", "--version"],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert out.stdout.strip() == "0.1.0"

    def test_missing_scenario_file(self):
        r = self.run("check", "--scenario", "does-not-exist.json")
        assert r.returncode == 2
        assert r.stderr.startswith("error")
