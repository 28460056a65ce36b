"""Check results and report rendering.

JSON output is canonical: sorted keys, two-space indent, no wall-clock
data, so a run is byte-reproducible given the same scenario and seed.
Timings only appear in the text rendering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

_STATUS_OK = ("pass", "xfail")


@dataclass
class CheckResult:
    name: str
    status: str                 # pass | fail | error | xfail | xpass
    provenance: str
    residual: float | None = None
    tolerance: float | None = None
    witness: dict | None = None
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status in _STATUS_OK


@dataclass
class Report:
    name: str
    seed: int
    config: dict
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def summary(self) -> dict:
        counts = {"pass": 0, "fail": 0, "error": 0, "xfail": 0, "xpass": 0}
        for c in self.checks:
            counts[c.status] = counts.get(c.status, 0) + 1
        counts["status"] = "pass" if self.ok else "fail"
        return counts


def apply_expectations(checks, expect_fail):
    """Flip expected failures to xfail, unexpected passes to xpass."""
    expect = set(expect_fail)
    for c in checks:
        if c.name in expect:
            if c.status == "fail":
                c.status = "xfail"
            elif c.status == "pass":
                c.status = "xpass"
    return checks


def _check_doc(c: CheckResult) -> dict:
    return {
        "name": c.name,
        "status": c.status,
        "provenance": c.provenance,
        "residual": c.residual,
        "tolerance": c.tolerance,
        "witness": c.witness,
        "details": c.details,
    }


def to_doc(report: Report) -> dict:
    return {
        "format": "affconn-report/1",
        "name": report.name,
        "seed": report.seed,
        "config": report.config,
        "checks": [_check_doc(c) for c in report.checks],
        "summary": report.summary(),
    }


def to_json(report: Report) -> str:
    return json.dumps(to_doc(report), indent=2, sort_keys=True) + "\n"


def reformat_json(text: str) -> str:
    """Re-emit a JSON report document in the canonical byte form."""
    return json.dumps(json.loads(text), indent=2, sort_keys=True) + "\n"


def _fmt_res(v) -> str:
    return "-" if v is None else f"{v:.3e}"


def render_text(report: Report) -> str:
    lines = [f"scenario: {report.name}   seed: {report.seed}"]
    cfg = " ".join(f"{k}={report.config[k]}" for k in sorted(report.config))
    lines.append(f"config: {cfg}")
    lines.append("")
    width = max([len(c.name) for c in report.checks] + [5])
    header = (f"{'check':<{width}}  {'status':<6}  {'residual':>10}  "
              f"{'tol':>9}  {'ms':>7}  provenance")
    lines.append(header)
    lines.append("-" * len(header))
    for c in report.checks:
        lines.append(
            f"{c.name:<{width}}  {c.status:<6}  {_fmt_res(c.residual):>10}  "
            f"{_fmt_res(c.tolerance):>9}  {c.elapsed*1e3:>7.1f}  {c.provenance}")
    s = report.summary()
    lines.append("-" * len(header))
    lines.append(
        f"{s['status'].upper()}: {s['pass']} passed, {s['fail']} failed, "
        f"{s['error']} errors, {s['xfail']} expected failures, "
        f"{s['xpass']} unexpected passes")
    return "\n".join(lines) + "\n"


def text_from_doc(doc: dict) -> str:
    """Text rendering of a parsed JSON report document."""
    checks = [CheckResult(name=c["name"], status=c["status"],
                          provenance=c.get("provenance", ""),
                          residual=c.get("residual"),
                          tolerance=c.get("tolerance"),
                          witness=c.get("witness"),
                          details=c.get("details", {}))
              for c in doc.get("checks", [])]
    rep = Report(name=doc.get("name", "?"), seed=doc.get("seed", 0),
                 config=doc.get("config", {}), checks=checks)
    return render_text(rep)
