import json
import math

import pytest

from sdsmlab import EstimateCI, ExperimentReport, ReportRow


def test_estimate_ci_requires_replication_and_sane_errors():
    EstimateCI(mean=1.0, std_error=0.1, n=2)
    with pytest.raises(ValueError):
        EstimateCI(mean=1.0, std_error=0.1, n=1)
    with pytest.raises(ValueError):
        EstimateCI(mean=1.0, std_error=-0.1, n=5)
    with pytest.raises(ValueError):
        EstimateCI(mean=1.0, std_error=math.nan, n=5)


def test_add_row_gates_on_the_given_tolerance():
    report = ExperimentReport(experiment="demo")
    good = report.add_row("near", predicted=1.0, estimated=1.05, se=0.02, tolerance=0.06)
    bad = report.add_row("far", predicted=1.0, estimated=1.5, se=0.02, tolerance=0.06)
    assert good.passed and not bad.passed
    assert not report.all_pass


def test_ungated_rows_do_not_block_the_verdict():
    report = ExperimentReport(experiment="demo")
    report.add_row("gated", 1.0, 1.0, 0.0, tolerance=0.1)
    report.add_row("advisory", 1.0, 9.9, 0.1, tolerance=0.1, gated=False)
    assert report.all_pass
    assert [r.gated for r in report.rows] == [True, False]


def test_z_score_is_the_standardized_gap():
    row = ReportRow(name="r", predicted=2.0, estimated=2.5, se=0.25, passed=True)
    assert row.z == pytest.approx(2.0)
    exact = ReportRow(name="e", predicted=1.0, estimated=1.0, se=0.0, passed=True)
    assert exact.z == 0.0
    off = ReportRow(name="o", predicted=1.0, estimated=2.0, se=0.0, passed=False)
    assert math.isinf(off.z)


def test_json_payload_is_stable_and_complete():
    report = ExperimentReport(experiment="demo", config_digest="abc123")
    report.add_row("only", 1.0, 1.1, 0.05, tolerance=0.2)
    report.diagnostics["note"] = 7
    payload = json.loads(report.to_json())
    assert payload["experiment"] == "demo"
    assert payload["config_digest"] == "abc123"
    assert payload["all_pass"] is True
    assert payload["rows"][0] == {
        "name": "only", "predicted": 1.0, "estimated": 1.1, "se": 0.05,
        "z": pytest.approx(2.0), "pass": True, "gated": True,
    }
    assert payload["diagnostics"] == {"note": 7}
    assert report.to_json() == report.to_json()


def test_csv_output_has_the_documented_columns():
    report = ExperimentReport(experiment="demo")
    report.add_row("a", 1.0, 1.0, 0.0, tolerance=0.1)
    report.add_row("b", 2.0, 2.5, 0.1, tolerance=0.1)
    lines = report.to_csv().strip().split("\n")
    assert lines[0] == "experiment,row,predicted,estimated,se,z,pass"
    assert lines[1].startswith("demo,a,1.0,1.0,0.0,")
    assert lines[1].endswith(",true")
    assert lines[2].endswith(",false")
    assert len(lines) == 3


def test_row_pass_uses_absolute_distance():
    report = ExperimentReport(experiment="demo")
    assert report.add_row("low", 1.0, 0.9375, 0.1, tolerance=0.0625).passed
    assert not report.add_row("high", 1.0, 1.0625001, 0.1, tolerance=0.0625).passed
