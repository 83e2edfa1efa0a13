"""Report containers shared by the estimators and the experiment harness.

Reports hold plain numbers only.  Wall-clock timings live in a sidecar file
written by the CLI, never inside the report, so that two runs with the same
config and seeds produce byte-identical report JSON.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

SCHEMA_VERSION = 1
CSV_COLUMNS = ("experiment", "row", "predicted", "estimated", "se", "z", "pass")


@dataclass(frozen=True)
class EstimateCI:
    mean: float
    std_error: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("confidence interval needs at least 2 replicates")
        if not self.std_error >= 0.0:
            raise ValueError("standard error must be non-negative")


@dataclass
class ReportRow:
    name: str
    predicted: float
    estimated: float
    se: float
    passed: bool
    gated: bool = True

    @property
    def z(self) -> float:
        if self.se > 0.0:
            return (self.estimated - self.predicted) / self.se
        return 0.0 if self.estimated == self.predicted else float("inf")


@dataclass
class ExperimentReport:
    experiment: str
    config_digest: str = ""
    rows: list[ReportRow] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def add_row(self, name: str, predicted: float, estimated: float, se: float,
                tolerance: float, gated: bool = True) -> ReportRow:
        """Append a row that passes when |estimated - predicted| <= tolerance."""
        passed = abs(estimated - predicted) <= tolerance
        row = ReportRow(name=name, predicted=float(predicted), estimated=float(estimated),
                        se=float(se), passed=bool(passed), gated=gated)
        self.rows.append(row)
        return row

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.rows if r.gated)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "config_digest": self.config_digest,
            "all_pass": self.all_pass,
            "rows": [
                {
                    "name": r.name,
                    "predicted": r.predicted,
                    "estimated": r.estimated,
                    "se": r.se,
                    "z": r.z,
                    "pass": r.passed,
                    "gated": r.gated,
                }
                for r in self.rows
            ],
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([
                self.experiment, r.name, repr(r.predicted), repr(r.estimated),
                repr(r.se), repr(r.z), str(r.passed).lower(),
            ])
        return buf.getvalue()
