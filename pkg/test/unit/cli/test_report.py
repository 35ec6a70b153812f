#
# Copyright 2025 University of Southern California
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
import json
import math
import numpy as np
import pytest
from mvgames.api.util import json_dumps
from mvgames.api.simulation.core import simulate_particles, feedback_from_solution
from mvgames.cli.report import (REPORT_KEYS, TRACE_COLUMNS, VERDICT_COLUMNS, RunReport, Verdict, judge_at_most,
                                judge_relative, versions, write_json, write_trace_csv, write_verdicts_csv, trace_rows)


class TestVerdicts:
    """Test verdict bookkeeping"""

    def test_judge_at_most(self):
        assert judge_at_most("x", 0.5, 1.0).passed
        assert not judge_at_most("x", 1.5, 1.0).passed
        assert not judge_at_most("x", math.nan, 1.0).passed

    def test_report_passes_only_without_failures(self):
        report = RunReport()
        report.add(judge_at_most("a", 0.0, 1.0))
        assert report.passed
        report.add(Verdict("b", 1.0, 0.0, passed=False))
        assert not report.passed
        assert [v.name for v in report.failed] == ["b"]

    def test_judge_relative_within_tolerance(self):
        verdict = judge_relative("c", 2.02, 2.0, 0.03)
        assert verdict.passed
        assert verdict.value == pytest.approx(0.01)

    def test_judge_relative_standard_error_allowance(self):
        # 11.6% off, but within three standard errors of 0.006
        verdict = judge_relative("v", 0.1116, 0.1, 0.1, se=0.006)
        assert verdict.passed
        assert "3 se=0.018" in verdict.detail
        assert not judge_relative("v", 0.1116, 0.1, 0.1, se=0.003).passed

    def test_judge_relative_ignores_unusable_standard_error(self):
        for se in (None, math.nan, 0.0):
            assert not judge_relative("v", 0.2, 0.1, 0.1, se=se).passed

    def test_judge_relative_near_zero_target_is_absolute(self):
        verdict = judge_relative("v", 0.0004, 0.0, 0.001)
        assert verdict.passed
        assert verdict.value == pytest.approx(0.0004)

    def test_infinite_tolerance_serializes_as_null(self):
        verdict = Verdict("baseline_admissible", 12.5, math.inf, passed=False)
        assert verdict.to_dict()["tolerance"] is None
        report = RunReport(verdicts=[verdict])
        assert json.loads(json_dumps(report))["verdicts"][0]["tolerance"] is None

    def test_schema_keys_fixed(self):
        report = RunReport()
        report.add(Verdict("inf", math.inf, 1.0, passed=True, expected_fail=True))
        data = report.to_dict()
        assert tuple(data) == REPORT_KEYS
        assert data["verdicts"][0]["value"] is None
        assert data["verdicts"][0]["expected_fail"] is True

    def test_versions(self):
        info = versions()
        assert {"mvgames", "numpy", "scipy", "python"} <= set(info)


class TestWriters:
    """Test JSON and CSV output"""

    def test_write_json(self, tmp_path):
        report = RunReport(scenario={"name": "demo"})
        report.add(judge_at_most("a", 0.25, 1.0))
        path = tmp_path / "nested" / "report.json"
        write_json(report, str(path))
        data = json.loads(path.read_text())
        assert data["scenario"]["name"] == "demo"
        assert data["verdicts"][0]["tolerance"] == 1.0

    def test_write_json_stdout(self, capsys):
        write_json({"a": np.float64(1.5)})
        assert json.loads(capsys.readouterr().out) == {"a": 1.5}

    def test_trace_csv(self, tmp_path, ex1_solution, ex1_params, small_config):
        trace = simulate_particles(feedback_from_solution(ex1_solution, 1.0, 4.0), small_config, ex1_params)
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, ex1_params, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(TRACE_COLUMNS)
        assert len(lines) == small_config.n_steps + 2
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.array_equal(table, trace_rows(trace, ex1_params))

    def test_trace_rows_running_average(self, ex1_solution, ex1_params, small_config):
        trace = simulate_particles(feedback_from_solution(ex1_solution, 1.0, 4.0), small_config, ex1_params)
        rows = trace_rows(trace, ex1_params)
        assert rows.shape == (small_config.n_steps + 1, len(TRACE_COLUMNS))
        assert rows[-1, 6] == pytest.approx(trace.cost_accum[-1, 0] / small_config.t_final)

    def test_verdicts_csv(self, tmp_path):
        report = RunReport()
        report.add(judge_at_most("a", 0.25, 1.0))
        report.add(Verdict("b", math.inf, 1.0, passed=False))
        report.add(Verdict("c", 2.0, math.inf, passed=False))
        path = tmp_path / "verdicts.csv"
        write_verdicts_csv(report, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(VERDICT_COLUMNS)
        assert lines[1] == "a,0.25,1,true,false"
        assert lines[2] == "b,,1,false,false"
        assert lines[3] == "c,2,,false,false"
