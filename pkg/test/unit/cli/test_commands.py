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
import pytest
from mvgames.api.games.common import ScenarioError
from mvgames.api.util import json_dumps
from mvgames.api.games.riccati import REFERENCE_EXAMPLE, RESIDUAL_LABELS
from mvgames.cli.scenario import parse_scenario
from mvgames.cli.commands import (RunContext, DEFAULT_VERIFY_CONFIG, solve_scenario, cmd_solve, cmd_verify,
                                  cmd_residual, cmd_simulate)

SMALL_SIM = """
[sim]
n_particles = 256
dt = 0.01
t_final = 30.0
burn_in = 10.0
seed = 21
seeds = 2
init = "{init}"
value_horizon = 5.0
value_particles = 256
value_dt = 0.02
"""

EX1_MODEL = """
[model]
type = "ex1_gamma"
r1 = 1.0
r2 = 4.0
branch = "{branch}"
"""

REFERENCE_MODEL = """
[model]
type = "ex2_eta"
r1 = 1.0
r2 = 1.5
eta1 = [1.0, -0.15]
eta2 = [0.2, 1.2]
"""


def ex1_scenario(branch="++", init="invariant"):
    return parse_scenario(EX1_MODEL.format(branch=branch) + SMALL_SIM.format(init=init), name="ex1")


@pytest.fixture
def small_context():
    """Verification settings scaled down so the battery runs in seconds"""
    verify = dict(DEFAULT_VERIFY_CONFIG)
    verify.update(nash_particles=128, nash_t_final=10.0, nash_burn_in=2.0, deviation_scalings=[0.5, 1.5],
                  divergence_particles=64, baseline_particles=128, baseline_t_final=10.0, baseline_burn_in=2.0,
                  master_samples=5)
    return RunContext(verify=verify)


class TestSolve:
    """Test the solve command"""

    def test_ex1_constants(self):
        report = cmd_solve(ex1_scenario())
        assert report.solution["c1"] == pytest.approx(2.0)
        assert report.solution["c2"] == pytest.approx(2.5)
        assert report.solution["residual"]["labels"] == list(RESIDUAL_LABELS)
        assert report.stability["branch_filter"]["accepted"] == ["++"]
        assert report.passed

    def test_reference_example(self):
        report = cmd_solve(parse_scenario(REFERENCE_MODEL, name="reference"))
        assert report.solution["c1"] == pytest.approx(REFERENCE_EXAMPLE["c1"], abs=1e-8)
        assert report.stability["reference"]["quantities"]["c2"]["agrees"]
        assert report.solution["residual"]["max_abs"] < 1e-10
        assert report.scenario["seed"] == 0
        assert "versions" in report.scenario

    def test_negative_branch_reported_as_expected_failure(self):
        report = cmd_solve(ex1_scenario(branch="-+"))
        verdict = next(v for v in report.verdicts if v.name == "selected_branch_ergodic")
        assert verdict.expected_fail
        assert verdict.passed
        assert "invariant_measure" not in report.values

    def test_branch_needs_closed_form_solver(self):
        scenario = parse_scenario(REFERENCE_MODEL + 'branch = "+-"\n')
        with pytest.raises(ScenarioError):
            solve_scenario(scenario, RunContext())

    def test_report_is_json_serializable(self):
        data = json.loads(json_dumps(cmd_solve(ex1_scenario()).to_dict()))
        assert data["solution"]["branch"] == "++"


class TestResidual:
    """Test the residual command on candidate files"""

    def test_printed_reference_file(self, config_dir):
        scenario = parse_scenario(REFERENCE_MODEL, name="reference")
        result = cmd_residual(scenario, config_dir / "solutions" / "ex2_reference_printed.json")
        assert result["residual"]["max_abs"] == pytest.approx(0.4257, abs=1e-3)
        assert result["constants"]["file"] == pytest.approx(result["constants"]["formula"], abs=1e-12)
        assert "standard_gaussian" in [entry["measure"] for entry in result["master_residuals"]]

    def test_solved_reference_round_trip(self, tmp_path):
        scenario = parse_scenario(REFERENCE_MODEL, name="reference")
        path = tmp_path / "reference.json"
        path.write_text(json_dumps(cmd_solve(scenario).to_dict()))
        result = cmd_residual(scenario, path)
        assert result["residual"]["max_abs"] < 1e-6
        names = [entry["measure"] for entry in result["master_residuals"]]
        assert names == ["initial", "standard_gaussian", "invariant"]
        assert all(max(abs(r) for r in entry["residual"]) < 1e-6 for entry in result["master_residuals"])

    def test_zero_solution(self, tmp_path):
        path = tmp_path / "zero.json"
        path.write_text(json.dumps({"Q1": [0, 0, 0], "Q2": [0, 0, 0]}))
        result = cmd_residual(ex1_scenario(), path)
        assert result["residual"]["values"][0] == pytest.approx(1.0)
        assert [entry["measure"] for entry in result["master_residuals"]] == ["standard_gaussian"]

    def test_round_trip_from_solve_report(self, tmp_path):
        scenario = ex1_scenario()
        report = cmd_solve(scenario)
        path = tmp_path / "report.json"
        path.write_text(json_dumps(report.to_dict()))
        result = cmd_residual(scenario, path)
        assert result["residual"]["max_abs"] == pytest.approx(report.solution["residual"]["max_abs"], abs=1e-12)


class TestVerify:
    """Test the verification battery on scaled-down settings"""

    def test_negative_branch_only_expected_failures(self, small_context):
        report = cmd_verify(ex1_scenario(branch="-+", init="gaussian"), small_context)
        names = [v.name for v in report.verdicts]
        assert "branch_-+_diverges" in names
        assert all(v.passed for v in report.verdicts)
        assert any(v.expected_fail for v in report.verdicts)

    def test_battery_runs_every_stage(self, small_context):
        report = cmd_verify(ex1_scenario(), small_context, gamma_sweep=True)
        names = {v.name for v in report.verdicts}
        for expected in ("riccati_residual", "master_residual", "gamma_invariance", "drift_monotonicity",
                         "stability_identity", "branch_+-_diverges", "branch_-+_diverges", "branch_--_diverges",
                         "ergodic_cost_1", "ergodic_cost_2", "invariant_cov", "invariant_mean", "mean_path",
                         "nash_player1_x0.5", "nash_player2_x1.5", "value_identity_1", "baseline_admissible",
                         "invariant_law_stationary"):
            assert expected in names
        exact = {v.name: v for v in report.verdicts}
        for name in ("riccati_residual", "master_residual", "gamma_invariance", "drift_monotonicity",
                     "branch_+-_diverges", "branch_--_diverges", "invariant_law_stationary"):
            assert exact[name].passed
        rejected = [run for run in report.values["diverged_runs"] if run["kind"] == "rejected_branch"]
        assert {"+-", "--"} <= {run["label"] for run in rejected} <= {"+-", "-+", "--"}
        assert all(math.isfinite(run["time"]) for run in rejected)
        assert len(report.values["gamma_sweep"]["gamma"]) == len(DEFAULT_VERIFY_CONFIG["gamma_values"])
        assert report.ergodic["analytic"] == [pytest.approx(2.0), pytest.approx(2.5)]


class TestSimulate:
    """Test the simulate command"""

    def test_trace_and_summary(self):
        trace, summary = cmd_simulate(ex1_scenario(init="dirac"))
        assert trace.times[-1] == pytest.approx(30.0)
        assert summary["ergodic"]["n_traces"] == 1
        assert summary["solution"]["c1"] == pytest.approx(2.0)
