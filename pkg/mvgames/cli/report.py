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
"""
Run reports and trace files.

JSON reports have the fixed top-level keys
    scenario, solution, stability, ergodic, nash, values, verdicts
and simulation traces are written as CSV with the columns of TRACE_COLUMNS.
"""

import sys
import math
import logging
import platform
import numpy as np
import scipy
from pathlib import Path
from datetime import datetime
from zoneinfo import ZoneInfo
from importlib import metadata
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
from tzlocal import get_localzone_name
from ..api.games.models import CostParams
from ..api.simulation.models import SimTrace
from ..api.simulation.core import running_cost_path, cumulative_cost
from ..api.util import json_dumps, finite_or_none

logger = logging.getLogger(__name__)

REPORT_KEYS = ("scenario", "solution", "stability", "ergodic", "nash", "values", "verdicts")
TRACE_COLUMNS = ("t", "m1", "m2", "s11", "s22", "s12", "cost1_avg", "cost2_avg")
VERDICT_COLUMNS = ("name", "value", "tolerance", "passed", "expected_fail")


def versions() -> Dict[str, str]:
    try:
        own = metadata.version("mvgames")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"mvgames": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def timestamp() -> str:
    return datetime.now(ZoneInfo(get_localzone_name())).isoformat()


@dataclass
class Verdict:
    name: str
    value: float
    tolerance: float
    passed: bool
    expected_fail: bool = False
    detail: str = ""

    def to_dict(self) -> dict:
        result = {"name": self.name, "value": finite_or_none(self.value), "tolerance": finite_or_none(self.tolerance),
                  "passed": self.passed, "expected_fail": self.expected_fail}
        if self.detail:
            result["detail"] = self.detail
        return result


def judge_at_most(name: str, value: float, tolerance: float, detail: str = "") -> Verdict:
    value = float(value)
    return Verdict(name, value, tolerance, bool(math.isfinite(value) and value <= tolerance), detail=detail)


def judge_relative(name: str, estimate: float, target: float, rel_tol: float, se: Optional[float] = None,
                   se_factor: float = 3.0, detail: str = "") -> Verdict:
    """
    Monte Carlo estimate against an exact target. Passes when the relative error is within
    rel_tol or the absolute error is within se_factor standard errors. Targets near zero are
    compared absolutely.
    """
    err = abs(float(estimate) - float(target))
    rel = err / abs(target) if abs(target) > 1e-3 else err
    within_se = se is not None and math.isfinite(se) and se > 0.0 and err <= se_factor * se
    passed = math.isfinite(rel) and (rel <= rel_tol or within_se)
    if se is not None and math.isfinite(se):
        detail = f"{detail}; " if detail else ""
        detail += f"|err|={err:.3g}, {se_factor:g} se={se_factor * se:.3g}"
    return Verdict(name, rel, rel_tol, bool(passed), detail=detail)


@dataclass
class RunReport:
    scenario: Dict[str, Any] = field(default_factory=dict)
    solution: Dict[str, Any] = field(default_factory=dict)
    stability: Dict[str, Any] = field(default_factory=dict)
    ergodic: Dict[str, Any] = field(default_factory=dict)
    nash: Dict[str, Any] = field(default_factory=dict)
    values: Dict[str, Any] = field(default_factory=dict)
    verdicts: List[Verdict] = field(default_factory=list)

    def add(self, verdict: Verdict) -> Verdict:
        self.verdicts.append(verdict)
        level = logging.INFO if verdict.passed else logging.WARNING
        logger.log(level, f"Verdict {verdict.name}: value={verdict.value:.6g} tolerance={verdict.tolerance:.3g} "
                          f"passed={verdict.passed}{' (expected failure)' if verdict.expected_fail else ''}")
        return verdict

    @property
    def failed(self) -> List[Verdict]:
        return [v for v in self.verdicts if not v.passed]

    @property
    def passed(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "solution": self.solution,
            "stability": self.stability,
            "ergodic": self.ergodic,
            "nash": self.nash,
            "values": self.values,
            "verdicts": [v.to_dict() for v in self.verdicts],
        }


def _open_target(path: Optional[str]):
    if path is None:
        return sys.stdout, False
    fp = Path(path)
    fp.parent.mkdir(parents=True, exist_ok=True)
    return open(fp, "w", newline=""), True


def write_json(data: Any, path: Optional[str] = None) -> None:
    payload = data.to_dict() if hasattr(data, "to_dict") else data
    out, close = _open_target(path)
    try:
        out.write(json_dumps(payload))
        out.write("\n")
    finally:
        if close:
            out.close()
    if path:
        logger.info(f"Wrote JSON report to {path}")


def trace_rows(trace: SimTrace, params: CostParams) -> np.ndarray:
    accum = trace.cost_accum if trace.cost_accum is not None else cumulative_cost(trace, params)
    rates = running_cost_path(trace, params)
    averages = np.empty_like(accum)
    averages[0] = rates[0]
    averages[1:] = accum[1:] / trace.times[1:, None]
    return np.column_stack([trace.times, trace.mean_path, trace.second_moment_path, averages])


def write_trace_csv(trace: SimTrace, params: CostParams, path: Optional[str] = None) -> None:
    out, close = _open_target(path)
    try:
        np.savetxt(out, trace_rows(trace, params), fmt="%.17g", delimiter=",",
                   header=",".join(TRACE_COLUMNS), comments="")
    finally:
        if close:
            out.close()
    if path:
        logger.info(f"Wrote trace CSV to {path}")


def write_verdicts_csv(report: RunReport, path: Optional[str] = None) -> None:
    out, close = _open_target(path)
    try:
        out.write(",".join(VERDICT_COLUMNS) + "\n")
        for v in report.verdicts:
            value = "" if not math.isfinite(v.value) else f"{v.value:.17g}"
            tolerance = "" if not math.isfinite(v.tolerance) else f"{v.tolerance:.17g}"
            out.write(f"{v.name},{value},{tolerance},{str(v.passed).lower()},"
                      f"{str(v.expected_fail).lower()}\n")
    finally:
        if close:
            out.close()
