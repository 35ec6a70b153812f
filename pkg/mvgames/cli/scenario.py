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
Scenario files (TOML, one table per section) and candidate-solution files (JSON)
"""

import re
import json
import tomllib
import logging
from enum import Enum
from pathlib import Path
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple
from ..api.games.common import ScenarioError
from ..api.games.models import CostParams, ModelTag, BranchSpec, RiccatiSolution
from ..api.measures.models import Vec2, SymMat2, GaussianMeasure, EmpiricalMeasure, MeasureHandle
from ..api.simulation.models import SimConfig, MAX_DT, tail_steps
from ..api.simulation.backends import PARTICLE_BACKENDS

logger = logging.getLogger(__name__)

U64 = 2 ** 64


class SolverKind(Enum):
    AUTO = "auto"
    NEWTON = "newton"
    DIAGONAL = "diagonal"
    CLOSED_FORM = "closed_form"


class InitKind(Enum):
    INVARIANT = "invariant"
    GAUSSIAN = "gaussian"
    DIRAC = "dirac"


class OutputFormat(Enum):
    JSON = "json"
    CSV = "csv"


MODEL_KEYS = {"type", "r1", "r2", "gamma", "eta1", "eta2", "branch", "solver"}
SIM_KEYS = {"n_particles", "dt", "t_final", "burn_in", "seed", "seeds", "init", "init_mean", "init_cov",
            "backend", "workers", "value_horizon", "value_particles", "value_dt", "value_init"}
OUTPUT_KEYS = {"format", "path"}


@dataclass(frozen=True)
class SimSettings:
    n_particles: int = 4096
    dt: float = 0.005
    t_final: float = 200.0
    burn_in: float = 100.0
    seed: int = 0
    seeds: int = 4
    init: InitKind = InitKind.INVARIANT
    init_mean: Tuple[float, float] = (0.0, 0.0)
    init_cov: Tuple[float, float, float] = (1.0, 1.0, 0.0)
    backend: str = "serial"
    workers: int = 1
    value_horizon: float = 50.0
    value_particles: int = 8192
    value_dt: float = 0.01
    value_init: Tuple[float, float] = (1.0, 1.0)

    def seed_list(self) -> List[int]:
        return [(self.seed + k) % U64 for k in range(self.seeds)]

    def initial_measure(self, invariant: Optional[GaussianMeasure] = None) -> MeasureHandle:
        if self.init is InitKind.INVARIANT:
            if invariant is None:
                raise ScenarioError("init = 'invariant' needs an ergodic solution", field="init")
            return invariant
        if self.init is InitKind.DIRAC:
            return EmpiricalMeasure.dirac(self.init_mean)
        return GaussianMeasure(Vec2(*self.init_mean), SymMat2(*self.init_cov))

    def config(self, init: MeasureHandle, seed: Optional[int] = None, **kwargs) -> SimConfig:
        values = dict(n_particles=self.n_particles, dt=self.dt, t_final=self.t_final, burn_in=self.burn_in,
                      seed=self.seed if seed is None else seed, init=init, backend=self.backend,
                      workers=self.workers)
        values.update(kwargs)
        return SimConfig(**values)

    def to_dict(self) -> dict:
        return {"n_particles": self.n_particles, "dt": self.dt, "t_final": self.t_final, "burn_in": self.burn_in,
                "seed": self.seed, "seeds": self.seeds, "init": self.init.value, "init_mean": list(self.init_mean),
                "init_cov": list(self.init_cov), "backend": self.backend, "workers": self.workers,
                "value_horizon": self.value_horizon, "value_particles": self.value_particles,
                "value_dt": self.value_dt, "value_init": list(self.value_init)}


@dataclass(frozen=True)
class Scenario:
    params: CostParams
    branch: BranchSpec = field(default_factory=BranchSpec.positive)
    solver: SolverKind = SolverKind.AUTO
    sim: SimSettings = field(default_factory=SimSettings)
    output_format: OutputFormat = OutputFormat.JSON
    output_path: Optional[str] = None
    name: str = "scenario"
    source: Optional[str] = None

    def with_updates(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)

    def with_seed(self, seed: int) -> "Scenario":
        if not (0 <= seed < U64):
            raise ScenarioError(f"seed must be an unsigned 64-bit integer, got {seed}", field="seed")
        return replace(self, sim=replace(self.sim, seed=seed))

    def to_dict(self) -> dict:
        return {"name": self.name, "source": self.source, "model": self.params.to_dict(),
                "branch": self.branch.label, "solver": self.solver.value, "sim": self.sim.to_dict(),
                "output": {"format": self.output_format.value, "path": self.output_path}}


def _locate(text: str, section: Optional[str], key: str) -> Optional[int]:
    """1-based line number of `key = ...` inside [section], if present"""
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.match(r"^\[([A-Za-z0-9_.]+)\]", stripped)
        if header:
            current = header.group(1)
            continue
        if (section is None or current == section) and re.match(rf"^\"?{re.escape(key)}\"?\s*[=:]", stripped):
            return lineno
    return None


class _Fields:
    """Typed access to one scenario table with line-aware diagnostics"""

    def __init__(self, text: str, section: str, table: Dict[str, Any], allowed: set):
        self.text = text
        self.section = section
        self.table = table
        for key in table:
            if key not in allowed:
                self.fail(f"unknown key in [{section}]", key)

    def fail(self, message: str, key: str):
        raise ScenarioError(message, field=f"{self.section}.{key}", line=_locate(self.text, self.section, key))

    def has(self, key: str) -> bool:
        return key in self.table

    def number(self, key: str, default=None, integer: bool = False):
        if key not in self.table:
            if default is None:
                self.fail("missing required value", key)
            return default
        value = self.table[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"expected a number, got {value!r}", key)
        if integer and not isinstance(value, int):
            self.fail(f"expected an integer, got {value!r}", key)
        return value

    def vector(self, key: str, length: int, default=None) -> tuple:
        if key not in self.table:
            if default is None:
                self.fail("missing required value", key)
            return tuple(default)
        value = self.table[key]
        if (not isinstance(value, list) or len(value) != length
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
            self.fail(f"expected an array of {length} numbers, got {value!r}", key)
        return tuple(float(v) for v in value)

    def string(self, key: str, default: str) -> str:
        value = self.table.get(key, default)
        if not isinstance(value, str):
            self.fail(f"expected a string, got {value!r}", key)
        return value

    def choice(self, key: str, enum, default):
        value = self.string(key, default.value)
        try:
            return enum(value)
        except ValueError:
            self.fail(f"expected one of {[e.value for e in enum]}, got '{value}'", key)


def _toml_error_line(error: tomllib.TOMLDecodeError) -> Optional[int]:
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) if match else None


def parse_scenario(text: str, name: str = "scenario", source: Optional[str] = None) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"invalid TOML: {e}", line=_toml_error_line(e))

    for section in data:
        if section not in ("model", "sim", "output"):
            raise ScenarioError(f"unknown section [{section}]", field=section, line=_locate(text, None, section))
    if "model" not in data:
        raise ScenarioError("missing [model] section", field="model")

    model = _Fields(text, "model", data["model"], MODEL_KEYS)
    if not model.has("type"):
        model.fail("missing required value", "type")
    tag = model.choice("type", ModelTag, ModelTag.EX1_GAMMA)
    if tag is ModelTag.EX1_GAMMA:
        for key in ("eta1", "eta2"):
            if model.has(key):
                model.fail("eta penalties belong to the ex2_eta model", key)
    elif model.has("gamma"):
        model.fail("gamma belongs to the ex1_gamma model", "gamma")

    try:
        params = CostParams(model=tag, r1=model.number("r1"), r2=model.number("r2"),
                            gamma=model.number("gamma", 0.0),
                            eta1=Vec2(*model.vector("eta1", 2, (0.0, 0.0))),
                            eta2=Vec2(*model.vector("eta2", 2, (0.0, 0.0))))
    except ValueError as e:
        key = next((k for k in ("r1", "r2", "gamma") if k in str(e)), "type")
        model.fail(str(e), key)

    try:
        branch = BranchSpec.from_label(model.string("branch", "++"))
    except ValueError as e:
        model.fail(str(e), "branch")
    solver = model.choice("solver", SolverKind, SolverKind.AUTO)
    if solver is SolverKind.DIAGONAL and not params.is_diagonal:
        model.fail("the diagonal solver needs eta1 = (e11, 0) and eta2 = (0, e22) with e11, e22 nonzero", "solver")
    if solver is SolverKind.CLOSED_FORM and tag is not ModelTag.EX1_GAMMA:
        model.fail("the closed_form solver applies to the ex1_gamma model", "solver")
    if solver in (SolverKind.NEWTON, SolverKind.DIAGONAL) and tag is not ModelTag.EX2_ETA:
        model.fail(f"the {solver.value} solver applies to the ex2_eta model", "solver")

    sim = _Fields(text, "sim", data.get("sim", {}), SIM_KEYS)
    defaults = SimSettings()
    settings = SimSettings(
        n_particles=sim.number("n_particles", defaults.n_particles, integer=True),
        dt=float(sim.number("dt", defaults.dt)),
        t_final=float(sim.number("t_final", defaults.t_final)),
        burn_in=float(sim.number("burn_in", defaults.burn_in)),
        seed=sim.number("seed", defaults.seed, integer=True),
        seeds=sim.number("seeds", defaults.seeds, integer=True),
        init=sim.choice("init", InitKind, defaults.init),
        init_mean=sim.vector("init_mean", 2, defaults.init_mean),
        init_cov=sim.vector("init_cov", 3, defaults.init_cov),
        backend=sim.string("backend", defaults.backend),
        workers=sim.number("workers", defaults.workers, integer=True),
        value_horizon=float(sim.number("value_horizon", defaults.value_horizon)),
        value_particles=sim.number("value_particles", defaults.value_particles, integer=True),
        value_dt=float(sim.number("value_dt", defaults.value_dt)),
        value_init=sim.vector("value_init", 2, defaults.value_init),
    )
    if settings.n_particles < 2:
        sim.fail("n_particles must be at least 2", "n_particles")
    if settings.value_particles < 2:
        sim.fail("value_particles must be at least 2", "value_particles")
    for key in ("dt", "value_dt"):
        if not (0.0 < getattr(settings, key) <= MAX_DT):
            sim.fail(f"{key} must lie in (0, {MAX_DT}]", key)
    if settings.t_final <= 0.0:
        sim.fail("t_final must be positive", "t_final")
    if settings.value_horizon <= 0.0:
        sim.fail("value_horizon must be positive", "value_horizon")
    if not (0.0 <= settings.burn_in < settings.t_final):
        sim.fail("burn_in must lie in [0, t_final)", "burn_in")
    elif tail_steps(settings.dt, settings.t_final, settings.burn_in) < 1:
        sim.fail("burn_in leaves no time step before t_final at this dt", "burn_in")
    if not (0 <= settings.seed < U64):
        sim.fail("seed must be an unsigned 64-bit integer", "seed")
    if settings.seeds < 1:
        sim.fail("seeds must be at least 1", "seeds")
    if settings.workers < 1:
        sim.fail("workers must be at least 1", "workers")
    if settings.init is InitKind.GAUSSIAN:
        try:
            GaussianMeasure(Vec2(*settings.init_mean), SymMat2(*settings.init_cov))
        except ValueError as e:
            sim.fail(str(e), "init_cov")

    if settings.backend not in PARTICLE_BACKENDS:
        sim.fail(f"unknown backend, expected one of {sorted(PARTICLE_BACKENDS)}", "backend")

    output = _Fields(text, "output", data.get("output", {}), OUTPUT_KEYS)
    output_format = output.choice("format", OutputFormat, OutputFormat.JSON)
    output_path = output.string("path", "") or None

    return Scenario(params=params, branch=branch, solver=solver, sim=settings, output_format=output_format,
                    output_path=output_path, name=name, source=source)


def load_scenario(path) -> Scenario:
    fp = Path(path)
    try:
        text = fp.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario file {fp}: {e}")
    scenario = parse_scenario(text, name=fp.stem, source=str(fp))
    logger.info(f"Loaded scenario '{scenario.name}' ({scenario.params.model.value}) from {fp}")
    return scenario


SOLUTION_MATRICES = ("Q1", "Q2", "R1", "R2")
SOLUTION_VECTORS = ("q1", "q2")


def parse_solution(text: str) -> RiccatiSolution:
    """
    Candidate solution from JSON: either the solution object itself or a report carrying it under
    "solution". Matrices are [s11, s22, s12] or nested 2x2 lists; R and q default to zero.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e.msg}", line=e.lineno)
    if isinstance(data, dict) and isinstance(data.get("solution"), dict):
        data = data["solution"]
    if not isinstance(data, dict):
        raise ScenarioError("solution file must contain a JSON object")

    def fail(message: str, key: str):
        raise ScenarioError(message, field=key, line=_locate(text, None, key))

    for key in ("Q1", "Q2"):
        if key not in data:
            fail("missing required matrix", key)
    for key in SOLUTION_MATRICES:
        if key in data:
            try:
                SymMat2.from_dict(data[key])
            except (ValueError, TypeError, KeyError) as e:
                fail(f"invalid matrix: {e}", key)
    for key in SOLUTION_VECTORS:
        if key in data:
            try:
                Vec2.from_dict(data[key])
            except (ValueError, TypeError) as e:
                fail(f"invalid vector: {e}", key)
    for key in ("c1", "c2", "residual_norm"):
        value = data.get(key)
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            fail(f"expected a number, got {value!r}", key)
    if data.get("branch") is not None:
        try:
            BranchSpec.from_label(data["branch"])
        except (ValueError, TypeError) as e:
            fail(str(e), "branch")
    return RiccatiSolution.from_dict(data)


def load_solution(path) -> RiccatiSolution:
    fp = Path(path)
    try:
        text = fp.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read solution file {fp}: {e}")
    return parse_solution(text)
