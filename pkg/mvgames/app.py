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
import os
import sys
import json
import logging
import argparse
from pathlib import Path
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence
from dotenv import dotenv_values
from .telemetry import audit_event
from .telemetry.audit.logger import init_audit_logger
from .api.games.common import NoConvergence, SingularJacobian, SingularMeanMatrix, EmptyResult, ScenarioError, \
    Diverged
from .api.games.models import BranchSpec
from .api.simulation.backends import PARTICLE_BACKENDS
from .cli.scenario import Scenario, OutputFormat, load_scenario
from .cli.report import write_json, write_trace_csv, write_verdicts_csv
from .cli.commands import RunContext, DEFAULT_VERIFY_CONFIG, cmd_solve, cmd_verify, cmd_residual, cmd_simulate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_SOLVER_FAILED = 2
EXIT_NO_ERGODIC_BRANCH = 3
EXIT_CONFIG_ERROR = 4

COMMANDS = ("solve", "verify", "residual", "simulate")

_TRUTHY = {"1", "true", "yes", "on"}


def _truthy(value) -> bool:
    return str(value).strip().lower() in _TRUTHY


def load_config(environ: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
    """
    Load MVGAMES_* variables from the OS environment, a .env file, else sane defaults.
    """
    env_config = {
        "MVGAMES_DEBUG": "false",
        "MVGAMES_AUDIT_USE_SYSLOG": "false",
        "MVGAMES_AUDIT_LOGFILE_PATH": "mvgames-audit.log",
        "MVGAMES_PARTICLE_BACKEND": "serial",
        "MVGAMES_WORKERS": "1",
        "MVGAMES_VERIFY_CONFIG_FILE": "config/verify_config.json",
    }

    # first match wins
    dotenv_locations = [
        Path("/etc/mvgames/mvgames.env"),
        Path.home() / "mvgames.env",
        Path("./config/mvgames.env"),
        Path("./mvgames.env")
    ]
    for fn in dotenv_locations:
        if fn.is_file():
            fp = str(fn)
            env_config.update(dotenv_values(dotenv_path=fp))
            logger.info(f"Loaded dotenv configuration file from: {fp}")
            break

    env_config.update((os.environ if environ is None else environ).items())

    _ENV_PREFIX = "MVGAMES_"
    return {
        k[len(_ENV_PREFIX):]: v
        for k, v in env_config.items()
        if k.startswith(_ENV_PREFIX)
    }


def load_verify_config(path: Optional[str]) -> Dict[str, Any]:
    """Verification tolerances from JSON, merged over the built-in defaults"""
    verify = dict(DEFAULT_VERIFY_CONFIG)
    if path and os.path.exists(path):
        try:
            with open(path) as f:
                overrides = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioError(f"cannot read verification config {path}: {e}", field="VERIFY_CONFIG_FILE")
        if not isinstance(overrides, dict):
            raise ScenarioError(f"verification config {path} must hold a JSON object", field="VERIFY_CONFIG_FILE")
        unknown = set(overrides) - set(DEFAULT_VERIFY_CONFIG)
        if unknown:
            logger.warning(f"Ignoring unknown verification settings: {sorted(unknown)}")
        verify.update({k: v for k, v in overrides.items() if k in DEFAULT_VERIFY_CONFIG})
    elif path:
        logger.debug(f"Verification config {path} not found, using defaults")
    return verify


@dataclass
class App:
    config: Dict[str, Any] = field(default_factory=dict)
    context: RunContext = field(default_factory=RunContext)


def create_app(environ: Optional[Dict[str, str]] = None, audit: bool = True) -> App:
    config = load_config(environ)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s", force=True)
    logging.getLogger("mvgames").setLevel(logging.DEBUG if _truthy(config.get("DEBUG", False)) else logging.INFO)

    if audit:
        init_audit_logger(filename=config.get("AUDIT_LOGFILE_PATH", "mvgames-audit.log"),
                          use_syslog=_truthy(config.get("AUDIT_USE_SYSLOG", False)))

    backend = config.get("PARTICLE_BACKEND", "serial")
    if backend not in PARTICLE_BACKENDS:
        raise ScenarioError(f"unknown particle backend '{backend}', expected one of {sorted(PARTICLE_BACKENDS)}",
                            field="PARTICLE_BACKEND")
    try:
        workers = int(config.get("WORKERS", 1))
    except ValueError:
        raise ScenarioError(f"WORKERS must be an integer, got {config.get('WORKERS')!r}", field="WORKERS")

    verify = load_verify_config(config.get("VERIFY_CONFIG_FILE"))
    if config.get("RICCATI_TOL"):
        try:
            verify["riccati_tol"] = float(config["RICCATI_TOL"])
        except ValueError:
            raise ScenarioError(f"RICCATI_TOL must be a number, got {config['RICCATI_TOL']!r}", field="RICCATI_TOL")

    # environment settings only override the scenario when they differ from the defaults
    context = RunContext(verify=verify,
                         backend=backend if backend != "serial" else None,
                         workers=workers if workers > 1 else None)
    return App(config=config, context=context)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvgames",
                                     description="Solve and verify ergodic two-player McKean-Vlasov LQ games")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--scenario", required=True, help="scenario TOML file")
        cmd.add_argument("--out", default=None, help="output path (default: scenario [output].path or stdout)")
        cmd.add_argument("--format", choices=[f.value for f in OutputFormat], default=None)
        cmd.add_argument("--seed", type=int, default=None, help="override [sim].seed")
        cmd.add_argument("--branch", choices=[b.label for b in BranchSpec.all()], default=None,
                         help="override [model].branch")
        if name == "verify":
            cmd.add_argument("--gamma-sweep", action="store_true",
                             help="check the Master residual across gamma values (gamma model only)")
        if name == "residual":
            cmd.add_argument("--solution", required=True, help="candidate solution JSON or solve report")
    return parser


def _apply_overrides(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    if args.branch is not None:
        scenario = scenario.with_updates(branch=BranchSpec.from_label(args.branch))
    if args.format is not None:
        scenario = scenario.with_updates(output_format=OutputFormat(args.format))
    if args.out is not None:
        scenario = scenario.with_updates(output_path=args.out)
    return scenario


def _write(scenario: Scenario, payload, command: str) -> None:
    path = scenario.output_path
    if scenario.output_format is OutputFormat.CSV and hasattr(payload, "verdicts"):
        write_verdicts_csv(payload, path)
    else:
        write_json(payload, path)
    audit_event("report_written", scenario=scenario.name, command=command, path=path or "<stdout>",
                format=scenario.output_format.value)


def run(args: argparse.Namespace, app: App) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    ctx = app.context

    if args.command == "solve":
        _write(scenario, cmd_solve(scenario, ctx), "solve")
        return EXIT_OK

    if args.command == "verify":
        report = cmd_verify(scenario, ctx, gamma_sweep=args.gamma_sweep)
        _write(scenario, report, "verify")
        if not report.passed:
            logger.error(f"Verification failed: {', '.join(v.name for v in report.failed)}")
            return EXIT_VERIFY_FAILED
        return EXIT_OK

    if args.command == "residual":
        write_json(cmd_residual(scenario, args.solution), scenario.output_path)
        audit_event("report_written", scenario=scenario.name, command="residual",
                    path=scenario.output_path or "<stdout>", format="json")
        return EXIT_OK

    trace, summary = cmd_simulate(scenario, ctx)
    if scenario.output_format is OutputFormat.CSV:
        write_trace_csv(trace, scenario.params, scenario.output_path)
    else:
        write_json(summary, scenario.output_path)
    audit_event("report_written", scenario=scenario.name, command="simulate",
                path=scenario.output_path or "<stdout>", format=scenario.output_format.value)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        app = create_app()
        return run(args, app)
    except ScenarioError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except (NoConvergence, SingularJacobian, SingularMeanMatrix) as e:
        audit_event("riccati_failed", scenario=args.scenario, error=type(e).__name__, message=str(e))
        logger.error(f"Riccati solver failed: {e}")
        return EXIT_SOLVER_FAILED
    except EmptyResult as e:
        logger.error(f"Branch filter rejected every candidate: {e}")
        return EXIT_NO_ERGODIC_BRANCH
    except Diverged as e:
        logger.error(f"Simulation diverged: {e}")
        return EXIT_VERIFY_FAILED


if __name__ == "__main__":
    sys.exit(main())
