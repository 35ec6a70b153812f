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
Exceptions shared by the solvers, the simulator and the command line
"""

from typing import Optional


class GameError(Exception):
    """Base class for all solver and simulation failures"""


class RiccatiError(GameError):
    pass


class NoConvergence(RiccatiError):
    def __init__(self, last_residual: float, iterations: int, message: Optional[str] = None):
        self.last_residual = last_residual
        self.iterations = iterations
        super().__init__(message or f"Newton iteration did not converge after {iterations} iterations "
                                    f"(last residual norm {last_residual:.3e})")


class SingularJacobian(RiccatiError):
    def __init__(self, iteration: int, message: Optional[str] = None):
        self.iteration = iteration
        super().__init__(message or f"singular Jacobian at iteration {iteration}; "
                                    f"try a different initial guess or branch")


class EmptyResult(RiccatiError):
    def __init__(self, message: str = "no ergodic branch survives the filter"):
        super().__init__(message)


class SingularMeanMatrix(RiccatiError):
    def __init__(self, message: str = "mean dynamics matrix Qg + Rg is singular"):
        super().__init__(message)


class SimulationError(GameError):
    pass


class Diverged(SimulationError):
    def __init__(self, step: int, time: float, max_abs: float):
        self.step = step
        self.time = time
        self.max_abs = max_abs
        super().__init__(f"particle system diverged at step {step} (t={time:.4f}, max |x|={max_abs:.3e})")


class ScenarioError(GameError):
    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        location = ""
        if field:
            location += f" [field '{field}'"
            location += f", line {line}]" if line is not None else "]"
        super().__init__(f"{message}{location}")
