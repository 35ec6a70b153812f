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
import sys
import pathlib
import pytest
import numpy as np

# Insert the project root (one level up from test/) onto sys.path
sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent))

from mvgames.api.measures.models import Vec2, SymMat2, GaussianMeasure, EmpiricalMeasure
from mvgames.api.games.models import CostParams, ModelTag, BranchSpec
from mvgames.api.games.riccati import solve_ex1, solve_ex2_diagonal, solve_ex2_newton, REFERENCE_EXAMPLE
from mvgames.api.simulation.models import SimConfig

CONFIG_DIR = pathlib.Path(__file__).resolve().parent.parent / "config"


@pytest.fixture
def config_dir():
    return CONFIG_DIR


@pytest.fixture
def rng():
    """Seeded generator for randomized checks"""
    return np.random.default_rng(12345)


@pytest.fixture
def ex1_params():
    """Gamma model with r1 = 1, r2 = 4"""
    return CostParams(ModelTag.EX1_GAMMA, r1=1.0, r2=4.0, gamma=0.5)


@pytest.fixture
def ex1_solution(ex1_params):
    return solve_ex1(ex1_params.r1, ex1_params.r2)


@pytest.fixture
def diagonal_params():
    return CostParams(ModelTag.EX2_ETA, r1=2.0, r2=0.5, eta1=Vec2(1.0, 0.0), eta2=Vec2(0.0, -0.7))


@pytest.fixture
def diagonal_solution(diagonal_params):
    return solve_ex2_diagonal(diagonal_params)


@pytest.fixture(scope="session")
def reference_params():
    """The published numerical example of the eta model"""
    return CostParams(ModelTag.EX2_ETA, r1=REFERENCE_EXAMPLE["r1"], r2=REFERENCE_EXAMPLE["r2"],
                      eta1=Vec2(*REFERENCE_EXAMPLE["eta1"]), eta2=Vec2(*REFERENCE_EXAMPLE["eta2"]))


@pytest.fixture(scope="session")
def reference_solution(reference_params):
    return solve_ex2_newton(reference_params)


@pytest.fixture
def sample_gaussian():
    return GaussianMeasure(Vec2(0.3, -0.8), SymMat2(1.2, 0.7, 0.25))


@pytest.fixture
def sample_cloud(rng):
    """Empirical measure of 500 correlated particles"""
    z = rng.standard_normal((500, 2))
    return EmpiricalMeasure(z @ np.array([[1.0, 0.4], [0.0, 0.8]]) + np.array([0.5, -0.2]))


@pytest.fixture
def small_config():
    """Short, cheap simulation settings"""
    return SimConfig(n_particles=256, dt=0.01, t_final=2.0, burn_in=1.0, seed=42,
                     init=GaussianMeasure.standard())
