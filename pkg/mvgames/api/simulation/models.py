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

import math
import numpy as np
from dataclasses import dataclass, field, replace
from typing import Optional
from ..measures.models import Vec2, SymMat2, GaussianMeasure, EmpiricalMeasure, MeasureHandle, measure_from_dict
from ..mvcalculus import AffineDrift
from ..util import as_matrix, as_vec

MAX_DT = 0.05
DIVERGENCE_BOUND = 1e6


def tail_steps(dt: float, t_final: float, burn_in: float) -> int:
    """Number of Euler steps on the grid dt * k, k = 0..round(t_final / dt), at or after burn_in"""
    n_steps = max(int(round(t_final / dt)), 1)
    start = max(int(math.ceil((burn_in - 1e-9 * max(dt, 1.0)) / dt)), 0)
    return n_steps - start


@dataclass(frozen=True, eq=False)
class FeedbackLaw:
    """alpha(mu, x) = -(G x + L m(mu) + k), one row per player"""
    G: np.ndarray
    L: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    k: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        for name, coerce in (("G", as_matrix), ("L", as_matrix), ("k", as_vec)):
            value = np.array(coerce(getattr(self, name)), dtype=float)
            if not np.all(np.isfinite(value)):
                raise ValueError(f"feedback law entry {name} must be finite")
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @staticmethod
    def zero() -> "FeedbackLaw":
        return FeedbackLaw(np.zeros((2, 2)))

    def control(self, mean, x) -> np.ndarray:
        """Controls for an (N, 2) array of states given the population mean"""
        pts = np.asarray(x, dtype=float)
        return -(pts @ self.G.T + (self.L @ as_vec(mean) + self.k))

    def with_row(self, player: int, law: "FeedbackLaw") -> "FeedbackLaw":
        """Replace player's row (state gain, mean gain and constant) by the same row of law"""
        row = player - 1
        g, l, k = self.G.copy(), self.L.copy(), self.k.copy()
        g[row], l[row], k[row] = law.G[row], law.L[row], law.k[row]
        return FeedbackLaw(g, l, k)

    def scale_state_gain(self, player: int, factor: float) -> "FeedbackLaw":
        g = self.G.copy()
        g[player - 1] *= factor
        return FeedbackLaw(g, self.L, self.k)

    def as_affine_drift(self) -> AffineDrift:
        return AffineDrift(A=-self.G, B=-self.L, b=-self.k)

    def to_dict(self) -> dict:
        return {"G": self.G.tolist(), "L": self.L.tolist(), "k": self.k.tolist()}


@dataclass(frozen=True)
class SimConfig:
    n_particles: int
    dt: float
    t_final: float
    burn_in: float = 0.0
    seed: int = 0
    init: MeasureHandle = field(default_factory=lambda: EmpiricalMeasure.dirac([0.0, 0.0]))
    backend: str = "serial"
    workers: int = 1

    def __post_init__(self):
        if int(self.n_particles) < 2:
            raise ValueError(f"n_particles must be at least 2, got {self.n_particles}")
        if not (0.0 < self.dt <= MAX_DT):
            raise ValueError(f"dt must lie in (0, {MAX_DT}], got {self.dt}")
        if self.t_final <= 0.0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if not (0.0 <= self.burn_in < self.t_final):
            raise ValueError(f"burn_in must lie in [0, t_final), got {self.burn_in}")
        if tail_steps(self.dt, self.t_final, self.burn_in) < 1:
            raise ValueError(f"no time step between burn_in={self.burn_in} and t_final={self.t_final} at dt={self.dt}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if int(self.workers) < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        object.__setattr__(self, "n_particles", int(self.n_particles))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "workers", int(self.workers))

    @property
    def n_steps(self) -> int:
        return max(int(round(self.t_final / self.dt)), 1)

    def with_updates(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return {"n_particles": self.n_particles, "dt": self.dt, "t_final": self.t_final, "burn_in": self.burn_in,
                "seed": self.seed, "init": self.init.to_dict(), "backend": self.backend, "workers": self.workers}

    @staticmethod
    def from_dict(data: dict) -> "SimConfig":
        data = dict(data)
        if "init" in data and isinstance(data["init"], dict):
            data["init"] = measure_from_dict(data["init"])
        return SimConfig(**data)


@dataclass(frozen=True, eq=False)
class SimTrace:
    """
    Moment record of a closed-loop particle simulation on the grid t_n = n dt.
    Second moments are stored as columns (s11, s22, s12); control moments are
    E[a_i] and E[a_i^2] per player.
    """
    times: np.ndarray
    mean_path: np.ndarray
    second_moment_path: np.ndarray
    control_mean_path: np.ndarray
    control_second_path: np.ndarray
    cost_accum: Optional[np.ndarray]
    final_cloud: EmpiricalMeasure
    tail_cloud_stats: GaussianMeasure
    burn_in: float
    seed: int

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def tail_start(self) -> int:
        return int(np.searchsorted(self.times, self.burn_in - 1e-9 * max(self.dt, 1.0)))

    def second_moment_matrices(self) -> np.ndarray:
        s = self.second_moment_path
        out = np.empty((s.shape[0], 2, 2))
        out[:, 0, 0], out[:, 1, 1] = s[:, 0], s[:, 1]
        out[:, 0, 1] = out[:, 1, 0] = s[:, 2]
        return out

    def tail_control_stats(self) -> GaussianMeasure:
        """Moment-matched per-coordinate control law over the tail (cross covariance not recorded)"""
        start = self.tail_start
        mean = self.control_mean_path[start:].mean(axis=0)
        var = np.clip(self.control_second_path[start:].mean(axis=0) - mean ** 2, 0.0, None)
        return GaussianMeasure(Vec2.from_array(mean), SymMat2.diag(var[0], var[1]))


@dataclass(frozen=True)
class DeviationSpec:
    player: int
    law: FeedbackLaw

    def __post_init__(self):
        if self.player not in (1, 2):
            raise ValueError(f"player must be 1 or 2, got {self.player}")


@dataclass(frozen=True)
class ErgodicEstimate:
    c_hat: tuple
    se: tuple
    n_traces: int

    def to_dict(self) -> dict:
        return {"c_hat": list(self.c_hat), "se": list(self.se), "n_traces": self.n_traces}


@dataclass(frozen=True)
class DeviationOutcome:
    player: int
    scaling: float
    estimate: float
    se: float
    c: float
    diverged: bool

    @property
    def not_below(self) -> bool:
        """Estimate is at least c - 3 SE"""
        return self.diverged or self.estimate >= self.c - 3.0 * self.se

    @property
    def strictly_above(self) -> bool:
        return self.diverged or self.estimate > self.c + 3.0 * self.se

    def to_dict(self) -> dict:
        return {"player": self.player, "scaling": self.scaling,
                "estimate": self.estimate if math.isfinite(self.estimate) else None,
                "se": self.se if math.isfinite(self.se) else None, "c": self.c, "diverged": self.diverged,
                "not_below": self.not_below, "strictly_above": self.strictly_above}
