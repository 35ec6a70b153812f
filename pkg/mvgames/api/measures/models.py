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
from enum import Enum
from dataclasses import dataclass, field
from typing import Union

PSD_CLAMP = 1e-12


class MeasureKind(Enum):
    GAUSSIAN = "gaussian"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class Vec2:
    x1: float
    x2: float

    def __post_init__(self):
        object.__setattr__(self, "x1", float(self.x1))
        object.__setattr__(self, "x2", float(self.x2))
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise ValueError(f"Vec2 components must be finite, got ({self.x1}, {self.x2})")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])

    @staticmethod
    def from_array(arr) -> "Vec2":
        a = np.asarray(arr, dtype=float).reshape(-1)
        if a.shape != (2,):
            raise ValueError(f"expected 2 components, got {a.shape}")
        return Vec2(a[0], a[1])

    @staticmethod
    def zero() -> "Vec2":
        return Vec2(0.0, 0.0)

    def to_dict(self) -> list:
        return [self.x1, self.x2]

    @staticmethod
    def from_dict(data) -> "Vec2":
        return Vec2.from_array(data)


@dataclass(frozen=True)
class SymMat2:
    """Symmetric 2x2 matrix stored as (s11, s22, s12)"""
    s11: float
    s22: float
    s12: float = 0.0

    def __post_init__(self):
        for name in ("s11", "s22", "s12"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"SymMat2 entry {name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.s11, self.s12], [self.s12, self.s22]])

    @property
    def trace(self) -> float:
        return self.s11 + self.s22

    @property
    def det(self) -> float:
        return self.s11 * self.s22 - self.s12 * self.s12

    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues, closed form"""
        half_tr = 0.5 * self.trace
        disc = math.hypot(0.5 * (self.s11 - self.s22), self.s12)
        return np.array([half_tr - disc, half_tr + disc])

    @staticmethod
    def from_matrix(a) -> "SymMat2":
        arr = np.asarray(a, dtype=float)
        if arr.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {arr.shape}")
        return SymMat2(arr[0, 0], arr[1, 1], 0.5 * (arr[0, 1] + arr[1, 0]))

    @staticmethod
    def identity() -> "SymMat2":
        return SymMat2(1.0, 1.0, 0.0)

    @staticmethod
    def zero() -> "SymMat2":
        return SymMat2(0.0, 0.0, 0.0)

    @staticmethod
    def diag(d1: float, d2: float) -> "SymMat2":
        return SymMat2(d1, d2, 0.0)

    def to_dict(self) -> list:
        return [self.s11, self.s22, self.s12]

    @staticmethod
    def from_dict(data) -> "SymMat2":
        if isinstance(data, dict):
            return SymMat2(data["s11"], data["s22"], data.get("s12", 0.0))
        arr = np.asarray(data, dtype=float)
        if arr.shape == (2, 2):
            return SymMat2.from_matrix(arr)
        if arr.shape != (3,):
            raise ValueError(f"expected [s11, s22, s12] or a 2x2 nested list, got shape {arr.shape}")
        return SymMat2(arr[0], arr[1], arr[2])


@dataclass(frozen=True)
class GaussianMeasure:
    mean: Vec2
    cov: SymMat2

    def __post_init__(self):
        lam_min, lam_max = self.cov.eigenvalues()
        if lam_min < -PSD_CLAMP:
            raise ValueError(f"covariance must be positive semidefinite, smallest eigenvalue is {lam_min}")
        if lam_min < 0.0:
            # clamp the negative round-off eigenvalue to zero
            w, v = np.linalg.eigh(self.cov.matrix)
            w = np.clip(w, 0.0, None)
            object.__setattr__(self, "cov", SymMat2.from_matrix((v * w) @ v.T))

    @property
    def kind(self) -> MeasureKind:
        return MeasureKind.GAUSSIAN

    @staticmethod
    def standard() -> "GaussianMeasure":
        return GaussianMeasure(Vec2.zero(), SymMat2.identity())

    @staticmethod
    def point(x) -> "GaussianMeasure":
        """Degenerate Gaussian concentrated at x"""
        return GaussianMeasure(Vec2.from_array(x), SymMat2.zero())

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "mean": self.mean.to_dict(), "cov": self.cov.to_dict()}

    @staticmethod
    def from_dict(data: dict) -> "GaussianMeasure":
        return GaussianMeasure(Vec2.from_dict(data["mean"]), SymMat2.from_dict(data["cov"]))


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Uniform measure on an ordered particle list, stored as a read-only (N, 2) array"""
    particles: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.particles, dtype=float)
        if arr.ndim == 1 and arr.shape == (2,):
            arr = arr.reshape(1, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"particles must have shape (N, 2), got {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("an empirical measure needs at least one particle")
        if not np.all(np.isfinite(arr)):
            raise ValueError("particle positions must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "particles", arr)

    @property
    def kind(self) -> MeasureKind:
        return MeasureKind.EMPIRICAL

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    @staticmethod
    def dirac(x) -> "EmpiricalMeasure":
        return EmpiricalMeasure(np.asarray(x, dtype=float).reshape(1, 2))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "particles": self.particles.tolist()}

    @staticmethod
    def from_dict(data: dict) -> "EmpiricalMeasure":
        return EmpiricalMeasure(np.asarray(data["particles"], dtype=float))


MeasureHandle = Union[GaussianMeasure, EmpiricalMeasure]


def measure_from_dict(data: dict) -> MeasureHandle:
    kind = MeasureKind(data.get("kind", MeasureKind.GAUSSIAN.value))
    if kind is MeasureKind.GAUSSIAN:
        return GaussianMeasure.from_dict(data)
    return EmpiricalMeasure.from_dict(data)
