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

import numpy as np
from enum import Enum
from dataclasses import dataclass, field, replace
from typing import Optional, List, Tuple
from ..measures.models import Vec2, SymMat2
from ..mvcalculus import PolyValue


class ModelTag(Enum):
    EX1_GAMMA = "ex1_gamma"
    EX2_ETA = "ex2_eta"


@dataclass(frozen=True)
class CostParams:
    model: ModelTag
    r1: float
    r2: float
    gamma: float = 0.0
    eta1: Vec2 = field(default_factory=Vec2.zero)
    eta2: Vec2 = field(default_factory=Vec2.zero)

    def __post_init__(self):
        if not isinstance(self.model, ModelTag):
            object.__setattr__(self, "model", ModelTag(self.model))
        for name in ("r1", "r2"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
            object.__setattr__(self, name, value)
        gamma = float(self.gamma)
        if self.model is ModelTag.EX1_GAMMA and not (0.0 <= gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        object.__setattr__(self, "gamma", gamma)
        for name in ("eta1", "eta2"):
            value = getattr(self, name)
            if not isinstance(value, Vec2):
                object.__setattr__(self, name, Vec2.from_array(value))

    def r(self, i: int) -> float:
        return self.r1 if i == 1 else self.r2

    def eta(self, i: int) -> np.ndarray:
        if self.model is ModelTag.EX1_GAMMA:
            return np.zeros(2)
        return (self.eta1 if i == 1 else self.eta2).array

    def with_gamma(self, gamma: float) -> "CostParams":
        return replace(self, gamma=gamma)

    def as_ex2(self) -> "CostParams":
        """The same control penalties in the eta-model; ex1 maps to eta = 0"""
        if self.model is ModelTag.EX2_ETA:
            return self
        return CostParams(ModelTag.EX2_ETA, self.r1, self.r2)

    @property
    def is_diagonal(self) -> bool:
        """Mean penalties of the special diagonal form eta1 = (e11, 0), eta2 = (0, e22) with e11, e22 nonzero"""
        return (self.model is ModelTag.EX2_ETA and self.eta1.x2 == 0.0 and self.eta2.x1 == 0.0
                and self.eta1.x1 != 0.0 and self.eta2.x2 != 0.0)

    def to_dict(self) -> dict:
        result = {"model": self.model.value, "r1": self.r1, "r2": self.r2}
        if self.model is ModelTag.EX1_GAMMA:
            result["gamma"] = self.gamma
        else:
            result["eta1"] = self.eta1.to_dict()
            result["eta2"] = self.eta2.to_dict()
        return result

    @staticmethod
    def from_dict(data: dict) -> "CostParams":
        return CostParams(model=ModelTag(data["model"]), r1=data["r1"], r2=data["r2"],
                          gamma=data.get("gamma", 0.0),
                          eta1=Vec2.from_dict(data.get("eta1", [0.0, 0.0])),
                          eta2=Vec2.from_dict(data.get("eta2", [0.0, 0.0])))


@dataclass(frozen=True)
class BranchSpec:
    sign1: int = 1
    sign2: int = 1

    def __post_init__(self):
        for name in ("sign1", "sign2"):
            if getattr(self, name) not in (1, -1):
                raise ValueError(f"{name} must be +1 or -1, got {getattr(self, name)}")

    @property
    def label(self) -> str:
        return ("+" if self.sign1 > 0 else "-") + ("+" if self.sign2 > 0 else "-")

    @property
    def is_positive(self) -> bool:
        return self.sign1 > 0 and self.sign2 > 0

    @staticmethod
    def from_label(label: str) -> "BranchSpec":
        if len(label) != 2 or any(ch not in "+-" for ch in label):
            raise ValueError(f"branch must be one of ++, +-, -+, --; got '{label}'")
        return BranchSpec(1 if label[0] == "+" else -1, 1 if label[1] == "+" else -1)

    @staticmethod
    def positive() -> "BranchSpec":
        return BranchSpec(1, 1)

    @staticmethod
    def all() -> List["BranchSpec"]:
        return [BranchSpec(1, 1), BranchSpec(1, -1), BranchSpec(-1, 1), BranchSpec(-1, -1)]


# Unknown ordering used by the Newton solver and solution vectors
UNKNOWN_LABELS = (
    "Q1_11", "Q1_22", "Q1_12", "Q2_11", "Q2_22", "Q2_12",
    "R1_11", "R1_22", "R1_12", "R2_11", "R2_22", "R2_12",
    "q1_1", "q1_2", "q2_1", "q2_2",
)


@dataclass(frozen=True)
class RiccatiSolution:
    Q1: SymMat2
    Q2: SymMat2
    R1: SymMat2 = field(default_factory=SymMat2.zero)
    R2: SymMat2 = field(default_factory=SymMat2.zero)
    q1: Vec2 = field(default_factory=Vec2.zero)
    q2: Vec2 = field(default_factory=Vec2.zero)
    c1: float = 0.0
    c2: float = 0.0
    branch: Optional[BranchSpec] = None
    residual_norm: float = float("nan")
    solver: str = ""

    def Q(self, i: int) -> np.ndarray:
        return (self.Q1 if i == 1 else self.Q2).matrix

    def R(self, i: int) -> np.ndarray:
        return (self.R1 if i == 1 else self.R2).matrix

    def q(self, i: int) -> np.ndarray:
        return (self.q1 if i == 1 else self.q2).array

    def c(self, i: int) -> float:
        return self.c1 if i == 1 else self.c2

    def value(self, i: int) -> PolyValue:
        if i == 1:
            return PolyValue(self.Q1, self.R1, self.q1)
        return PolyValue(self.Q2, self.R2, self.q2)

    def to_vector(self) -> np.ndarray:
        parts = [m.to_dict() for m in (self.Q1, self.Q2, self.R1, self.R2)]
        parts += [self.q1.to_dict(), self.q2.to_dict()]
        return np.array([x for part in parts for x in part], dtype=float)

    @staticmethod
    def from_vector(vec, **kwargs) -> "RiccatiSolution":
        v = np.asarray(vec, dtype=float)
        if v.shape != (16,):
            raise ValueError(f"expected 16 unknowns, got shape {v.shape}")
        return RiccatiSolution(Q1=SymMat2(*v[0:3]), Q2=SymMat2(*v[3:6]), R1=SymMat2(*v[6:9]),
                               R2=SymMat2(*v[9:12]), q1=Vec2(*v[12:14]), q2=Vec2(*v[14:16]), **kwargs)

    def with_updates(self, **kwargs) -> "RiccatiSolution":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return {
            "Q1": self.Q1.to_dict(),
            "Q2": self.Q2.to_dict(),
            "R1": self.R1.to_dict(),
            "R2": self.R2.to_dict(),
            "q1": self.q1.to_dict(),
            "q2": self.q2.to_dict(),
            "c1": self.c1,
            "c2": self.c2,
            "branch": self.branch.label if self.branch else None,
            "residual_norm": self.residual_norm if np.isfinite(self.residual_norm) else None,
            "solver": self.solver,
        }

    @staticmethod
    def from_dict(data: dict) -> "RiccatiSolution":
        branch = data.get("branch")
        residual_norm = data.get("residual_norm")
        return RiccatiSolution(
            Q1=SymMat2.from_dict(data["Q1"]),
            Q2=SymMat2.from_dict(data["Q2"]),
            R1=SymMat2.from_dict(data.get("R1", [0.0, 0.0, 0.0])),
            R2=SymMat2.from_dict(data.get("R2", [0.0, 0.0, 0.0])),
            q1=Vec2.from_dict(data.get("q1", [0.0, 0.0])),
            q2=Vec2.from_dict(data.get("q2", [0.0, 0.0])),
            c1=float(data.get("c1", 0.0)),
            c2=float(data.get("c2", 0.0)),
            branch=BranchSpec.from_label(branch) if branch else None,
            residual_norm=float(residual_norm) if residual_norm is not None else float("nan"),
            solver=data.get("solver", ""),
        )


@dataclass(frozen=True, eq=False)
class GainSet:
    Qg: np.ndarray
    Rg: np.ndarray
    qg: np.ndarray

    @property
    def mean_matrix(self) -> np.ndarray:
        return self.Qg + self.Rg

    def to_dict(self) -> dict:
        return {"Qg": self.Qg.tolist(), "Rg": self.Rg.tolist(), "qg": self.qg.tolist()}


@dataclass(frozen=True)
class StabilityRecord:
    lambda_min: float
    r_norm: float
    eps_star: float
    margin: float
    holds: bool

    def to_dict(self) -> dict:
        return {"lambda_min": self.lambda_min, "r_norm": self.r_norm, "eps_star": self.eps_star,
                "margin": self.margin, "holds": self.holds}


@dataclass(frozen=True, eq=False)
class MeanDynamicsRecord:
    M: np.ndarray
    eig_real_parts: Tuple[float, float]
    stable: bool

    def to_dict(self) -> dict:
        return {"M": self.M.tolist(), "eig_real_parts": list(self.eig_real_parts), "stable": self.stable}


@dataclass(frozen=True)
class DriftMonotonicity:
    """Constants of (x-y)'(a(mu,x) - a(nu,y)) <= -K1|x-y|^2 + K2 W2(mu,nu)^2 for a chosen eps"""
    eps: float
    K1: float
    K2: float

    @property
    def contracting(self) -> bool:
        return self.K1 > self.K2

    def to_dict(self) -> dict:
        return {"eps": self.eps, "K1": self.K1, "K2": self.K2, "contracting": self.contracting}
