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
Flat-derivative calculus for second-order measure polynomials

    v(mu) = [mu]_Q + m(mu)' R m(mu) + [mu]_q

together with finite-difference oracles and the chain-rule rate of v along
McKean-Vlasov dynamics dX = drift(mu, X) dt + diffusion dW.
"""

import logging
import numpy as np
from dataclasses import dataclass, field
from typing import Callable, Union
from .measures.models import Vec2, SymMat2, GaussianMeasure, EmpiricalMeasure, MeasureHandle
from .measures.core import moments, quad_moment, mixture_moments, moment_gaussian
from .util import as_vec, as_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolyValue:
    Q: SymMat2 = field(default_factory=SymMat2.zero)
    R: SymMat2 = field(default_factory=SymMat2.zero)
    q: Vec2 = field(default_factory=Vec2.zero)

    def value_from_moments(self, mean: np.ndarray, second: np.ndarray) -> float:
        return float(np.trace(self.Q.matrix @ second) + mean @ self.R.matrix @ mean + mean @ self.q.array)

    def to_dict(self) -> dict:
        return {"Q": self.Q.to_dict(), "R": self.R.to_dict(), "q": self.q.to_dict()}

    @staticmethod
    def from_dict(data: dict) -> "PolyValue":
        return PolyValue(Q=SymMat2.from_dict(data["Q"]),
                         R=SymMat2.from_dict(data.get("R", [0.0, 0.0, 0.0])),
                         q=Vec2.from_dict(data.get("q", [0.0, 0.0])))


@dataclass(frozen=True)
class AffineDrift:
    """drift(mu, x) = A x + B m(mu) + b"""
    A: np.ndarray
    B: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "A", as_matrix(self.A))
        object.__setattr__(self, "B", as_matrix(self.B))
        object.__setattr__(self, "b", as_vec(self.b))

    def offset(self, mean: np.ndarray) -> np.ndarray:
        return self.B @ mean + self.b

    def __call__(self, mu: MeasureHandle, x) -> np.ndarray:
        mean = moments(mu)[0]
        pts = np.asarray(x, dtype=float)
        return pts @ self.A.T + self.offset(mean)


Drift = Union[AffineDrift, Callable[[MeasureHandle, np.ndarray], np.ndarray]]


def eval_value(v: PolyValue, mu: MeasureHandle) -> float:
    m = moments(mu)[0]
    return quad_moment(mu, v.Q) + float(m @ v.R.matrix @ m) + float(m @ v.q.array)


def normalization_constant(v: PolyValue, mu: MeasureHandle) -> float:
    m = moments(mu)[0]
    return quad_moment(mu, v.Q) + 2.0 * float(m @ v.R.matrix @ m) + float(m @ v.q.array)


def flat_derivative(v: PolyValue, mu: MeasureHandle, x) -> float:
    """
    dv/dmu(mu, x) = x'Qx + (2 m'R + q')x - C, where C makes the derivative integrate to zero against mu.
    """
    xv = as_vec(x)
    m = moments(mu)[0]
    linear = 2.0 * v.R.matrix @ m + v.q.array
    return float(xv @ v.Q.matrix @ xv + linear @ xv) - normalization_constant(v, mu)


def grad_x_flat(v: PolyValue, mu: MeasureHandle, x) -> Vec2:
    m = moments(mu)[0]
    return Vec2.from_array(2.0 * v.Q.matrix @ as_vec(x) + 2.0 * v.R.matrix @ m + v.q.array)


def hess_x_flat(v: PolyValue) -> SymMat2:
    return SymMat2.from_matrix(2.0 * v.Q.matrix)


def fd_flat_derivative(v: PolyValue, mu: MeasureHandle, x, h: float) -> float:
    """Difference quotient along the mixture (1 - h) mu + h delta_x, realized through moments"""
    if not (0.0 < h <= 0.5):
        raise ValueError(f"step h must lie in (0, 0.5], got {h}")
    m, s = moments(mu)
    m_h, s_h = mixture_moments(mu, x, h)
    return (v.value_from_moments(m_h, s_h) - v.value_from_moments(m, s)) / h


def richardson_flat_derivative(v: PolyValue, mu: MeasureHandle, x, h: float = 1e-5) -> float:
    """Eliminates the O(h) term of fd_flat_derivative using steps h and 2h"""
    return 2.0 * fd_flat_derivative(v, mu, x, h) - fd_flat_derivative(v, mu, x, 2.0 * h)


def _diffusion_matrix(diffusion) -> np.ndarray:
    sigma = as_matrix(diffusion)
    return sigma @ sigma.T


def chain_rule_rhs(v: PolyValue, mu: MeasureHandle, drift: Drift, diffusion) -> float:
    """
    Instantaneous rate d/dt v(mu_t) along dX = drift(mu, X) dt + diffusion dW:

        integral of [ grad_x dv/dmu . drift + 1/2 Tr(hess_x dv/dmu . diffusion diffusion') ] dmu

    Affine drifts are integrated exactly through the moments of mu. Other drifts
    must be vectorized over an (N, 2) particle array and need an empirical mu.
    """
    a = _diffusion_matrix(diffusion)
    ito = float(np.trace(v.Q.matrix @ a))
    m, s = moments(mu)
    qm = v.Q.matrix
    k = 2.0 * v.R.matrix @ m + v.q.array

    if isinstance(drift, AffineDrift):
        c = drift.offset(m)
        transport = (2.0 * float(np.trace(qm @ drift.A @ s)) + 2.0 * float(m @ qm @ c)
                     + float(k @ drift.A @ m) + float(k @ c))
        return transport + ito

    if not isinstance(mu, EmpiricalMeasure):
        raise ValueError("a non-affine drift needs an empirical measure")
    x = mu.particles
    b = np.asarray(drift(mu, x), dtype=float)
    grads = 2.0 * x @ qm + k
    return float(np.einsum("ni,ni->n", grads, b).mean()) + ito


def propagate_gaussian(mu: GaussianMeasure, drift: AffineDrift, diffusion, dt: float) -> GaussianMeasure:
    """Law after one Euler-Maruyama step of an affine drift started from a Gaussian"""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    m = mu.mean.array
    step = np.eye(2) + dt * drift.A
    mean = m + dt * (drift.A @ m + drift.offset(m))
    cov = step @ mu.cov.matrix @ step.T + dt * _diffusion_matrix(diffusion)
    return moment_gaussian(mean, cov + np.outer(mean, mean))
