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
Running costs, Hamiltonians and the Master-equation residual for the two
linear-quadratic models (drift b(mu, x, a) = a, unit diffusion).

Player i pays

    EX1_GAMMA:  gamma [mu]_I + (1 - gamma)|x|^2 + r_i a_i^2
    EX2_ETA:    |x|^2 + ([mu]_{eta_i})^2 + r_i a_i^2
"""

import logging
import numpy as np
from typing import Tuple
from .models import CostParams, ModelTag
from ..measures.models import MeasureHandle, EmpiricalMeasure
from ..measures.core import moments, affine_product_moment
from ..mvcalculus import PolyValue
from ..util import as_vec, unit, other

logger = logging.getLogger(__name__)


def state_cost(i: int, p: CostParams, mu: MeasureHandle, x) -> float:
    """The control-free part F_i(mu, x) of the running cost"""
    xv = as_vec(x)
    m, s = moments(mu)
    if p.model is ModelTag.EX1_GAMMA:
        return p.gamma * float(np.trace(s)) + (1.0 - p.gamma) * float(xv @ xv)
    return float(xv @ xv) + float(m @ p.eta(i)) ** 2


def running_cost(i: int, p: CostParams, mu: MeasureHandle, x, a_i: float) -> float:
    return state_cost(i, p, mu, x) + p.r(i) * a_i * a_i


def _scalar_or_array(value):
    return float(value) if np.ndim(value) == 0 else value


def expected_state_cost(i: int, p: CostParams, mean, second):
    """
    Integral of F_i(mu, .) against mu from its moments. Accepts a single (mean, second moment)
    pair or stacked paths of shape (n, 2) and (n, 2, 2).
    """
    m = np.asarray(mean, dtype=float)
    tr_s = np.trace(np.asarray(second, dtype=float), axis1=-2, axis2=-1)
    if p.model is ModelTag.EX1_GAMMA:
        return _scalar_or_array(p.gamma * tr_s + (1.0 - p.gamma) * tr_s)
    return _scalar_or_array(tr_s + (m @ p.eta(i)) ** 2)


def expected_running_cost(i: int, p: CostParams, mean, second, control_second):
    """Integral of l_i against mu when E[a_i^2] = control_second"""
    return _scalar_or_array(expected_state_cost(i, p, mean, second) + p.r(i) * np.asarray(control_second))


def argmin_control(i: int, p: CostParams, pval: float) -> float:
    return -pval / (2.0 * p.r(i))


def hamiltonian_reduced(i: int, p: CostParams, mu: MeasureHandle, x, pval: float) -> float:
    """inf over a of {pval a + l_i(mu, x, a)} = F_i(mu, x) - pval^2 / (4 r_i)"""
    return state_cost(i, p, mu, x) - pval * pval / (4.0 * p.r(i))


def full_hamiltonian(i: int, p: CostParams, mu: MeasureHandle, x, pvec, Qmat, a) -> float:
    av = as_vec(a)
    qm = np.asarray(Qmat.matrix if hasattr(Qmat, "matrix") else Qmat, dtype=float)
    return float(as_vec(pvec) @ av) + 0.5 * float(np.trace(qm)) + running_cost(i, p, mu, x, av[i - 1])


def _gradient_parts(v: PolyValue, mean: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """grad_x dv/dmu(mu, x) = A x + b"""
    return 2.0 * v.Q.matrix, 2.0 * v.R.matrix @ mean + v.q.array


def master_integrand(i: int, v1: PolyValue, v2: PolyValue, p: CostParams, mu: MeasureHandle, x) -> np.ndarray:
    """
    Pointwise integrand of player i's Master equation, vectorized over rows of x:

        F_i - (e_i'g_i)^2 / (4 r_i) + Tr(Q_i) - (e_j'g_i)(e_j'g_j) / (2 r_j)

    where g_k = 2 Q_k x + 2 R_k m + q_k and the opponent j plays its pointwise argmin.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    m, s = moments(mu)
    j = other(i)
    vs = {1: v1, 2: v2}
    grads = {}
    for k in (1, 2):
        a_k, b_k = _gradient_parts(vs[k], m)
        grads[k] = pts @ a_k.T + b_k
    if p.model is ModelTag.EX1_GAMMA:
        f = p.gamma * float(np.trace(s)) + (1.0 - p.gamma) * np.einsum("ni,ni->n", pts, pts)
    else:
        f = np.einsum("ni,ni->n", pts, pts) + float(m @ p.eta(i)) ** 2
    own = grads[i][:, i - 1]
    cross = grads[i][:, j - 1] * grads[j][:, j - 1]
    return f - own * own / (4.0 * p.r(i)) + float(np.trace(vs[i].Q.matrix)) - cross / (2.0 * p.r(j))


def _master_lhs_moments(i: int, v1: PolyValue, v2: PolyValue, p: CostParams, mean, second) -> float:
    j = other(i)
    vs = {1: v1, 2: v2}
    ei, ej = unit(i), unit(j)
    parts = {k: _gradient_parts(vs[k], mean) for k in (1, 2)}

    def linear_form(k: int, e: np.ndarray):
        a_k, b_k = parts[k]
        return a_k.T @ e, float(e @ b_k)

    ui, ai = linear_form(i, ei)
    own = affine_product_moment(mean, second, ui, ai, ui, ai)
    uij, aij = linear_form(i, ej)
    ujj, ajj = linear_form(j, ej)
    cross = affine_product_moment(mean, second, uij, aij, ujj, ajj)
    return (expected_state_cost(i, p, mean, second) - own / (4.0 * p.r(i))
            + float(np.trace(vs[i].Q.matrix)) - cross / (2.0 * p.r(j)))


def master_residual(v1: PolyValue, v2: PolyValue, c1: float, c2: float, p: CostParams,
                    mu: MeasureHandle) -> Tuple[float, float]:
    """
    (LHS_1 - c1, LHS_2 - c2) of the coupled Master equations at mu. Empirical measures are
    integrated by particle average, Gaussians analytically through their moments.
    """
    cs = (c1, c2)
    if isinstance(mu, EmpiricalMeasure):
        return tuple(float(master_integrand(i, v1, v2, p, mu, mu.particles).mean()) - cs[i - 1]
                     for i in (1, 2))
    mean, second = moments(mu)
    return tuple(_master_lhs_moments(i, v1, v2, p, mean, second) - cs[i - 1] for i in (1, 2))
