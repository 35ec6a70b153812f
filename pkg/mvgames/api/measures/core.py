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
Moment functionals and Wasserstein-2 utilities for measures on the plane.

Every functional in this package reduces a measure to its first two moments,
so Gaussian and empirical measures share one code path once `moments` has
been taken.
"""

import math
import logging
import numpy as np
from typing import Tuple
from .models import Vec2, SymMat2, GaussianMeasure, EmpiricalMeasure, MeasureHandle, PSD_CLAMP
from ..util import as_vec, as_matrix

logger = logging.getLogger(__name__)


def moments(mu: MeasureHandle) -> Tuple[np.ndarray, np.ndarray]:
    """Return (mean, second moment matrix) as numpy arrays"""
    if isinstance(mu, GaussianMeasure):
        m = mu.mean.array
        return m, mu.cov.matrix + np.outer(m, m)
    if isinstance(mu, EmpiricalMeasure):
        x = mu.particles
        n = x.shape[0]
        return x.mean(axis=0), (x.T @ x) / n
    raise TypeError(f"unsupported measure type {type(mu).__name__}")


def mean_vec(mu: MeasureHandle) -> Vec2:
    return Vec2.from_array(moments(mu)[0])


def second_moment(mu: MeasureHandle) -> SymMat2:
    return SymMat2.from_matrix(moments(mu)[1])


def quad_moment(mu: MeasureHandle, Q) -> float:
    """[mu]_Q, the integral of x'Qx against mu"""
    q = as_matrix(Q)
    if isinstance(mu, GaussianMeasure):
        m = mu.mean.array
        return float(np.trace(q @ mu.cov.matrix) + m @ q @ m)
    x = mu.particles
    return float(np.einsum("ni,ij,nj->n", x, q, x).mean())


def lin_moment(mu: MeasureHandle, q) -> float:
    """[mu]_q = m(mu)'q"""
    return float(moments(mu)[0] @ as_vec(q))


def symmetrize(a) -> SymMat2:
    arr = np.asarray(a.matrix if hasattr(a, "matrix") else a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return SymMat2.from_matrix(0.5 * (arr + arr.T))


def sqrtm_psd(a) -> np.ndarray:
    """
    Principal square root of a symmetric positive semidefinite 2x2 matrix.

    Uses sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A)).
    """
    arr = as_matrix(a)
    det = max(float(np.linalg.det(arr)), 0.0)
    s = math.sqrt(det)
    t = float(np.trace(arr)) + 2.0 * s
    if t <= PSD_CLAMP:
        return np.zeros((2, 2))
    return (arr + s * np.eye(2)) / math.sqrt(t)


def w2_gaussian(mu: GaussianMeasure, nu: GaussianMeasure) -> float:
    """
    Closed-form 2-Wasserstein distance between two Gaussians.

    For 2x2 PSD matrices tr((S2^1/2 S1 S2^1/2)^1/2) = sqrt(tr(S1 S2) + 2 sqrt(det S1 det S2)).
    """
    dm = mu.mean.array - nu.mean.array
    s1 = mu.cov.matrix
    s2 = nu.cov.matrix
    det_prod = max(mu.cov.det, 0.0) * max(nu.cov.det, 0.0)
    cross = math.sqrt(max(float(np.trace(s1 @ s2)) + 2.0 * math.sqrt(det_prod), 0.0))
    d2 = float(dm @ dm) + mu.cov.trace + nu.cov.trace - 2.0 * cross
    return math.sqrt(max(d2, 0.0))


def gaussian_from_empirical(mu: EmpiricalMeasure, tail_fraction: float = 1.0) -> GaussianMeasure:
    """
    Moment-matched Gaussian from the last `tail_fraction` of the ordered particle list,
    with the unbiased sample covariance.
    """
    if not (0.0 < tail_fraction <= 1.0):
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    n_total = mu.size
    n = int(math.ceil(tail_fraction * n_total))
    if n < 2:
        raise ValueError(f"covariance needs at least 2 particles, got {n}")
    x = mu.particles[n_total - n:]
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (n - 1)
    return GaussianMeasure(Vec2.from_array(mean), SymMat2.from_matrix(cov))


def mixture_moments(mu: MeasureHandle, x, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Moments of (1 - h) mu + h delta_x, exact at the moment level"""
    m, s = moments(mu)
    xv = as_vec(x)
    return (1.0 - h) * m + h * xv, (1.0 - h) * s + h * np.outer(xv, xv)


def moment_gaussian(mean, second) -> GaussianMeasure:
    """Gaussian with prescribed mean and second moment matrix"""
    m = as_vec(mean)
    cov = as_matrix(second) - np.outer(m, m)
    return GaussianMeasure(Vec2.from_array(m), SymMat2.from_matrix(cov))


def affine_product_moment(mean, second, u, alpha: float, w, beta: float) -> float:
    """Integral of (u'x + alpha)(w'x + beta) against a measure with the given moments"""
    m = as_vec(mean)
    s = as_matrix(second)
    uv = as_vec(u)
    wv = as_vec(w)
    return float(uv @ s @ wv + alpha * (wv @ m) + beta * (uv @ m) + alpha * beta)


def random_gaussian(rng: np.random.Generator, mean_bound: float = 2.0,
                    eig_range: Tuple[float, float] = (0.1, 3.0)) -> GaussianMeasure:
    """Gaussian with mean entries uniform in [-mean_bound, mean_bound] and covariance eigenvalues in eig_range"""
    mean = rng.uniform(-mean_bound, mean_bound, size=2)
    eigs = rng.uniform(eig_range[0], eig_range[1], size=2)
    angle = rng.uniform(0.0, math.pi)
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    return GaussianMeasure(Vec2.from_array(mean), SymMat2.from_matrix((rot * eigs) @ rot.T))
