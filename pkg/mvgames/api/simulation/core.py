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
Interacting-particle simulation of the closed-loop McKean-Vlasov dynamics

    dX = alpha(mu, X) dt + dW

with the law mu replaced by the empirical measure of N particles, and the
Monte Carlo estimators built on the resulting traces.

Noise for step n is drawn from a Philox counter-based generator keyed by the
seed with counter (0, 0, n, 0), in particle-index order; the initial cloud
uses counter (0, 0, 0, 1). Runs with equal seed, grid and particle count
therefore share their noise, which the coupled value estimator relies on.
"""

import math
import logging
import importlib
import numpy as np
from typing import List, Optional, Sequence, Tuple
from dataclasses import replace
from scipy.linalg import expm
from scipy.integrate import trapezoid
from .models import (FeedbackLaw, SimConfig, SimTrace, DeviationSpec, ErgodicEstimate, DeviationOutcome,
                     DIVERGENCE_BOUND)
from .backends import PARTICLE_BACKENDS
from .backends.base import ParticleBackend
from ..games.common import Diverged
from ..games.models import CostParams, RiccatiSolution
from ..games.hamiltonian import expected_running_cost
from ..games.riccati import gain_matrices
from ..measures.models import Vec2, SymMat2, GaussianMeasure, EmpiricalMeasure, MeasureHandle
from ..measures.core import sqrtm_psd
from ..util import as_vec

logger = logging.getLogger(__name__)

DEVIATION_GRID = (0.5, 0.8, 1.2, 1.5)
EXTREME_SCALINGS = (0.5, 1.5)


def create_particle_backend(backend_name: str, **kwargs) -> ParticleBackend:
    backend_class = PARTICLE_BACKENDS[backend_name]
    logger.debug(f"Creating particle backend type '{backend_name}' with implementation '{backend_class}'")
    module_name, class_name = backend_class.rsplit(".", 1)
    return getattr(importlib.import_module(module_name), class_name)(**kwargs)


def step_generator(seed: int, step: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, step, 0]))


def init_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, 1]))


def sample_initial_cloud(init: MeasureHandle, n: int, seed: int) -> np.ndarray:
    """Coordinate-major (2, n) initial states drawn from init"""
    if isinstance(init, GaussianMeasure):
        z = init_generator(seed).standard_normal((2, n))
        return sqrtm_psd(init.cov) @ z + init.mean.array[:, None]
    particles = init.particles
    if particles.shape[0] == n:
        return np.array(particles.T)
    if particles.shape[0] == 1:
        return np.repeat(particles.T, n, axis=1)
    idx = init_generator(seed).integers(0, particles.shape[0], size=n)
    return np.array(particles[idx].T)


def _tail_gaussian(times: np.ndarray, mean_path: np.ndarray, second_path: np.ndarray, burn_in: float) -> GaussianMeasure:
    start = int(np.searchsorted(times, burn_in - 1e-9 * max(times[1] - times[0], 1.0)))
    m = mean_path[start:].mean(axis=0)
    s = second_path[start:].mean(axis=0)
    cov = np.array([[s[0], s[2]], [s[2], s[1]]]) - np.outer(m, m)
    return GaussianMeasure(Vec2.from_array(m), SymMat2.from_matrix(cov))


def running_cost_path(trace: SimTrace, params: CostParams) -> np.ndarray:
    """Empirical mean running cost of each player at every grid time, shape (n + 1, 2)"""
    seconds = trace.second_moment_matrices()
    return np.column_stack([expected_running_cost(i, params, trace.mean_path, seconds,
                                                  trace.control_second_path[:, i - 1]) for i in (1, 2)])


def cumulative_cost(trace: SimTrace, params: CostParams) -> np.ndarray:
    """Left-endpoint rectangle integral of the running costs on the Euler grid"""
    rates = running_cost_path(trace, params)
    accum = np.zeros_like(rates)
    accum[1:] = np.cumsum(rates[:-1] * trace.dt, axis=0)
    return accum


def simulate_particles(law: FeedbackLaw, cfg: SimConfig, params: Optional[CostParams] = None,
                       backend: Optional[ParticleBackend] = None) -> SimTrace:
    """
    Euler-Maruyama for the N-particle system. Each step reduces the empirical moments first,
    evaluates the feedback at the empirical mean, then updates every particle.
    """
    n, steps, dt = cfg.n_particles, cfg.n_steps, cfg.dt
    times = dt * np.arange(steps + 1)
    owns_backend = backend is None
    if owns_backend:
        backend = create_particle_backend(cfg.backend, workers=cfg.workers)

    x = sample_initial_cloud(cfg.init, n, cfg.seed)
    mean_path = np.empty((steps + 1, 2))
    second_path = np.empty((steps + 1, 3))
    control_mean = np.empty((steps + 1, 2))
    control_second = np.empty((steps + 1, 2))
    g, l, k = law.G, law.L, law.k
    a = np.empty_like(x)

    try:
        for step in range(steps + 1):
            x0, x1 = x[0], x[1]
            m = np.array([x0.sum() / n, x1.sum() / n])
            mean_path[step] = m
            second_path[step] = ((x0 * x0).sum() / n, (x1 * x1).sum() / n, (x0 * x1).sum() / n)
            c = l @ m + k
            a[0] = -(g[0, 0] * x0 + g[0, 1] * x1 + c[0])
            a[1] = -(g[1, 0] * x0 + g[1, 1] * x1 + c[1])
            control_mean[step] = (a[0].sum() / n, a[1].sum() / n)
            control_second[step] = ((a[0] * a[0]).sum() / n, (a[1] * a[1]).sum() / n)
            if step == steps:
                break
            noise = step_generator(cfg.seed, step).standard_normal((2, n))
            backend.advance(x, a, noise, dt)
            max_abs = float(np.max(np.abs(x)))
            if not math.isfinite(max_abs) or max_abs > DIVERGENCE_BOUND:
                logger.warning(f"Particle system diverged at step {step + 1} (t={times[step + 1]:.4f})")
                raise Diverged(step + 1, float(times[step + 1]), max_abs)
    finally:
        if owns_backend:
            backend.close()

    trace = SimTrace(times=times, mean_path=mean_path, second_moment_path=second_path,
                     control_mean_path=control_mean, control_second_path=control_second, cost_accum=None,
                     final_cloud=EmpiricalMeasure(x.T), tail_cloud_stats=_tail_gaussian(times, mean_path, second_path,
                                                                                         cfg.burn_in),
                     burn_in=cfg.burn_in, seed=cfg.seed)
    if params is not None:
        trace = replace(trace, cost_accum=cumulative_cost(trace, params))
    logger.debug(f"Simulated {n} particles for {steps} steps (seed {cfg.seed})")
    return trace


def feedback_from_solution(sol: RiccatiSolution, r1: float, r2: float) -> FeedbackLaw:
    gains = gain_matrices(sol, r1, r2)
    return FeedbackLaw(G=gains.Qg, L=gains.Rg, k=gains.qg)


def _accumulated(trace: SimTrace, params: CostParams) -> np.ndarray:
    return trace.cost_accum if trace.cost_accum is not None else cumulative_cost(trace, params)


def ergodic_cost(trace: SimTrace, params: CostParams) -> Tuple[float, float]:
    accum = _accumulated(trace, params)
    start = trace.tail_start
    span = trace.times[-1] - trace.times[start]
    if span <= 0.0:
        raise ValueError(f"empty tail window: burn_in={trace.burn_in} leaves no time step before t={trace.times[-1]}")
    return tuple(float((accum[-1, i] - accum[start, i]) / span) for i in (0, 1))


def _batch_standard_error(rates: np.ndarray, n_batches: int) -> np.ndarray:
    usable = (rates.shape[0] // n_batches) * n_batches
    if usable < 2 * n_batches:
        logger.warning(f"Tail window of {rates.shape[0]} steps is too short for {n_batches} batches; "
                       f"no standard error reported")
        return np.full(rates.shape[1], np.nan)
    batches = rates[rates.shape[0] - usable:].reshape(n_batches, -1, rates.shape[1]).mean(axis=1)
    return batches.std(axis=0, ddof=1) / math.sqrt(n_batches)


def ergodic_cost_estimate(traces: Sequence[SimTrace], params: CostParams, n_batches: int = 20) -> ErgodicEstimate:
    """Average of per-trace ergodic costs; standard error from batch means, combined over independent seeds"""
    if not traces:
        raise ValueError("at least one trace is needed")
    estimates, variances = [], []
    for trace in traces:
        estimates.append(ergodic_cost(trace, params))
        rates = running_cost_path(trace, params)[trace.tail_start:-1]
        variances.append(_batch_standard_error(rates, n_batches) ** 2)
    k = len(traces)
    c_hat = np.mean(np.array(estimates), axis=0)
    se = np.sqrt(np.sum(np.array(variances), axis=0)) / k
    return ErgodicEstimate(c_hat=tuple(float(c) for c in c_hat), se=tuple(float(s) for s in se), n_traces=k)


def finite_horizon_value(trace: SimTrace, params: CostParams, c1: float, c2: float) -> Tuple[float, float]:
    """Trapezoidal integral of (empirical mean cost - c_i) over the whole trace"""
    rates = running_cost_path(trace, params) - np.array([c1, c2])
    return tuple(float(trapezoid(rates[:, i], trace.times)) for i in (0, 1))


def coupled_value(trace: SimTrace, reference: SimTrace, params: CostParams) -> Tuple[float, float]:
    """
    Finite-horizon value with the ergodic constant replaced by the cost of a reference run
    started from the invariant measure on the same grid and noise.
    """
    if trace.times.shape != reference.times.shape or trace.seed != reference.seed:
        raise ValueError("coupled runs must share seed and time grid")
    diff = running_cost_path(trace, params) - running_cost_path(reference, params)
    return tuple(float(trapezoid(diff[:, i], trace.times)) for i in (0, 1))


def coupled_value_estimate(pairs: Sequence[Tuple[SimTrace, SimTrace]], params: CostParams) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of coupled_value over independent seeds"""
    values = np.array([coupled_value(t, ref, params) for t, ref in pairs])
    if len(values) < 2:
        return values.mean(axis=0), np.full(2, np.nan)
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(len(values))


def mean_path_analytic(sol: RiccatiSolution, r1: float, r2: float, m0, times) -> np.ndarray:
    """Exact solution of dm/dt = -(Qg + Rg) m - qg, shape (len(times), 2)"""
    gains = gain_matrices(sol, r1, r2)
    aug = np.zeros((3, 3))
    aug[:2, :2] = -gains.mean_matrix
    aug[:2, 2] = -gains.qg
    start = np.append(as_vec(m0), 1.0)
    return np.array([(expm(aug * t) @ start)[:2] for t in np.asarray(times, dtype=float)])


def average_mean_path(traces: Sequence[SimTrace]) -> np.ndarray:
    return np.mean(np.array([t.mean_path for t in traces]), axis=0)


def fit_decay_rate(times, values) -> float:
    """Rate lambda of a log-linear least-squares fit |values| ~ exp(-lambda t)"""
    t = np.asarray(times, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    keep = v > 0
    slope = np.polyfit(t[keep], np.log(v[keep]), 1)[0]
    return float(-slope)


def deviation_trace(sol: RiccatiSolution, r1: float, r2: float, dev: DeviationSpec, cfg: SimConfig,
                    params: Optional[CostParams] = None) -> SimTrace:
    law = feedback_from_solution(sol, r1, r2).with_row(dev.player, dev.law)
    return simulate_particles(law, cfg, params)


def scaled_deviation(sol: RiccatiSolution, r1: float, r2: float, player: int, factor: float) -> DeviationSpec:
    """The deviating player multiplies its own state-gain row by factor"""
    law = feedback_from_solution(sol, r1, r2).scale_state_gain(player, factor)
    return DeviationSpec(player=player, law=law)


def nash_deviation_grid(sol: RiccatiSolution, params: CostParams, cfg: SimConfig, seeds: Sequence[int],
                        scalings: Sequence[float] = DEVIATION_GRID,
                        players: Sequence[int] = (1, 2)) -> List[DeviationOutcome]:
    outcomes = []
    for player in players:
        c = sol.c(player)
        for factor in scalings:
            dev = scaled_deviation(sol, params.r1, params.r2, player, factor)
            try:
                traces = [deviation_trace(sol, params.r1, params.r2, dev, cfg.with_updates(seed=s), params)
                          for s in seeds]
            except Diverged as e:
                logger.warning(f"Deviation x{factor} of player {player} diverged: {e}")
                outcomes.append(DeviationOutcome(player, factor, math.inf, math.inf, c, True))
                continue
            est = ergodic_cost_estimate(traces, params)
            outcomes.append(DeviationOutcome(player, factor, est.c_hat[player - 1], est.se[player - 1], c, False))
            logger.info(f"Deviation x{factor} of player {player}: cost {est.c_hat[player - 1]:.5f} "
                        f"(se {est.se[player - 1]:.2e}) vs c={c:.5f}")
    return outcomes


def baseline_threshold(K: float) -> float:
    """Gains C above (2K + 1) / 2 stabilize a drift with Lipschitz constant K"""
    return (2.0 * K + 1.0) / 2.0


def stabilizing_baseline(C: float, cfg: SimConfig, params: Optional[CostParams] = None) -> SimTrace:
    if C <= 0:
        raise ValueError(f"baseline gain C must be positive, got {C}")
    return simulate_particles(FeedbackLaw(G=C * np.eye(2)), cfg, params)
