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
import pytest
import numpy as np
from mvgames.api.measures.models import Vec2, SymMat2, GaussianMeasure
from mvgames.api.measures.core import moments, mean_vec, moment_gaussian
from mvgames.api.games.riccati import invariant_gaussian
from mvgames.api.simulation.models import SimConfig
from mvgames.api.simulation.core import simulate_particles, feedback_from_solution
from mvgames.api.mvcalculus import (PolyValue, AffineDrift, eval_value, flat_derivative, grad_x_flat, hess_x_flat,
                                    fd_flat_derivative, richardson_flat_derivative, chain_rule_rhs,
                                    propagate_gaussian)


@pytest.fixture
def poly():
    return PolyValue(Q=SymMat2(1.5, 0.5, -0.2), R=SymMat2(0.4, -0.3, 0.1), q=Vec2(0.7, -1.0))


@pytest.fixture
def drift():
    return AffineDrift(A=[[-1.0, 0.2], [0.1, -0.5]], B=[[0.3, 0.0], [-0.2, 0.1]], b=[0.05, -0.1])


class TestFlatDerivative:
    """Test the flat derivative of measure polynomials"""

    def test_integrates_to_zero(self, poly, sample_cloud):
        values = [flat_derivative(poly, sample_cloud, x) for x in sample_cloud.particles]
        assert np.mean(values) == pytest.approx(0.0, abs=1e-10)

    def test_matches_richardson_quotient(self, poly, sample_gaussian):
        for x in ([0.0, 0.0], [1.0, -2.0], [-0.5, 3.0]):
            assert richardson_flat_derivative(poly, sample_gaussian, x) == pytest.approx(
                flat_derivative(poly, sample_gaussian, x), abs=1e-6)

    def test_plain_quotient_is_first_order(self, poly, sample_gaussian):
        exact = flat_derivative(poly, sample_gaussian, [1.0, 1.0])
        err_small = abs(fd_flat_derivative(poly, sample_gaussian, [1.0, 1.0], 1e-3) - exact)
        err_large = abs(fd_flat_derivative(poly, sample_gaussian, [1.0, 1.0], 1e-2) - exact)
        assert err_small < err_large

    def test_step_range(self, poly, sample_gaussian):
        for h in (0.0, 0.6):
            with pytest.raises(ValueError):
                fd_flat_derivative(poly, sample_gaussian, [0.0, 0.0], h)

    def test_gradient_matches_difference_in_x(self, poly, sample_gaussian):
        x = np.array([0.4, -1.3])
        step = 1e-6
        numeric = [(flat_derivative(poly, sample_gaussian, x + step * e)
                    - flat_derivative(poly, sample_gaussian, x - step * e)) / (2 * step) for e in np.eye(2)]
        assert np.allclose(grad_x_flat(poly, sample_gaussian, x).array, numeric, atol=1e-6)

    def test_hessian_is_twice_q(self, poly):
        assert np.allclose(hess_x_flat(poly).matrix, 2.0 * poly.Q.matrix)

    def test_eval_value_on_dirac_gaussian(self, poly):
        x = np.array([1.0, 2.0])
        expected = x @ poly.Q.matrix @ x + x @ poly.R.matrix @ x + x @ poly.q.array
        assert eval_value(poly, GaussianMeasure.point(x)) == pytest.approx(expected)


class TestChainRule:
    """Test the rate of change of v along McKean-Vlasov dynamics"""

    def test_affine_matches_pointwise_integral(self, poly, drift, sample_cloud):
        sigma = np.array([[1.0, 0.0], [0.3, 0.8]])
        analytic = chain_rule_rhs(poly, sample_cloud, drift, sigma)
        pointwise = chain_rule_rhs(poly, sample_cloud, lambda mu, x: drift(mu, x), sigma)
        assert analytic == pytest.approx(pointwise, rel=1e-10, abs=1e-10)

    def test_matches_gaussian_euler_step(self, poly, drift, sample_gaussian):
        sigma = np.eye(2)
        dt = 1e-6
        stepped = propagate_gaussian(sample_gaussian, drift, sigma, dt)
        quotient = (eval_value(poly, stepped) - eval_value(poly, sample_gaussian)) / dt
        assert quotient == pytest.approx(chain_rule_rhs(poly, sample_gaussian, drift, sigma), abs=1e-4)

    def test_zero_drift_is_pure_ito_term(self, poly, sample_gaussian):
        zero = AffineDrift(A=np.zeros((2, 2)))
        assert chain_rule_rhs(poly, sample_gaussian, zero, np.eye(2)) == pytest.approx(poly.Q.trace)

    def test_callable_drift_needs_empirical_measure(self, poly, drift, sample_gaussian):
        with pytest.raises(ValueError):
            chain_rule_rhs(poly, sample_gaussian, lambda mu, x: drift(mu, x), np.eye(2))


class TestPropagateGaussian:
    """Test the moment-level Euler push-forward"""

    def test_mean_and_covariance(self, drift, sample_gaussian):
        dt = 0.01
        out = propagate_gaussian(sample_gaussian, drift, np.eye(2), dt)
        m = sample_gaussian.mean.array
        step = np.eye(2) + dt * drift.A
        assert np.allclose(out.mean.array, m + dt * (drift.A @ m + drift.B @ m + drift.b))
        assert np.allclose(out.cov.matrix, step @ sample_gaussian.cov.matrix @ step.T + dt * np.eye(2))

    def test_rejects_non_positive_dt(self, drift, sample_gaussian):
        with pytest.raises(ValueError):
            propagate_gaussian(sample_gaussian, drift, np.eye(2), 0.0)


class TestChainRuleAlongFlow:
    """Test the chain rule against the closed-loop flow of an equilibrium feedback law"""

    @pytest.fixture
    def convex_poly(self):
        return PolyValue(Q=SymMat2(1.5, 0.5, -0.2), R=SymMat2(0.4, 0.3, 0.1), q=Vec2(0.7, -1.0))

    @pytest.fixture
    def flow(self, ex1_solution, ex1_params):
        law = feedback_from_solution(ex1_solution, ex1_params.r1, ex1_params.r2)
        cfg = SimConfig(n_particles=2048, dt=0.01, t_final=1.0, seed=11,
                        init=GaussianMeasure(Vec2(1.0, -1.0), SymMat2.identity()))
        return law, simulate_particles(law, cfg, ex1_params).final_cloud

    def test_affine_drift_matches_feedback_control(self, poly, flow):
        law, cloud = flow
        pointwise = chain_rule_rhs(poly, cloud, lambda mu, x: law.control(mean_vec(mu).array, x), np.eye(2))
        analytic = chain_rule_rhs(poly, cloud, law.as_affine_drift(), np.eye(2))
        assert analytic == pytest.approx(pointwise, rel=1e-10, abs=1e-10)

    def test_remainder_is_first_order_in_dt(self, convex_poly, flow):
        law, cloud = flow
        drift = law.as_affine_drift()
        start = moment_gaussian(*moments(cloud))
        rate = chain_rule_rhs(convex_poly, cloud, drift, np.eye(2))
        remainders = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            stepped = propagate_gaussian(start, drift, np.eye(2), dt)
            quotient = (eval_value(convex_poly, stepped) - eval_value(convex_poly, start)) / dt
            remainders.append(abs(quotient - rate))
        assert remainders[0] > remainders[1] > remainders[2] > 0.0
        assert remainders[0] / remainders[1] == pytest.approx(2.0, rel=1e-3)
        assert remainders[1] / remainders[2] == pytest.approx(2.0, rel=1e-3)

    @pytest.mark.parametrize("solution, params", [("ex1_solution", "ex1_params"),
                                                  ("diagonal_solution", "diagonal_params"),
                                                  ("reference_solution", "reference_params")])
    def test_rate_vanishes_at_invariant_measure(self, poly, request, solution, params):
        sol, p = request.getfixturevalue(solution), request.getfixturevalue(params)
        invariant = invariant_gaussian(sol, p.r1, p.r2)
        drift = feedback_from_solution(sol, p.r1, p.r2).as_affine_drift()
        assert chain_rule_rhs(poly, invariant, drift, np.eye(2)) == pytest.approx(0.0, abs=1e-10)
