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
import pytest
import numpy as np
from mvgames.api.measures.models import (Vec2, SymMat2, GaussianMeasure, EmpiricalMeasure, MeasureKind,
                                         measure_from_dict)
from mvgames.api.measures.core import (moments, mean_vec, second_moment, quad_moment, lin_moment, symmetrize,
                                       sqrtm_psd, w2_gaussian, gaussian_from_empirical, mixture_moments,
                                       moment_gaussian, affine_product_moment, random_gaussian)


class TestVecAndMatrix:
    """Test the small value types"""

    def test_vec2_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Vec2(1.0, math.nan)

    def test_vec2_from_array_shape(self):
        with pytest.raises(ValueError):
            Vec2.from_array([1.0, 2.0, 3.0])

    def test_symmat2_eigenvalues_match_numpy(self):
        s = SymMat2(2.0, -1.0, 0.7)
        assert np.allclose(s.eigenvalues(), np.linalg.eigvalsh(s.matrix))

    def test_symmat2_from_dict_forms(self):
        expected = SymMat2(1.0, 2.0, 0.5)
        assert SymMat2.from_dict([1.0, 2.0, 0.5]) == expected
        assert SymMat2.from_dict([[1.0, 0.5], [0.5, 2.0]]) == expected
        assert SymMat2.from_dict({"s11": 1.0, "s22": 2.0, "s12": 0.5}) == expected

    def test_symmat2_from_dict_bad_shape(self):
        with pytest.raises(ValueError):
            SymMat2.from_dict([1.0, 2.0])

    def test_symmetrize_averages_off_diagonal(self):
        s = symmetrize([[1.0, 2.0], [0.0, 3.0]])
        assert s == SymMat2(1.0, 3.0, 1.0)


class TestMeasures:
    """Test Gaussian and empirical measure handles"""

    def test_gaussian_rejects_indefinite_covariance(self):
        with pytest.raises(ValueError):
            GaussianMeasure(Vec2.zero(), SymMat2(1.0, 1.0, 2.0))

    def test_gaussian_clamps_round_off(self):
        mu = GaussianMeasure(Vec2.zero(), SymMat2(1.0, 1.0, 1.0 + 1e-13))
        assert mu.cov.eigenvalues()[0] >= -1e-15

    def test_empirical_particles_read_only(self, sample_cloud):
        with pytest.raises(ValueError):
            sample_cloud.particles[0, 0] = 1.0

    def test_empirical_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            EmpiricalMeasure(np.zeros((4, 3)))

    def test_dirac(self):
        mu = EmpiricalMeasure.dirac([1.0, -2.0])
        assert mu.size == 1
        assert mu.kind is MeasureKind.EMPIRICAL

    def test_measure_from_dict(self, sample_gaussian, sample_cloud):
        assert measure_from_dict(sample_gaussian.to_dict()) == sample_gaussian
        restored = measure_from_dict(sample_cloud.to_dict())
        assert np.array_equal(restored.particles, sample_cloud.particles)


class TestMoments:
    """Test moment functionals"""

    def test_gaussian_moments(self, sample_gaussian):
        m, s = moments(sample_gaussian)
        assert np.allclose(m, [0.3, -0.8])
        assert np.allclose(s, sample_gaussian.cov.matrix + np.outer(m, m))

    def test_empirical_moments(self, sample_cloud):
        x = sample_cloud.particles
        m, s = moments(sample_cloud)
        assert np.allclose(m, x.mean(axis=0))
        assert np.allclose(s, x.T @ x / x.shape[0])
        assert mean_vec(sample_cloud) == Vec2.from_array(m)
        assert np.allclose(second_moment(sample_cloud).matrix, s)

    def test_quad_moment_identity_is_trace_of_second_moment(self, sample_gaussian, sample_cloud):
        for mu in (sample_gaussian, sample_cloud):
            assert quad_moment(mu, np.eye(2)) == pytest.approx(np.trace(moments(mu)[1]))

    def test_quad_moment_gaussian_matches_moment_formula(self, sample_gaussian):
        q = np.array([[2.0, 0.3], [0.3, -1.0]])
        m, s = moments(sample_gaussian)
        assert quad_moment(sample_gaussian, q) == pytest.approx(np.trace(q @ s))

    def test_lin_moment(self, sample_gaussian):
        assert lin_moment(sample_gaussian, [2.0, 1.0]) == pytest.approx(2.0 * 0.3 - 0.8)

    def test_affine_product_moment(self, sample_cloud):
        x = sample_cloud.particles
        u, w = np.array([1.0, -2.0]), np.array([0.5, 0.25])
        direct = ((x @ u + 0.3) * (x @ w - 1.1)).mean()
        m, s = moments(sample_cloud)
        assert affine_product_moment(m, s, u, 0.3, w, -1.1) == pytest.approx(direct)

    def test_mixture_moments(self, sample_gaussian):
        m, s = moments(sample_gaussian)
        x = np.array([2.0, 1.0])
        m_h, s_h = mixture_moments(sample_gaussian, x, 0.25)
        assert np.allclose(m_h, 0.75 * m + 0.25 * x)
        assert np.allclose(s_h, 0.75 * s + 0.25 * np.outer(x, x))

    def test_moment_gaussian_inverts_moments(self, sample_gaussian):
        m, s = moments(sample_gaussian)
        mu = moment_gaussian(m, s)
        assert np.allclose(mu.cov.matrix, sample_gaussian.cov.matrix)


class TestWassersteinAndFits:
    """Test square roots, W2 and Gaussian fits"""

    def test_sqrtm_psd(self):
        a = np.array([[2.0, 0.6], [0.6, 1.0]])
        root = sqrtm_psd(a)
        assert np.allclose(root @ root, a)
        assert np.allclose(root, root.T)

    def test_sqrtm_psd_zero(self):
        assert np.array_equal(sqrtm_psd(np.zeros((2, 2))), np.zeros((2, 2)))

    def test_w2_same_measure_is_zero(self, sample_gaussian):
        assert w2_gaussian(sample_gaussian, sample_gaussian) == pytest.approx(0.0, abs=1e-7)

    def test_w2_commuting_covariances(self):
        mu = GaussianMeasure(Vec2(1.0, 0.0), SymMat2.diag(4.0, 1.0))
        nu = GaussianMeasure(Vec2(0.0, 2.0), SymMat2.diag(1.0, 9.0))
        expected = math.sqrt(1.0 + 4.0 + (2.0 - 1.0) ** 2 + (1.0 - 3.0) ** 2)
        assert w2_gaussian(mu, nu) == pytest.approx(expected)

    def test_w2_general_against_scipy_formula(self, rng):
        from scipy.linalg import sqrtm
        for _ in range(5):
            mu, nu = random_gaussian(rng), random_gaussian(rng)
            s1, s2 = mu.cov.matrix, nu.cov.matrix
            r2 = np.real(sqrtm(s2))
            cross = np.trace(np.real(sqrtm(r2 @ s1 @ r2)))
            dm = mu.mean.array - nu.mean.array
            expected = math.sqrt(max(dm @ dm + np.trace(s1) + np.trace(s2) - 2.0 * cross, 0.0))
            assert w2_gaussian(mu, nu) == pytest.approx(expected, rel=1e-8, abs=1e-10)

    def test_gaussian_from_empirical_unbiased(self, sample_cloud):
        fit = gaussian_from_empirical(sample_cloud)
        assert np.allclose(fit.cov.matrix, np.cov(sample_cloud.particles.T, ddof=1))

    def test_gaussian_from_empirical_uses_tail(self, sample_cloud):
        fit = gaussian_from_empirical(sample_cloud, tail_fraction=0.5)
        assert np.allclose(fit.mean.array, sample_cloud.particles[250:].mean(axis=0))

    def test_gaussian_from_empirical_needs_two_particles(self):
        with pytest.raises(ValueError):
            gaussian_from_empirical(EmpiricalMeasure.dirac([0.0, 0.0]))

    def test_gaussian_from_empirical_fraction_range(self, sample_cloud):
        with pytest.raises(ValueError):
            gaussian_from_empirical(sample_cloud, tail_fraction=0.0)

    def test_random_gaussian_within_bounds(self, rng):
        for _ in range(20):
            mu = random_gaussian(rng)
            lo, hi = mu.cov.eigenvalues()
            assert 0.1 - 1e-12 <= lo and hi <= 3.0 + 1e-12
            assert np.all(np.abs(mu.mean.array) <= 2.0)

    def test_w2_is_symmetric(self, rng):
        for _ in range(20):
            mu, nu = random_gaussian(rng), random_gaussian(rng)
            assert w2_gaussian(mu, nu) == pytest.approx(w2_gaussian(nu, mu), rel=1e-9, abs=1e-12)

    def test_w2_triangle_inequality(self, rng):
        for _ in range(50):
            mu, nu, rho = random_gaussian(rng), random_gaussian(rng), random_gaussian(rng)
            assert w2_gaussian(mu, rho) <= w2_gaussian(mu, nu) + w2_gaussian(nu, rho) + 1e-9

    def test_w2_to_dirac_at_origin(self, sample_gaussian):
        m = sample_gaussian.mean.array
        expected = math.sqrt(m @ m + sample_gaussian.cov.trace)
        assert w2_gaussian(sample_gaussian, GaussianMeasure.point([0.0, 0.0])) == pytest.approx(expected)

    def test_squared_linear_moment_is_locally_lipschitz(self, rng):
        origin = GaussianMeasure.point([0.0, 0.0])
        for _ in range(100):
            mu, nu = random_gaussian(rng), random_gaussian(rng)
            q = rng.uniform(-3.0, 3.0, size=2)
            gap = abs(lin_moment(mu, q) ** 2 - lin_moment(nu, q) ** 2)
            bound = (q @ q) * (w2_gaussian(mu, origin) + w2_gaussian(nu, origin)) * w2_gaussian(mu, nu)
            assert gap <= bound + 1e-9


class TestMomentLinearity:
    """Test that moment functionals are linear in their coefficients"""

    @pytest.mark.parametrize("a, b", [(1.0, 1.0), (2.5, -0.4), (0.0, 3.0)])
    def test_quad_moment(self, sample_gaussian, sample_cloud, a, b):
        q1 = np.array([[2.0, 0.3], [0.3, -1.0]])
        q2 = np.array([[0.5, -0.7], [-0.7, 1.5]])
        for mu in (sample_gaussian, sample_cloud):
            combined = quad_moment(mu, a * q1 + b * q2)
            assert combined == pytest.approx(a * quad_moment(mu, q1) + b * quad_moment(mu, q2), rel=1e-10, abs=1e-12)

    @pytest.mark.parametrize("a, b", [(1.0, 1.0), (2.5, -0.4), (0.0, 3.0)])
    def test_lin_moment(self, sample_gaussian, sample_cloud, a, b):
        u, w = np.array([1.0, -2.0]), np.array([0.5, 0.25])
        for mu in (sample_gaussian, sample_cloud):
            combined = lin_moment(mu, a * u + b * w)
            assert combined == pytest.approx(a * lin_moment(mu, u) + b * lin_moment(mu, w), rel=1e-10, abs=1e-12)

    def test_quad_moment_of_rank_one_is_squared_linear_moment_plus_variance(self, sample_gaussian):
        u = np.array([0.6, -1.1])
        expected = lin_moment(sample_gaussian, u) ** 2 + u @ sample_gaussian.cov.matrix @ u
        assert quad_moment(sample_gaussian, np.outer(u, u)) == pytest.approx(expected)
