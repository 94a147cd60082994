import numpy as np
import pytest
from numpy.testing import assert_array_equal

from wlasdi.features import FeatureLibrary


class TestEvaluate:
    def test_degree_one_at_zero(self):
        lib = FeatureLibrary(latent_dim=3, degree=1)
        assert_array_equal(lib.evaluate(np.zeros(3)), [1.0, 0.0, 0.0, 0.0])

    def test_degree_two_hand_enumeration(self):
        lib = FeatureLibrary(latent_dim=2, degree=2)
        assert_array_equal(lib.evaluate(np.array([2.0, 3.0])), [1, 2, 3, 4, 6, 9])

    def test_counts(self):
        assert FeatureLibrary(latent_dim=15, degree=1).size == 16
        assert FeatureLibrary(latent_dim=3, degree=2).size == 1 + 3 + 6
        lib = FeatureLibrary(latent_dim=15, degree=1, n_mu=4)
        assert lib.dim == 19
        assert lib.size == 20
        assert lib.augmented

    def test_batched_rows(self):
        lib = FeatureLibrary(latent_dim=2, degree=2)
        rows = np.array([[2.0, 3.0], [0.0, 1.0]])
        theta = lib.evaluate(rows)
        assert theta.shape == (2, 6)
        assert_array_equal(theta[0], lib.evaluate(rows[0]))

    def test_dimension_mismatch(self):
        lib = FeatureLibrary(latent_dim=3)
        with pytest.raises(ValueError):
            lib.evaluate(np.zeros(4))
        with pytest.raises(ValueError):
            lib.jacobian(np.zeros(2))

    def test_bad_degree(self):
        with pytest.raises(ValueError):
            FeatureLibrary(latent_dim=2, degree=3)


class TestJacobian:
    def test_degree_one_structure(self):
        lib = FeatureLibrary(latent_dim=4, degree=1)
        jac = lib.jacobian(np.random.default_rng(0).normal(size=4))
        assert_array_equal(jac, np.vstack([np.zeros(4), np.eye(4)]))

    def test_quadratic_gradient_zero_at_origin(self):
        lib = FeatureLibrary(latent_dim=3, degree=2)
        jac = lib.jacobian(np.zeros(3))
        assert_array_equal(jac[4:], np.zeros((6, 3)))

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_differences(self, seed):
        lib = FeatureLibrary(latent_dim=2, degree=2)
        v = np.array([0.3, -0.7]) + 0.1 * seed
        h = 1e-7
        fd = np.empty((lib.size, 2))
        for j in range(2):
            up, down = v.copy(), v.copy()
            up[j] += h
            down[j] -= h
            fd[:, j] = (lib.evaluate(up) - lib.evaluate(down)) / (2 * h)
        assert np.max(np.abs(fd - lib.jacobian(v))) <= 1e-7
