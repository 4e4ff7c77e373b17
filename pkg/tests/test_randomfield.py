"""Tests for Karhunen-Loeve decomposition and field realization."""

import numpy as np
import pytest
from pc2.randomfield import (
    Kernel,
    RandomFieldError,
    field_derivatives,
    kl_decompose,
    realize,
    trapezoid_weights,
    uniform_grid,
)


@pytest.fixture
def beam_field():
    return kl_decompose(Kernel(correlation_length=5.0, std=400.0), uniform_grid(0.0, 10.0, 201), target=5, mean=8000.0)


class TestKernel:
    def test_covariance_at_zero_lag(self):
        kernel = Kernel(correlation_length=0.5, std=2.0)
        assert kernel.covariance([[0.3, 0.1]], [[0.3, 0.1]])[0, 0] == pytest.approx(4.0)

    def test_separable(self):
        kernel = Kernel(correlation_length=0.3)
        s, t = np.array([[0.1, 0.2]]), np.array([[0.4, 0.9]])
        expected = np.exp(-0.5 * (0.3**2 + 0.7**2) / 0.09)
        assert kernel.covariance(s, t)[0, 0] == pytest.approx(expected)

    @pytest.mark.parametrize("order", [1, 2])
    def test_derivatives_match_finite_differences(self, order):
        kernel = Kernel(correlation_length=0.7)
        a, b, h = np.array([0.2, 0.9]), np.array([0.5]), 1e-5
        lower = kernel.correlation_1d(a + h, b, order - 1) - kernel.correlation_1d(a - h, b, order - 1)
        np.testing.assert_allclose(kernel.correlation_1d(a, b, order), lower / (2 * h), atol=1e-7)

    def test_invalid(self):
        with pytest.raises(RandomFieldError):
            Kernel(correlation_length=0.0)
        with pytest.raises(RandomFieldError):
            Kernel(correlation_length=1.0, std=-1.0)


class TestDecomposition:
    """Test the Nystrom eigen-solve and truncation rules."""

    def test_trapezoid_weights(self):
        w = trapezoid_weights(uniform_grid(0.0, 10.0, 11))
        assert w.sum() == pytest.approx(10.0)
        assert w[0] == pytest.approx(0.5)

    def test_mode_count_target(self, beam_field):
        assert beam_field.n_modes == 5
        assert beam_field.variance_fraction >= 0.99

    def test_eigenvalues_descending(self, beam_field):
        assert np.all(np.diff(beam_field.eigvals) <= 0)

    def test_total_variance(self, beam_field):
        # trace of the weighted covariance is std^2 * domain length
        assert beam_field.total_variance == pytest.approx(400.0**2 * 10.0, rel=1e-10)

    def test_eigenvectors_weighted_orthonormal(self, beam_field):
        phi = beam_field.eigvecs
        gram = phi.T @ (phi * beam_field.weights[:, None])
        np.testing.assert_allclose(gram, np.eye(beam_field.n_modes), atol=1e-10)

    def test_variance_fraction_target(self):
        axis = uniform_grid(0.0, 1.0, 64)
        field = kl_decompose(Kernel(correlation_length=0.2), (axis, axis), target=0.99)
        assert field.variance_fraction >= 0.99
        assert abs(field.n_modes - 28) <= 2
        fewer = field.eigvals[:-1].sum() / field.total_variance
        assert fewer < 0.99

    def test_tensor_modes(self):
        axis = uniform_grid(0.0, 1.0, 16)
        field = kl_decompose(Kernel(correlation_length=0.3, std=2.0), (axis, axis), target=4)
        assert field.dim == 2
        assert field.nodes.shape == (256, 2)
        assert field.eigvecs.shape == (256, 4)
        assert tuple(field.mode_index[0]) == (0, 0)

    def test_full_expansion_reproduces_covariance(self):
        axis = uniform_grid(0.0, 1.0, 12)
        kernel = Kernel(correlation_length=0.4, std=1.5)
        field = kl_decompose(kernel, axis, target=12)
        np.testing.assert_allclose(field.truncated_covariance(), kernel.covariance(axis[:, None], axis[:, None]), atol=1e-8)

    @pytest.mark.parametrize("target", [0, 1.5, "all", True])
    def test_invalid_targets(self, target):
        with pytest.raises(RandomFieldError):
            kl_decompose(Kernel(correlation_length=1.0), uniform_grid(0.0, 1.0, 10), target=target)

    def test_invalid_grid(self):
        with pytest.raises(RandomFieldError):
            kl_decompose(Kernel(correlation_length=1.0), np.array([0.0, 0.5, 0.4]))


class TestRealization:
    def test_zero_germs_give_mean(self, beam_field):
        values = realize(beam_field, np.zeros(5), np.linspace(0, 10, 7))
        np.testing.assert_allclose(values, 8000.0)

    def test_per_point_germs(self, beam_field):
        xi = np.random.default_rng(0).standard_normal((3, 5))
        x = np.array([1.0, 5.0, 9.0])
        together = realize(beam_field, xi, x)
        separate = [realize(beam_field, xi[k], x[k:k + 1])[0] for k in range(3)]
        np.testing.assert_allclose(together, separate)

    def test_sample_variance(self, beam_field):
        xi = beam_field.sample_germs(np.random.default_rng(1), 4000)
        values = realize(beam_field, xi, np.full(4000, 5.0))
        assert values.std() == pytest.approx(400.0, rel=0.05)

    def test_nystrom_value_matches_nodes(self, beam_field):
        xi = np.array([1.0, -0.5, 0.3, 2.0, -1.0])
        nodes = beam_field.axes[0][::20]
        np.testing.assert_allclose(
            field_derivatives(beam_field, xi, nodes, 0), realize(beam_field, xi, nodes), rtol=1e-8
        )

    def test_nystrom_derivative(self, beam_field):
        xi = np.array([1.0, -0.5, 0.3, 2.0, -1.0])
        x, h = np.array([2.5, 6.1]), 1e-4
        slope = (field_derivatives(beam_field, xi, x + h, 0) - field_derivatives(beam_field, xi, x - h, 0)) / (2 * h)
        np.testing.assert_allclose(field_derivatives(beam_field, xi, x, 1), slope, rtol=1e-5, atol=1e-6)
        curvature = (field_derivatives(beam_field, xi, x + h, 1) - field_derivatives(beam_field, xi, x - h, 1)) / (2 * h)
        np.testing.assert_allclose(field_derivatives(beam_field, xi, x, 2), curvature, rtol=1e-5, atol=1e-6)

    def test_query_outside_domain(self, beam_field):
        with pytest.raises(RandomFieldError):
            realize(beam_field, np.zeros(5), [10.5])

    def test_wrong_germ_count(self, beam_field):
        with pytest.raises(RandomFieldError):
            realize(beam_field, np.zeros(4), [1.0])

    def test_derivatives_need_one_axis(self):
        axis = uniform_grid(0.0, 1.0, 8)
        field = kl_decompose(Kernel(correlation_length=0.5), (axis, axis), target=2)
        with pytest.raises(RandomFieldError):
            field_derivatives(field, np.zeros(2), [[0.5, 0.5]], 1)
