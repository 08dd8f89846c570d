"""
Tests for fosr special functions, metrics and kernels.
"""

import math

import numpy as np
import pytest
from scipy.special import kv

from fosr_core.errors import BesselSaturationWarning, DomainError, InputError
from fosr_core.kernels import (
    BESSEL_SATURATION,
    bessel_k,
    distance,
    gram_matrix,
    kernel_matrix,
    matern,
    matern_eval,
    pairwise_distances,
)
from fosr_core.models import Domain, DomainKind, KernelFamily, KernelSpec

INTERVAL = Domain(DomainKind.INTERVAL)


def closed_form_matern(nu: float, rho: float, t: float) -> float:
    s = math.sqrt(2 * nu) * t / rho
    if nu == 0.5:
        return math.exp(-s)
    if nu == 1.5:
        return (1 + s) * math.exp(-s)
    return (1 + s + s * s / 3) * math.exp(-s)


class TestBesselK:
    """Tests for the modified Bessel function of the second kind."""

    @pytest.mark.parametrize("order,x", [(0.5, 0.1), (1.5, 1.0), (2.5, 7.5), (5.5, 30.0)])
    def test_matches_scipy(self, order, x):
        """Test agreement with scipy's unscaled kv."""
        assert bessel_k(order, x) == pytest.approx(kv(order, x), rel=1e-12)

    def test_half_order_closed_form(self):
        """Test K_1/2(x) = sqrt(pi / 2x) exp(-x)."""
        for x in (0.01, 0.5, 3.0, 20.0):
            expected = math.sqrt(math.pi / (2 * x)) * math.exp(-x)
            assert bessel_k(0.5, x) == pytest.approx(expected, rel=1e-12)

    def test_recurrence(self):
        """Test K_(v+1) = K_(v-1) + (2v / x) K_v."""
        for nu in (1.5, 2.5, 4.0):
            for x in (0.3, 1.0, 5.0, 12.0):
                lhs = bessel_k(nu + 1, x)
                rhs = bessel_k(nu - 1, x) + (2 * nu / x) * bessel_k(nu, x)
                assert abs(lhs - rhs) <= 1e-9 * abs(lhs)

    def test_rejects_non_positive(self):
        """Test order and argument must be positive."""
        with pytest.raises(DomainError):
            bessel_k(1.5, 0.0)
        with pytest.raises(DomainError):
            bessel_k(-1.0, 1.0)

    def test_saturation_warns(self):
        """Test overflow saturates at the largest double with a warning."""
        with pytest.warns(BesselSaturationWarning):
            value = bessel_k(200.0, 1e-3)
        assert value == BESSEL_SATURATION


class TestMatern:
    """Tests for the Matérn correlation."""

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
    def test_half_integer_closed_forms(self, nu):
        """Test half-integer orders against their exponential-polynomial forms."""
        for rho in (0.25, 0.5, 1.0, 2.0):
            for t in (0.01, 0.3, 1.0, 2.5):
                expected = closed_form_matern(nu, rho, t)
                assert float(matern(nu, rho, t)) == pytest.approx(expected, rel=1e-9)

    def test_value_at_zero(self):
        """Test the correlation is exactly one at zero distance."""
        assert matern(3.5, 0.7, 0.0) == 1.0

    def test_vectorized_shape(self):
        """Test array input keeps its shape."""
        t = np.linspace(0, 1, 12).reshape(3, 4)
        assert matern(1.5, 1.0, t).shape == (3, 4)

    def test_monotone_and_bounded(self):
        """Test values decrease in distance and stay in (0, 1]."""
        values = matern(2.5, 0.5, np.linspace(0, 3, 50))
        assert np.all(np.diff(values) <= 0)
        assert np.all(values > 0) and np.all(values <= 1)

    def test_range_scaling(self):
        """Test K(t; rho) = K(t / rho; 1)."""
        t = np.array([0.1, 0.4, 0.9])
        np.testing.assert_allclose(matern(1.5, 0.5, t), matern(1.5, 1.0, t / 0.5), rtol=1e-13)

    def test_rejects_negative_distance(self):
        """Test distances must be non-negative."""
        with pytest.raises(DomainError):
            matern(1.5, 1.0, -0.1)

    def test_matern_eval(self):
        """Test scalar evaluation from a KernelSpec."""
        spec = KernelSpec.matern(1.5, 1.0, INTERVAL)
        assert matern_eval(spec, 0.5) == pytest.approx(closed_form_matern(1.5, 1.0, 0.5))
        with pytest.raises(InputError):
            matern_eval(KernelSpec.sobolev(2.0, INTERVAL), 0.5)


class TestDistance:
    """Tests for domain metrics."""

    def test_interval(self):
        """Test Euclidean distance on the interval."""
        assert distance(INTERVAL, 0.2, 0.9) == pytest.approx(0.7)

    def test_torus_wraps(self):
        """Test wraparound distance on the torus."""
        torus = Domain(DomainKind.TORUS)
        assert distance(torus, [0.1, 0.1], [0.9, 0.9]) == pytest.approx(math.sqrt(0.08))
        assert distance(torus, [0.1, 0.5], [0.9, 0.5]) == pytest.approx(0.2)

    @pytest.mark.parametrize("kind", list(DomainKind))
    def test_metric_axioms(self, kind):
        """Test symmetry, zero self-distance and the triangle inequality on random triples."""
        domain = Domain(kind)
        rng = np.random.default_rng(17)
        a, b, c = (domain.sample_uniform(rng, 200) for _ in range(3))
        ab = np.diag(pairwise_distances(domain, a, b))
        ba = np.diag(pairwise_distances(domain, b, a))
        bc = np.diag(pairwise_distances(domain, b, c))
        ac = np.diag(pairwise_distances(domain, a, c))
        np.testing.assert_allclose(ab, ba, rtol=0, atol=1e-12)
        assert np.all(ac <= ab + bc + 1e-9)
        np.testing.assert_allclose(np.diag(pairwise_distances(domain, a[:20], a[:20])), 0.0, atol=1e-7)

    def test_sphere_geodesic(self):
        """Test great-circle distance on the sphere."""
        sphere = Domain(DomainKind.SPHERE)
        assert distance(sphere, [1, 0, 0], [0, 1, 0]) == pytest.approx(math.pi / 2)
        assert distance(sphere, [0, 0, 1], [0, 0, -1]) == pytest.approx(math.pi)

    def test_off_sphere(self):
        """Test off-sphere points are domain errors."""
        with pytest.raises(DomainError):
            distance(Domain(DomainKind.SPHERE), [1, 0, 0], [0, 2, 0])


class TestKernelMatrices:
    """Tests for kernel and Gram matrices."""

    def test_brownian_min(self):
        """Test the min-kernel."""
        spec = KernelSpec(KernelFamily.BROWNIAN, INTERVAL)
        k = kernel_matrix(spec, [0.2, 0.7], [0.5])
        np.testing.assert_allclose(k, [[0.2], [0.5]])

    def test_constant(self):
        """Test the constant kernel."""
        spec = KernelSpec(KernelFamily.CONSTANT, INTERVAL)
        assert np.all(kernel_matrix(spec, [0.1, 0.2], [0.3, 0.4, 0.5]) == 1.0)

    def test_gram_symmetric_with_unit_diagonal(self):
        """Test a Matérn Gram matrix on the sphere."""
        rng = np.random.default_rng(3)
        sphere = Domain(DomainKind.SPHERE)
        pts = sphere.sample_uniform(rng, 20)
        g = gram_matrix(KernelSpec.matern(1.5, 0.5, sphere), pts)
        np.testing.assert_array_equal(g, g.T)
        np.testing.assert_allclose(np.diag(g), 1.0)

    def test_sobolev_needs_basis(self):
        """Test Sobolev kernels are not evaluated pointwise."""
        with pytest.raises(InputError):
            kernel_matrix(KernelSpec.sobolev(2.0, INTERVAL), [0.1], [0.2])

    def test_gram_needs_points(self):
        """Test an empty point set is rejected."""
        with pytest.raises(InputError):
            gram_matrix(KernelSpec.matern(1.5, 1.0, INTERVAL), [])
