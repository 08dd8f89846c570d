"""
Tests for the truncated-basis solver.
"""

import numpy as np
import pytest

from fosr_core.errors import InputError
from fosr_core.models import Dataset, Domain, DomainKind, KernelSpec, Subject
from fosr_core.solver import (
    build_design,
    coefficients_from_vectors,
    diagnostics,
    fit,
    objective,
    predict,
    predict_many,
    recommended_truncation,
    representer_oracle_fit,
    vectors_from_coefficients,
)
from fosr_core.spectra import build_quadrature, nystrom_decompose

INTERVAL = Domain(DomainKind.INTERVAL)


def relative_l2(basis, a, b) -> float:
    w = basis.quadrature.weights
    return float(np.sqrt(np.sum(w * (a - b) ** 2) / np.sum(w * b**2)))


@pytest.fixture
def small_basis():
    """A six-term Matérn basis on the interval."""
    return nystrom_decompose(KernelSpec.matern(2.5, 0.5, INTERVAL), build_quadrature(INTERVAL, 128), 6)


class TestDesign:
    """Tests for design assembly and coefficient layout."""

    def test_column_layout(self, make_dataset, small_basis):
        """Test column k * P + p holds v_k(u) X_p."""
        data = make_dataset(n=3, m=4, P=2)
        design = build_design(data, small_basis)
        v = small_basis.eigenfunctions(data.locations())
        x = data.covariate_rows()
        assert design.matrix.shape == (12, 12)
        np.testing.assert_allclose(design.matrix[:, 3 * 2 + 1], v[:, 3] * x[:, 1])

    def test_vector_layout_matches_design(self):
        """Test coefficient stacking agrees with the design column order."""
        c = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
        b_v = vectors_from_coefficients(c)
        assert b_v.shape == (12, 2)
        assert b_v[2 * 3 + 1, 1] == c[1, 1, 2]
        np.testing.assert_array_equal(coefficients_from_vectors(b_v, 3, 4), c)

    def test_domain_mismatch(self, make_dataset, small_basis):
        """Test data and basis must share a domain."""
        data = make_dataset(domain=Domain(DomainKind.SQUARE))
        with pytest.raises(InputError):
            build_design(data, small_basis)


class TestFit:
    """Tests for the closed-form penalized fit."""

    def test_noiseless_recovery(self, make_dataset, small_basis):
        """Test in-span coefficients are recovered at a tiny penalty."""
        rng = np.random.default_rng(11)
        truth = rng.normal(size=(1, 2, small_basis.k0))

        def beta(u):
            return np.einsum("nk,lpk->nlp", small_basis.eigenfunctions(u), truth)

        data = make_dataset(n=20, m=5, P=2, beta=beta, seed=4)
        model = fit(data, small_basis, 1e-12)
        np.testing.assert_allclose(model.coefficients, truth, atol=1e-6)

    def test_minimizes_objective(self, make_dataset, small_basis):
        """Test the fit is the minimizer of the reported objective."""
        data = make_dataset(n=8, m=4, P=2, seed=2)
        model = fit(data, small_basis, [1e-3, 1e-2])
        value = objective(data, small_basis, [1e-3, 1e-2], model.coefficients)
        assert value == pytest.approx(model.objective_value, rel=1e-10)
        rng = np.random.default_rng(5)
        for _ in range(100):
            step = 1e-3 * rng.normal(size=model.coefficients.shape)
            assert objective(data, small_basis, [1e-3, 1e-2], model.coefficients + step) > value

    @pytest.mark.parametrize("seed", range(20))
    def test_gradient_vanishes_at_fit(self, make_dataset, small_basis, seed):
        """Test central differences of the objective vanish at the fitted coefficients."""
        rng = np.random.default_rng(100 + seed)
        P = 1 + seed % 2
        data = make_dataset(n=4 + seed % 4, m=3 + seed % 3, P=P, seed=seed)
        penalty = 10.0 ** rng.uniform(-3, -1, size=P)
        model = fit(data, small_basis, penalty)

        step = 1e-6
        base = model.coefficients
        gradient = np.zeros_like(base)
        for index in np.ndindex(base.shape):
            shift = np.zeros_like(base)
            shift[index] = step
            forward = objective(data, small_basis, penalty, base + shift)
            backward = objective(data, small_basis, penalty, base - shift)
            gradient[index] = (forward - backward) / (2 * step)
        assert np.max(np.abs(gradient)) <= 1e-5 * (1 + abs(model.objective_value))

    def test_outputs_fit_independently(self, make_dataset, small_basis):
        """Test a two-output fit equals two single-output fits."""
        data = make_dataset(n=6, m=5, P=1, L=2, seed=8)
        joint = fit(data, small_basis, 1e-3)
        for l in range(2):
            single = Dataset(INTERVAL, [
                Subject(s.subject_id, s.covariates, s.locations, s.responses[:, l]) for s in data.subjects
            ])
            alone = fit(single, small_basis, 1e-3)
            np.testing.assert_allclose(joint.coefficients[l], alone.coefficients[0], rtol=1e-10, atol=1e-12)

    def test_permutation_invariance(self, make_dataset, small_basis):
        """Test reordering subjects and observations leaves the fit unchanged."""
        data = make_dataset(n=5, m=4, P=2, seed=3)
        shuffled = Dataset(INTERVAL, [
            Subject(s.subject_id, s.covariates, s.locations[::-1], s.responses[::-1])
            for s in reversed(data.subjects)
        ])
        a = fit(data, small_basis, 1e-2).coefficients
        b = fit(shuffled, small_basis, 1e-2).coefficients
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

    def test_monotone_shrinkage(self, make_dataset, small_basis):
        """Test the penalty norm of the coefficients falls as Lambda = t I grows."""
        data = make_dataset(n=8, m=5, P=2, seed=12)
        norms = [fit(data, small_basis, t).rkhs_norms.sum() for t in np.logspace(-6, 3, 10)]
        assert np.all(np.diff(norms) < 0)

    def test_ridge_limit(self, make_dataset, small_basis):
        """Test a huge penalty shrinks the coefficients to zero and GCV to the null model."""
        data = make_dataset(n=8, m=5, P=2, seed=13)
        model = fit(data, small_basis, 1e6)
        design = build_design(data, small_basis)
        scale = np.max(np.abs(design.responses))
        assert np.max(np.abs(model.coefficients)) <= 1e-4 * scale
        null_gcv = np.sum(design.weights * design.responses[:, 0] ** 2) / data.N
        assert model.gcv_score == pytest.approx(null_gcv, rel=1e-4)

    def test_gcv_permutation_invariance(self, make_dataset, small_basis):
        """Test reordering subjects leaves the GCV score and dof unchanged."""
        data = make_dataset(n=6, m=4, P=2, seed=14)
        shuffled = Dataset(INTERVAL, [data.subjects[i] for i in (3, 0, 5, 1, 4, 2)])
        a = fit(data, small_basis, [1e-3, 1e-2])
        b = fit(shuffled, small_basis, [1e-3, 1e-2])
        assert b.gcv_score == pytest.approx(a.gcv_score, rel=1e-10)
        assert b.dof == pytest.approx(a.dof, rel=1e-10)

    def test_dof_decreases_with_penalty(self, make_dataset, small_basis):
        """Test effective dof is strictly decreasing in lambda."""
        data = make_dataset(n=8, m=5, P=2, seed=6)
        dofs = [fit(data, small_basis, lam).dof for lam in np.logspace(-6, 1, 8)]
        assert np.all(np.diff(dofs) < 0)
        assert 0 < dofs[-1] and dofs[0] <= 2 * small_basis.k0

    def test_gcv_matches_dense_hat_matrix(self, make_dataset, small_basis):
        """Test GCV against an explicit hat-matrix computation."""
        data = make_dataset(n=6, m=4, P=2, seed=9)
        lam = np.array([1e-3, 1e-2])
        model = fit(data, small_basis, lam)

        design = build_design(data, small_basis)
        ridge = np.tile(lam, small_basis.k0) / np.repeat(small_basis.eigenvalues, 2)
        hat = design.matrix @ np.linalg.solve(design.gram + np.diag(ridge), design.matrix.T * design.weights)
        resid = design.responses[:, 0] - hat @ design.responses[:, 0]
        N = data.N
        expected = (np.sum(design.weights * resid**2) / N) / (1 - np.trace(hat) / N) ** 2
        assert model.dof == pytest.approx(np.trace(hat), rel=1e-8)
        assert model.gcv_score == pytest.approx(expected, rel=1e-6)

    def test_rkhs_norms(self, make_dataset, small_basis):
        """Test squared RKHS norms are sum b^2 / tau."""
        model = fit(make_dataset(P=2), small_basis, 1e-2)
        expected = np.sum(model.coefficients[0, 1] ** 2 / small_basis.eigenvalues)
        assert model.rkhs_norms[0, 1] == pytest.approx(expected)

    @pytest.mark.parametrize("penalty", [0.0, -1.0, [1e-3, 1e-3, 1e-3], float("nan")])
    def test_rejects_bad_penalty(self, make_dataset, small_basis, penalty):
        """Test penalties must be positive, finite and one per predictor."""
        with pytest.raises(InputError):
            fit(make_dataset(P=2), small_basis, penalty)

    def test_notes_short_truncation(self, make_dataset):
        """Test a k0 below the recommended truncation is noted."""
        basis = nystrom_decompose(KernelSpec.matern(1.5, 1.0, INTERVAL), build_quadrature(INTERVAL, 64), 2)
        model = fit(make_dataset(n=50, m=20), basis, 1e-3)
        assert any("recommended truncation" in note for note in model.notes)


class TestPredict:
    """Tests for prediction."""

    @pytest.fixture
    def model(self, make_dataset, small_basis):
        """A fitted two-predictor, two-output model."""
        return fit(make_dataset(n=6, m=5, P=2, L=2, seed=1), small_basis, 1e-2)

    def test_single_prediction(self, model):
        """Test predict returns one value per output."""
        out = predict(model, [1.0, 0.5], [0.3])
        beta = model.beta([0.3])[0]
        assert out.shape == (2,)
        np.testing.assert_allclose(out, beta @ np.array([1.0, 0.5]))

    def test_many(self, model):
        """Test the (subject, point, output) layout."""
        out = predict_many(model, np.ones((3, 2)), np.linspace(0, 1, 7))
        assert out.shape == (3, 7, 2)
        np.testing.assert_allclose(out[1, 3], predict(model, [1.0, 1.0], [[0.5]]))

    def test_wrong_covariate_count(self, model):
        """Test covariate vectors must match P."""
        with pytest.raises(InputError):
            predict(model, [1.0, 2.0, 3.0], [0.3])
        with pytest.raises(InputError):
            predict_many(model, np.ones((2, 3)), [0.3])


class TestRepresenterOracle:
    """Tests against the untruncated representer-theorem solution."""

    @pytest.fixture
    def spec(self):
        """Matérn 3/2 on the interval."""
        return KernelSpec.matern(1.5, 1.0, INTERVAL)

    @pytest.mark.parametrize("seed", range(10))
    def test_truncated_fit_matches_oracle(self, make_dataset, spec, seed):
        """Test the k0 = 50 fit agrees with the oracle in relative L2."""
        data = make_dataset(n=3 + seed % 3, m=5 - seed % 2, P=1, seed=seed)
        quad = build_quadrature(INTERVAL, 512)
        basis = nystrom_decompose(spec, quad, 50)
        model = fit(data, basis, 0.1)
        oracle = representer_oracle_fit(data, spec, 0.1)
        assert relative_l2(basis, model.beta(quad.nodes)[:, 0, 0], oracle(quad.nodes)) < 1e-3

    def test_converges_in_k0(self, make_dataset, spec):
        """Test the gap to the oracle shrinks as k0 grows."""
        data = make_dataset(n=4, m=5, P=1, seed=21)
        quad = build_quadrature(INTERVAL, 512)
        oracle = representer_oracle_fit(data, spec, 0.1)(quad.nodes)
        gaps = []
        for k0 in (5, 10, 25, 50):
            basis = nystrom_decompose(spec, quad, k0)
            gaps.append(relative_l2(basis, fit(data, basis, 0.1).beta(quad.nodes)[:, 0, 0], oracle))
        assert all(later <= 1.1 * earlier for earlier, later in zip(gaps, gaps[1:]))

    def test_refuses_unsupported(self, make_dataset, spec):
        """Test the oracle's size and shape limits."""
        with pytest.raises(InputError):
            representer_oracle_fit(make_dataset(P=2), spec, 0.1)
        with pytest.raises(InputError):
            representer_oracle_fit(make_dataset(n=41, m=5), spec, 0.1)
        with pytest.raises(InputError):
            representer_oracle_fit(make_dataset(), spec, 0.0)


class TestDiagnostics:
    """Tests for design diagnostics."""

    def test_balanced_design(self, make_dataset):
        """Test a balanced design raises no flags."""
        report = diagnostics(make_dataset(n=30, m=5, P=2))
        assert report.harmonic_m == pytest.approx(5.0)
        assert report.arithmetic_m == pytest.approx(5.0)
        assert report.warnings == ()

    def test_flags(self):
        """Test singular covariates and unbalanced sampling are flagged."""
        data = Dataset(INTERVAL, [
            Subject("a", [1.0, 1.0], [0.5], [1.0]),
            Subject("b", [2.0, 2.0], np.linspace(0, 1, 100), np.zeros(100)),
        ])
        report = diagnostics(data)
        assert len(report.warnings) == 2
        assert report.condition > 1e8

    def test_recommended_truncation(self):
        """Test k0 = ceil(max(n^(1/2h), (nm)^(1/(2h+1))))."""
        assert recommended_truncation(100, 10, 2.0) == 4
        assert recommended_truncation(10_000, 1, 1.0) == 100
