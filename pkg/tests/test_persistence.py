"""
Tests for saving and loading fitted models.
"""

import numpy as np
import pytest

from fosr_core.errors import FormatError, InputError
from fosr_core.models import Domain, DomainKind, KernelSpec
from fosr_core.persistence import FORMAT_TAG, load_model, save_model
from fosr_core.solver import fit
from fosr_core.spectra import build_basis

INTERVAL = Domain(DomainKind.INTERVAL)
TORUS = Domain(DomainKind.TORUS)


@pytest.fixture
def model(make_dataset):
    """A two-predictor, two-output Matérn fit."""
    basis = build_basis(KernelSpec.matern(2.5, 0.5, INTERVAL), 48, 8)
    return fit(make_dataset(n=8, m=5, P=2, L=2, seed=3), basis, [1e-3, 1e-2])


@pytest.fixture
def saved(model, tmp_path):
    """Path of the saved fixture model."""
    return save_model(model, tmp_path / "model.fosr")


def corrupt(path, old: str, new: str):
    text = path.read_text(encoding="utf-8")
    assert old in text
    path.write_text(text.replace(old, new, 1), encoding="utf-8")


class TestRoundTrip:
    """Tests for save/load fidelity."""

    def test_predictions_are_bitwise_equal(self, model, saved):
        """Test a loaded model predicts exactly what the saved one did."""
        loaded = load_model(saved)
        points = np.linspace(0, 1, 17)
        np.testing.assert_array_equal(loaded.beta(points), model.beta(points))
        np.testing.assert_array_equal(loaded.penalty, model.penalty)
        assert loaded.gcv_score == model.gcv_score
        assert loaded.basis.kernel == model.basis.kernel

    def test_sobolev_round_trip(self, make_dataset, tmp_path):
        """Test Sobolev models rebuild their closed-form spectrum."""
        basis = build_basis(KernelSpec.sobolev(2.0, TORUS), 6, 9)
        original = fit(make_dataset(n=6, m=6, P=1, domain=TORUS, seed=1), basis, 1e-2)
        loaded = load_model(save_model(original, tmp_path / "sobolev.fosr"))
        assert loaded.basis.spectrum is not None
        points = [[0.1, 0.2], [0.8, 0.55]]
        np.testing.assert_array_equal(loaded.beta(points), original.beta(points))

    def test_notes_survive(self, make_dataset, tmp_path):
        """Test fit notes are stored."""
        basis = build_basis(KernelSpec.matern(1.5, 1.0, INTERVAL), 32, 2)
        original = fit(make_dataset(n=50, m=20, seed=2), basis, 1e-3)
        assert original.notes
        loaded = load_model(save_model(original, tmp_path / "notes.fosr"))
        assert loaded.notes == original.notes

    def test_starts_with_tag(self, saved):
        """Test the file begins with the format tag and version."""
        lines = saved.read_text(encoding="utf-8").splitlines()
        assert lines[:2] == [FORMAT_TAG, "version 1"]
        assert lines[-1] == "[end]"


class TestCorruption:
    """Tests for corrupt model files."""

    def test_negative_eigenvalue(self, model, saved):
        """Test a non-positive eigenvalue names its section."""
        first = repr(float(model.basis.eigenvalues[0]))
        corrupt(saved, f"count {model.k0}\n{first}\n", f"count {model.k0}\n-1.0\n")
        with pytest.raises(FormatError, match=r"^\[eigenvalues\]") as info:
            load_model(saved)
        assert info.value.section == "eigenvalues"

    def test_version_mismatch(self, saved):
        """Test an unknown version is rejected in the header."""
        corrupt(saved, "version 1", "version 2")
        with pytest.raises(FormatError, match="unsupported version 2"):
            load_model(saved)

    def test_truncated(self, saved):
        """Test a file without its end marker."""
        text = saved.read_text(encoding="utf-8")
        saved.write_text(text[: text.index("[summary]")], encoding="utf-8")
        with pytest.raises(FormatError, match="truncated"):
            load_model(saved)

    def test_missing_section(self, saved):
        """Test a removed section is named."""
        corrupt(saved, "[notes]\n", "")
        with pytest.raises(FormatError, match=r"\[notes\] section missing"):
            load_model(saved)

    def test_non_numeric(self, model, saved):
        """Test garbage inside a numeric block."""
        corrupt(saved, "[penalty]\ncount 2\n", "[penalty]\ncount 2\nabc\n")
        with pytest.raises(FormatError, match=r"\[penalty\]"):
            load_model(saved)

    def test_wrong_tag(self, saved):
        """Test a file that is not a model."""
        corrupt(saved, FORMAT_TAG, "SOMETHING-ELSE")
        with pytest.raises(FormatError, match=r"\[header\]"):
            load_model(saved)

    def test_missing_file(self, tmp_path):
        """Test a missing path is an input error."""
        with pytest.raises(InputError):
            load_model(tmp_path / "absent.fosr")
