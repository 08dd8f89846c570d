"""
Tests for CSV ingestion.
"""

import numpy as np
import pytest

from fosr_core.errors import InputError
from fosr_core.ingest import (
    load_covariate_table,
    load_dataset,
    load_observations,
    load_probe_points,
)
from fosr_core.models import Domain, DomainKind

INTERVAL = Domain(DomainKind.INTERVAL)
SPHERE = Domain(DomainKind.SPHERE)


@pytest.fixture
def write(tmp_path):
    """Write text to a file under tmp_path and return its path."""

    def factory(name: str, text: str):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return factory


OBSERVATIONS = """subject_id,coord_1,y_1,y_2
a,0.1,1.0,2.0
b,0.5,3.0,4.0
a,0.2,5.0,6.0

a,0.3,7.0,8.0
"""

COVARIATES = """subject_id,x_1,x_2
b,1.0,0.5
a,2.0,-1.0
"""


class TestLoadObservations:
    """Tests for load_observations."""

    def test_groups_by_subject(self, write):
        """Test rows group by subject in order of first appearance."""
        table = load_observations(write("obs.csv", OBSERVATIONS), INTERVAL)
        assert table.subject_ids == ["a", "b"]
        assert (table.n, table.N, table.L) == (2, 4, 2)
        np.testing.assert_allclose(table.locations["a"][:, 0], [0.1, 0.2, 0.3])
        np.testing.assert_allclose(table.responses["a"][:, 1], [2.0, 6.0, 8.0])

    def test_off_sphere_row(self, write):
        """Test an off-sphere point names its data row."""
        rows = ["subject_id,coord_1,coord_2,coord_3,y_1"]
        rows += [f"s{i},0,0,1,0.5" for i in range(6)]
        rows.append("s6,0,0,1.2,0.5")
        with pytest.raises(InputError, match="row 7: point not on sphere"):
            load_observations(write("obs.csv", "\n".join(rows) + "\n"), SPHERE)

    def test_non_numeric_cell(self, write):
        """Test a bad cell names its line and column."""
        text = "subject_id,coord_1,y_1\na,0.1,1.0\na,0.2,abc\n"
        with pytest.raises(InputError, match="line 3: non-numeric value 'abc' in column y_1"):
            load_observations(write("obs.csv", text), INTERVAL)

    def test_coordinate_count(self, write):
        """Test coordinate columns must match the domain."""
        with pytest.raises(InputError, match="coordinate column"):
            load_observations(write("obs.csv", OBSERVATIONS), SPHERE)

    @pytest.mark.parametrize("header,message", [
        ("subject_id,coord_1,z_1", "unexpected column"),
        ("subject_id,coord_1", "missing column y_1"),
        ("coord_1,subject_id,y_1", "first column"),
        ("subject_id,coord_1,y_2", "y_1"),
    ])
    def test_bad_headers(self, write, header, message):
        """Test malformed headers are reported on line 1."""
        with pytest.raises(InputError, match=message):
            load_observations(write("obs.csv", header + "\na,0.1,1.0\n"), INTERVAL)

    def test_empty_files(self, write):
        """Test empty files and header-only files."""
        with pytest.raises(InputError, match="file is empty"):
            load_observations(write("empty.csv", ""), INTERVAL)
        with pytest.raises(InputError, match="no data rows"):
            load_observations(write("header.csv", "subject_id,coord_1,y_1\n"), INTERVAL)

    def test_missing_file(self, tmp_path):
        """Test a missing path is an input error."""
        with pytest.raises(InputError, match="file not found"):
            load_observations(tmp_path / "nope.csv", INTERVAL)


class TestLoadCovariates:
    """Tests for covariate loading and joining."""

    def test_join(self, write):
        """Test covariates attach to subjects in observation order."""
        data = load_dataset(write("obs.csv", OBSERVATIONS), write("cov.csv", COVARIATES), INTERVAL)
        assert [s.subject_id for s in data.subjects] == ["a", "b"]
        np.testing.assert_allclose(data.covariate_matrix(), [[2.0, -1.0], [1.0, 0.5]])
        assert data.m.tolist() == [3, 1]

    def test_duplicate_ids(self, write):
        """Test duplicate covariate rows are rejected."""
        text = COVARIATES + "a,0.0,0.0\n"
        with pytest.raises(InputError, match="duplicate subject_id in covariates: a"):
            load_covariate_table(write("cov.csv", text))

    def test_missing_subject(self, write):
        """Test observed subjects without covariates are listed."""
        text = "subject_id,x_1,x_2\na,2.0,-1.0\n"
        with pytest.raises(InputError, match="no covariates for subject"):
            load_dataset(write("obs.csv", OBSERVATIONS), write("cov.csv", text), INTERVAL)

    def test_unknown_subject(self, write):
        """Test covariates for unobserved subjects are listed."""
        text = COVARIATES + "c,0.0,0.0\n"
        with pytest.raises(InputError, match="unknown subject.*c"):
            load_dataset(write("obs.csv", OBSERVATIONS), write("cov.csv", text), INTERVAL)


class TestLoadProbePoints:
    """Tests for probe grids."""

    def test_reads_points(self, write):
        """Test a simple interval grid."""
        points = load_probe_points(write("grid.csv", "coord_1\n0.0\n0.5\n1.0\n"), INTERVAL)
        assert points.shape == (3, 1)

    def test_rejects_off_domain(self, write):
        """Test points outside the domain name their row."""
        with pytest.raises(InputError, match="row 2"):
            load_probe_points(write("grid.csv", "coord_1\n0.5\n1.5\n"), INTERVAL)
