"""CSV ingestion."""

import numpy as np
import pytest

from conetest import ingest_csv
from conetest.data import read_matrix_csv


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestIngest:
    def test_numeric_columns(self, tmp_path):
        path = write(tmp_path, "y,x,w\n1,0.5,2\n2,1.5,1\n")
        data = ingest_csv(path, "y", ["x"], weights="w")
        np.testing.assert_array_equal(data.y, [1.0, 2.0])
        np.testing.assert_array_equal(data.x[:, 0], [0.5, 1.5])
        np.testing.assert_array_equal(data.weights, [2.0, 1.0])
        assert data.Z is None
        assert data.column_names == ("y", "x")

    def test_categorical_dummies(self, tmp_path):
        path = write(tmp_path, "y,x,g,k\n1,0,b,1\n2,1,a,2\n3,2,c,1\n4,3,a,2\n")
        data = ingest_csv(path, "y", ["x"], ["g", "k"], categorical=["k"])
        # reference levels "a" and "1"
        np.testing.assert_array_equal(data.Z, [[1, 0, 0], [0, 0, 1], [0, 1, 0], [0, 0, 1]])
        assert data.column_names == ("y", "x", "g=b", "g=c", "k=2")

    def test_numeric_covariate(self, tmp_path):
        path = write(tmp_path, "y,x,z\n1,0,0.25\n2,1,-1\n")
        data = ingest_csv(path, "y", ["x"], ["z"])
        np.testing.assert_array_equal(data.Z[:, 0], [0.25, -1.0])

    def test_blank_lines_skipped(self, tmp_path):
        path = write(tmp_path, "y,x\n1,0\n\n2,1\n")
        assert ingest_csv(path, "y", ["x"]).n == 2

    @pytest.mark.parametrize("text, match", [
        ("y,x\n1,0\n,1\n", "row 3: empty cell in column 'y'"),
        ("y,x\n1,0\n2,abc\n", "row 3: non-numeric value 'abc' in column 'x'"),
        ("y,x\n1,nan\n", "row 2: non-finite value 'nan' in column 'x'"),
        ("y,x\n1,0,3\n", "row 2: expected 2 cells, got 3"),
        ("y,x\n", "no data rows"),
        ("", "empty file"),
        ("y,q\n1,2\n", "missing column 'x'"),
    ])
    def test_errors(self, tmp_path, text, match):
        with pytest.raises(ValueError, match=match):
            ingest_csv(write(tmp_path, text), "y", ["x"])

    def test_empty_covariate_cell(self, tmp_path):
        path = write(tmp_path, "y,x,g\n1,0,a\n2,1,\n")
        with pytest.raises(ValueError, match="row 3: empty cell in column 'g'"):
            ingest_csv(path, "y", ["x"], ["g"])


class TestMatrix:
    def test_read(self, tmp_path):
        A = read_matrix_csv(write(tmp_path, "-1,1,0\n\n0,-1,1\n", "a.csv"))
        np.testing.assert_array_equal(A, [[-1, 1, 0], [0, -1, 1]])

    def test_ragged(self, tmp_path):
        with pytest.raises(ValueError, match="row 2 has 2 entries, expected 3"):
            read_matrix_csv(write(tmp_path, "1,2,3\n1,2\n", "a.csv"))

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError, match="empty matrix"):
            read_matrix_csv(write(tmp_path, "\n", "a.csv"))
