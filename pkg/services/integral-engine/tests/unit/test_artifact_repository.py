"""Unit tests for ArtifactRepository."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest
from shared.exceptions import ArtifactWriteError
from shared.schemas import RunManifest

from app.repositories.artifact_repository import (
    MANIFEST_NAME,
    ArtifactRepository,
    CsvTable,
    format_cell,
)


@pytest.fixture
def manifest():
    return RunManifest(
        app_name="test", version="0.0.1", kind="solve-eq", seed=7, threads=1, config={}
    )


class TestCsvTable:
    """Test suite for staged tables."""

    def test_row_width_checked(self):
        """Test that rows must match the header."""
        table = CsvTable("t.csv", ["a", "b"])
        table.add([1, 2])
        with pytest.raises(ValueError):
            table.add([1])
        assert table.rows == [[1, 2]]

    @pytest.mark.parametrize(
        "value, expected",
        [
            (None, ""),
            (True, "true"),
            (False, "false"),
            (0.1, "0.10000000000000001"),
            (np.float64(2.0), "2"),
            (np.int64(3), "3"),
            ("(k3)", "(k3)"),
        ],
    )
    def test_format_cell(self, value, expected):
        """Test cell rendering of floats, booleans, numpy scalars and blanks."""
        assert format_cell(value) == expected


class TestArtifactRepositoryCommit:
    """Test suite for commit()."""

    def test_commit_writes_tables_and_manifest(self, tmp_path, manifest):
        """Test that staged tables and the manifest land in the output directory."""
        out = tmp_path / "run"
        repository = ArtifactRepository(out)
        table = CsvTable("solution.csv", ["time", "x_0"])
        table.add([0.0, 1.0])
        repository.stage(table)

        # Execute
        names = repository.commit(manifest)

        # Verify
        assert names == ["solution.csv", MANIFEST_NAME]
        with (out / "solution.csv").open(newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows == [["time", "x_0"], ["0", "1"]]
        written = json.loads((out / MANIFEST_NAME).read_text())
        assert written["artifacts"] == names
        assert written["seed"] == 7

    def test_restaging_replaces_table(self, tmp_path, manifest):
        """Test that a table staged twice under one name is written once."""
        repository = ArtifactRepository(tmp_path)
        repository.stage(CsvTable("a.csv", ["x"]))
        repository.stage(CsvTable("a.csv", ["y"]))
        assert repository.staged_names == ["a.csv"]
        repository.commit(manifest)
        assert (tmp_path / "a.csv").read_text() == "y\n"

    def test_nothing_written_before_commit(self, tmp_path):
        """Test that staging does not touch the filesystem."""
        out = tmp_path / "run"
        ArtifactRepository(out).stage(CsvTable("a.csv", ["x"]))
        assert not out.exists()

    def test_unwritable_directory(self, tmp_path, manifest):
        """Test that a file in place of the directory raises ArtifactWriteError."""
        blocker = tmp_path / "blocker"
        blocker.write_text("occupied")
        with pytest.raises(ArtifactWriteError):
            ArtifactRepository(blocker).commit(manifest)

    def test_table_write_failure(self, tmp_path, manifest, mocker):
        """Test that an OSError while writing a table becomes ArtifactWriteError."""
        repository = ArtifactRepository(tmp_path)
        repository.stage(CsvTable("a.csv", ["x"]))
        mocker.patch.object(Path, "open", side_effect=OSError("disk full"))

        with pytest.raises(ArtifactWriteError):
            repository.commit(manifest)
        assert not (tmp_path / MANIFEST_NAME).exists()
