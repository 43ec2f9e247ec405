"""Unit tests for the command-line entry point."""

import json

import pytest

from app.main import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, load_config, main


@pytest.fixture
def write_config(tmp_path):
    def write(document, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document) if not isinstance(document, str) else document)
        return path

    return write


BASE = {
    "problem": {"name": "zero-forcing"},
    "mesh": {"T": 1.0, "N": 21},
    "seed": 3,
}


class TestLoadConfig:
    """Test suite for load_config()."""

    def test_overrides(self, write_config):
        """Test that --seed and --threads replace the file values."""
        config = load_config(write_config(BASE), seed=11, threads=2)
        assert config.seed == 11
        assert config.threads == 2

    def test_defaults_from_file(self, write_config):
        """Test that the file seed is kept without overrides."""
        assert load_config(write_config(BASE)).seed == 3


class TestMain:
    """Test suite for exit codes."""

    def test_success(self, write_config, tmp_path):
        """Test a complete run with exit code 0."""
        out = tmp_path / "out"
        code = main(["solve-eq", "--config", str(write_config(BASE)), "--out", str(out)])
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 3

    def test_seed_override(self, write_config, tmp_path):
        """Test that --seed reaches the manifest."""
        out = tmp_path / "out"
        argv = ["solve-eq", "--config", str(write_config(BASE)), "--out", str(out)]
        assert main([*argv, "--seed", "42"]) == EXIT_OK
        assert json.loads((out / "manifest.json").read_text())["seed"] == 42

    @pytest.mark.parametrize(
        "document",
        [
            "{not json",
            "[1, 2]",
            {"problem": {"name": "no-such-problem"}},
            {"problem": {"name": "exp-growth"}, "unexpected": 1},
            {"problem": {"name": "exp-growth"}, "mesh": {"N": 1}},
            {"problem": {"name": "exp-growth"}, "kind": "funnel"},
        ],
    )
    def test_configuration_errors(self, write_config, tmp_path, document):
        """Test bad JSON, unknown names, schema violations and kind conflicts."""
        out = tmp_path / "out"
        code = main(["solve-eq", "--config", str(write_config(document)), "--out", str(out)])
        assert code == EXIT_CONFIG
        assert not out.exists()

    def test_missing_config_file(self, tmp_path):
        """Test that an unreadable config is a configuration error."""
        code = main(["solve-eq", "--config", str(tmp_path / "missing.json")])
        assert code == EXIT_CONFIG

    def test_numeric_failure(self, write_config, tmp_path):
        """Test that a missing stability certificate exits with 3."""
        document = {
            "problem": {"name": "periodic-relaxation"},
            "mesh": {"T": 1.0, "N": 21},
            "periodic": {"generator": [[0.0]]},
        }
        out = tmp_path / "out"
        argv = ["periodic-volterra", "--config", str(write_config(document)), "--out", str(out)]
        assert main(argv) == EXIT_NUMERIC
        assert not out.exists()

    def test_io_failure(self, write_config, tmp_path):
        """Test that an unwritable output directory exits with 4."""
        blocker = tmp_path / "blocker"
        blocker.write_text("occupied")
        code = main(["solve-eq", "--config", str(write_config(BASE)), "--out", str(blocker)])
        assert code == EXIT_IO

    def test_unknown_subcommand(self, write_config):
        """Test that argparse rejects unknown kinds."""
        with pytest.raises(SystemExit) as exc_info:
            main(["integrate", "--config", str(write_config(BASE))])
        assert exc_info.value.code == 2
