"""Unit tests for the experiment runner."""

import csv
import json

import pytest
from shared.exceptions import ConfigurationError, NotStableError, PreconditionViolatedError
from shared.schemas import ExperimentConfig

from app.runners.experiment_runner import (
    CONDITIONS_HEADER,
    compute_experiment,
    convergence_table,
    run_experiment,
)


def make_config(**overrides):
    document = {
        "problem": {"name": "exp-growth"},
        "mesh": {"T": 1.0, "N": 101, "d": 1},
        "solver": {"tol": 1e-10, "max_iter": 500},
        "seed": 7,
    }
    document.update(overrides)
    return ExperimentConfig.model_validate(document)


def read_csv(path):
    with path.open(newline="") as handle:
        return list(csv.reader(handle))


class TestSolveEq:
    """Test suite for the solve-eq experiment."""

    def test_artefacts(self, tmp_path):
        """Test the solution table, the conditions table and the manifest."""
        outcome = run_experiment(make_config(), "solve-eq", tmp_path)

        rows = read_csv(tmp_path / "solution.csv")
        assert rows[0] == ["time", "x_0", "w_0", "exact_0", "error"]
        assert len(rows) == 102
        assert float(rows[-1][1]) == pytest.approx(2.718281828, abs=1e-3)
        assert read_csv(tmp_path / "conditions.csv")[0] == CONDITIONS_HEADER

        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["kind"] == "solve-eq"
        assert manifest["seed"] == 7
        assert manifest["config"]["kind"] == "solve-eq"
        assert manifest["artifacts"] == ["solution.csv", "conditions.csv", "manifest.json"]
        assert outcome.summary["sup_error"] < 1e-3

    def test_zero_forcing_reproduces_h(self):
        """Test that f = 0 returns x = h exactly."""
        outcome = compute_experiment(make_config(problem={"name": "zero-forcing"}), "solve-eq")
        assert outcome.summary["sup_error"] == pytest.approx(0.0, abs=1e-12)

    def test_apriori_bound_reported(self):
        """Test that the Gronwall bound holds for exp-growth."""
        outcome = compute_experiment(make_config(), "solve-eq")
        bound = next(check for check in outcome.conditions if check.name == "apriori-bound")
        assert bound.passed

    def test_set_field_rejected_without_output(self, tmp_path):
        """Test that a failed run writes nothing."""
        out = tmp_path / "out"
        config = make_config(problem={"name": "unit-interval"})
        with pytest.raises(ConfigurationError):
            run_experiment(config, "solve-eq", out)
        assert not out.exists()


class TestKindResolution:
    """Test suite for choosing the experiment kind."""

    def test_kind_from_config(self, tmp_path):
        """Test that the config's kind is used without a subcommand."""
        outcome = run_experiment(make_config(kind="check-conditions"), output_dir=tmp_path)
        assert outcome.kind == "check-conditions"
        assert sorted(p.name for p in tmp_path.iterdir()) == ["conditions.csv", "manifest.json"]

    def test_kind_mismatch(self):
        """Test that a subcommand disagreeing with the config is rejected."""
        with pytest.raises(ConfigurationError):
            compute_experiment(make_config(kind="funnel"), "solve-eq")

    def test_missing_kind(self):
        """Test that some kind must be given."""
        with pytest.raises(ConfigurationError):
            compute_experiment(make_config())

    def test_unknown_kind(self):
        """Test that an unknown subcommand is rejected."""
        with pytest.raises(ConfigurationError):
            compute_experiment(make_config(), "solve-everything")


class TestConvergenceTable:
    """Test suite for the node-doubling table."""

    def test_second_order_ratios(self):
        """Test that doubling the nodes divides the error by about four."""
        config = make_config(convergence={"nodes": [21, 41, 81]})
        table = convergence_table(config)
        assert table.header == ["N", "sup_error", "ratio"]
        assert [row[0] for row in table.rows] == [21, 41, 81]
        assert table.rows[0][2] is None
        for row in table.rows[1:]:
            assert 3.5 < row[2] < 4.5

    def test_cosh_ratios(self):
        """Test second order for x = 1 + int (t - s) x, whose solution is cosh t."""
        config = make_config(problem={"name": "cosh"}, convergence={"nodes": [21, 41, 81]})
        ratios = [row[2] for row in convergence_table(config).rows[1:]]
        assert all(3.5 < ratio < 4.5 for ratio in ratios)

    def test_zero_forcing_is_exact(self):
        """Test that f = 0 has zero error at every N."""
        config = make_config(problem={"name": "zero-forcing"}, convergence={"nodes": [11, 21]})
        table = convergence_table(config)
        assert [row[1] for row in table.rows] == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_requires_closed_form(self):
        """Test that problems without a closed form are rejected."""
        config = make_config(problem={"name": "unit-interval"})
        with pytest.raises(ConfigurationError):
            convergence_table(config)


class TestFunnelExperiments:
    """Test suite for funnel and nesting experiments."""

    def test_funnel(self, tmp_path):
        """Test the funnel members and their diagnostics."""
        config = make_config(
            problem={"name": "unit-interval"},
            mesh={"T": 1.0, "N": 21},
            funnel={"n_samples": 4, "eps_ladder": [1.0, 0.5]},
        )
        outcome = run_experiment(config, "funnel", tmp_path)

        rows = read_csv(tmp_path / "funnel.csv")
        assert rows[0] == [
            "sample_id",
            "node_time",
            "x_0",
            "w_0",
            "eq_residual",
            "incl_residual",
        ]
        assert len(rows) - 1 == 21 * outcome.summary["accepted"]
        metrics = [row[0] for row in read_csv(tmp_path / "diagnostics.csv")[1:]]
        assert "funnel_radius" in metrics
        assert metrics.count("covering_number") == 2
        radius = next(check for check in outcome.conditions if check.name == "funnel-radius")
        assert radius.passed

    def test_nesting_ladder(self, tmp_path):
        """Test one nesting row per consecutive pair of levels."""
        config = make_config(
            problem={"name": "unit-interval"},
            mesh={"T": 1.0, "N": 21},
            funnel={"n_samples": 3},
            ladder={"levels": 3},
        )
        run_experiment(config, "nesting-ladder", tmp_path)
        rows = read_csv(tmp_path / "nesting.csv")
        assert rows[0] == ["level", "radius", "semidistance", "defect_bound"]
        assert [row[0] for row in rows[1:]] == ["1", "2"]


class TestPeriodicExperiments:
    """Test suite for the periodic experiments."""

    def test_periodic_volterra(self, tmp_path):
        """Test the fixed point x0 = 1 of the relaxation problem."""
        config = make_config(
            problem={"name": "periodic-relaxation"},
            mesh={"T": 1.0, "N": 401},
            periodic={"probe_pairs": 3},
        )
        outcome = run_experiment(config, "periodic-volterra", tmp_path)
        assert outcome.summary["x0"][0][0] == pytest.approx(1.0, abs=1e-5)
        assert outcome.summary["certificate"] == "(U3)"
        rows = read_csv(tmp_path / "periodic.csv")
        assert rows[0][:2] == ["branch", "x0_0"]
        assert rows[1][-1] == "true"
        assert len(read_csv(tmp_path / "orbit.csv")) == 402

    def test_periodic_band_branches(self):
        """Test one branch per extremal direction of the band field."""
        config = make_config(
            problem={"name": "periodic-band"},
            mesh={"T": 1.0, "N": 401},
            periodic={"probe_pairs": 2, "directions": [[1.0], [-1.0]]},
            threads=2,
        )
        outcome = compute_experiment(config, "periodic-volterra")
        assert outcome.summary["branches"] == 2
        assert outcome.summary["x0"][0][0] == pytest.approx(1.1, abs=1e-5)
        assert outcome.summary["x0"][1][0] == pytest.approx(0.9, abs=1e-5)

    def test_unstable_generator(self):
        """Test that A = 0 has no stability certificate."""
        config = make_config(
            problem={"name": "periodic-relaxation"}, periodic={"generator": [[0.0]]}
        )
        with pytest.raises(NotStableError):
            compute_experiment(config, "periodic-volterra")

    def test_strict_contraction_failure(self):
        """Test that a large contraction density fails in strict mode."""
        config = make_config(
            problem={
                "name": "periodic-relaxation",
                "growth": {"c": "1", "eta": "1", "mu": "1"},
            }
        )
        with pytest.raises(PreconditionViolatedError):
            compute_experiment(config, "periodic-volterra")

    def test_periodic_hammerstein(self, tmp_path):
        """Test the affine Hammerstein problem returns a periodic solution."""
        config = make_config(problem={"name": "hammerstein-affine"})
        outcome = run_experiment(config, "periodic-hammerstein", tmp_path)
        assert outcome.summary["periodic"]
        rows = read_csv(tmp_path / "periodic.csv")
        assert rows[0] == ["periodicity_residual", "iterations", "residual", "periodic", "radius"]
        assert rows[1][3] == "true"
        assert rows[1][4] == ""

    def test_hammerstein_needs_square_kernel(self):
        """Test that a triangle kernel is rejected."""
        with pytest.raises(ConfigurationError):
            compute_experiment(make_config(), "periodic-hammerstein")


class TestCheckConditions:
    """Test suite for the check-conditions experiment."""

    def test_convolution_kernel_report(self):
        """Test (k3) with M_inv = 1, (k4) with psi = 1 and (k7) for exp(-(t - s))."""
        config = make_config(problem={"name": "relaxation"})
        outcome = compute_experiment(config, "check-conditions")
        checks = {check.name: check for check in outcome.conditions}
        assert checks["(k3)"].passed
        assert checks["(k3)"].value == pytest.approx(1.0)
        assert checks["(k4)"].value == pytest.approx(1.0)
        assert checks["(k7)"].passed
        assert outcome.summary["passed"] + outcome.summary["failed"] == len(outcome.conditions)


class TestReplay:
    """Test suite for reproducible artefacts."""

    def test_identical_runs_write_identical_tables(self, tmp_path):
        """Test that one config and seed give byte-identical CSVs."""
        config = make_config(
            problem={"name": "unit-interval"},
            mesh={"T": 1.0, "N": 21},
            funnel={"n_samples": 3},
            threads=2,
        )
        run_experiment(config, "funnel", tmp_path / "a")
        run_experiment(config, "funnel", tmp_path / "b")
        for name in ("funnel.csv", "diagnostics.csv", "conditions.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
