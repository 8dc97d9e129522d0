"""Experiment runner: exit codes, CSV schema, spec validation, determinism."""

import csv
import json

import numpy as np
import pytest

from ttamen import ConvergenceLog, tt_io_read, tt_io_write, tt_random, ttmat_identity
from ttamen.cli import (
    CSV_HEADER,
    EXIT_INVALID,
    EXIT_IO,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    ExperimentSpec,
    SpecError,
    build_problem,
    main,
    run_experiment,
    write_log,
)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestSpecValidation:
    def test_defaults_valid(self):
        ExperimentSpec().validate()

    def test_messages_list_offending_fields(self):
        spec = ExperimentSpec(problem="heat", solver="cg", d=0, tol=2.0)
        with pytest.raises(SpecError) as exc:
            spec.validate()
        msg = str(exc.value)
        for frag in ("problem=", "solver=", "d=0", "tol=2.0"):
            assert frag in msg

    def test_custom_requires_files(self):
        with pytest.raises(SpecError):
            ExperimentSpec(problem="custom").validate()


class TestWriteLog:
    def test_header_only_for_empty_run(self, tmp_path):
        path = tmp_path / "log.csv"
        write_log(ConvergenceLog(), path)
        rows = read_csv(path)
        assert rows == [CSV_HEADER]

    def test_rows_and_empty_error_field(self, tmp_path):
        from ttamen import SweepRecord
        log = ConvergenceLog()
        log.records.append(SweepRecord(1, 0.5, 1e-3, None, 4, False))
        log.records.append(SweepRecord(2, 1.0, 1e-6, 2.5e-7, 6, True))
        path = tmp_path / "log.csv"
        write_log(log, path)
        rows = read_csv(path)
        assert rows[0] == CSV_HEADER
        assert rows[1][3] == ""  # missing a_norm_error
        assert float(rows[2][3]) == 2.5e-7
        assert float(rows[1][1]) <= float(rows[2][1])  # monotone wall time


class TestRunExperiment:
    def test_poisson_artifacts(self, tmp_path):
        spec = ExperimentSpec(d=3, n=4, tol=1e-7, out=str(tmp_path / "run"))
        x, log = run_experiment(spec)
        assert log.status == "converged"
        rows = read_csv(tmp_path / "run.csv")
        assert rows[0] == CSV_HEADER
        assert len(rows) == len(log.records) + 1
        walls = [float(r[1]) for r in rows[1:]]
        assert walls == sorted(walls)
        summary = json.loads((tmp_path / "run.json").read_text())
        assert summary["status"] == "converged"
        assert summary["final_error"] is not None and summary["final_error"] < 1e-6
        sol = tt_io_read(str(tmp_path / "run.tt"))
        assert sol.mode_sizes == (4, 4, 4)

    def test_custom_problem_via_files(self, tmp_path, rng):
        A = ttmat_identity([3, 3])
        y = tt_random([3, 3], 2, rng=rng)
        tt_io_write(A, tmp_path / "A.tt")
        tt_io_write(y, tmp_path / "y.tt")
        spec = ExperimentSpec(
            problem="custom",
            matrix=str(tmp_path / "A.tt"),
            rhs=str(tmp_path / "y.tt"),
            out=str(tmp_path / "run"),
        )
        x, log = run_experiment(spec)
        assert log.status == "converged"

    def test_custom_rejects_swapped_files(self, tmp_path, rng):
        y = tt_random([3, 3], 2, rng=rng)
        tt_io_write(y, tmp_path / "y.tt")
        spec = ExperimentSpec(
            problem="custom",
            matrix=str(tmp_path / "y.tt"),
            rhs=str(tmp_path / "y.tt"),
            out=str(tmp_path / "run"),
        )
        with pytest.raises(SpecError):
            run_experiment(spec)

    def test_cme_problem_builds_in_qtt(self):
        A, y = build_problem(ExperimentSpec(problem="cme", d=2, n=8))
        assert A.row_sizes == (2,) * 6

    def test_cme_time_problem_shape(self):
        A, b = build_problem(
            ExperimentSpec(problem="cme_time", d=2, n=4, n_steps=8)
        )
        # 2 species of 4 states -> 2 qtt bits each, plus 3 time bits
        assert A.row_sizes == (2,) * 7
        assert b.mode_sizes == (2,) * 7


class TestMain:
    def test_converged_run_exit_zero(self, tmp_path):
        code = main(
            [
                "solve", "--problem", "poisson", "--d", "3", "--n", "4",
                "--tol", "1e-7", "--out", str(tmp_path / "run"),
            ]
        )
        assert code == EXIT_OK

    def test_not_converged_exit_two(self, tmp_path):
        code = main(
            [
                "solve", "--problem", "poisson", "--d", "3", "--n", "4",
                "--tol", "1e-9", "--max-sweeps", "1", "--max-rank", "1",
                "--out", str(tmp_path / "run"),
            ]
        )
        assert code == EXIT_NOT_CONVERGED

    def test_invalid_arguments_exit_three(self, tmp_path, capsys):
        assert main(["solve", "--solver", "bogus"]) == EXIT_INVALID
        assert main(["solve", "--d", "0", "--out", str(tmp_path / "x")]) == EXIT_INVALID
        capsys.readouterr()

    def test_missing_input_file_exit_four(self, tmp_path, capsys):
        code = main(
            [
                "solve", "--problem", "custom",
                "--matrix", str(tmp_path / "missing.tt"),
                "--rhs", str(tmp_path / "missing.tt"),
                "--out", str(tmp_path / "run"),
            ]
        )
        assert code == EXIT_IO
        capsys.readouterr()

    def test_unwritable_output_exit_four(self, tmp_path, capsys):
        code = main(
            [
                "solve", "--problem", "poisson", "--d", "2", "--n", "3",
                "--out", str(tmp_path / "no_such_dir" / "run"),
            ]
        )
        assert code == EXIT_IO
        capsys.readouterr()

    def test_spec_file_with_unknown_field(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"problem": "poisson", "stepsize": 2}))
        assert main(["solve", "--spec", str(spec)]) == EXIT_INVALID
        capsys.readouterr()

    def test_spec_file_list_with_jobs(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(
            json.dumps(
                [
                    {"problem": "poisson", "d": 2, "n": 4, "tol": 1e-6},
                    {"problem": "poisson", "d": 3, "n": 4, "tol": 1e-6},
                ]
            )
        )
        code = main(
            [
                "solve", "--spec", str(spec), "--jobs", "2",
                "--out", str(tmp_path / "batch"),
            ]
        )
        assert code == EXIT_OK
        assert (tmp_path / "batch_0.csv").exists()
        assert (tmp_path / "batch_1.csv").exists()

    def test_diag_subcommand(self, tmp_path):
        out = tmp_path / "diag.json"
        code = main(
            ["diag", "--check", "kantorovich", "--trials", "20", "--out", str(out)]
        )
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        assert report["passed"] is True

    def test_diag_fom(self, tmp_path):
        out = tmp_path / "fom.json"
        code = main(["diag", "--check", "fom", "--trials", "50", "--out", str(out)])
        assert code == EXIT_OK


class TestDeterminism:
    def test_identical_runs_identical_csv(self, tmp_path):
        args = [
            "solve", "--problem", "poisson", "--d", "3", "--n", "4",
            "--tol", "1e-7", "--seed", "11",
        ]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        ra = read_csv(tmp_path / "a.csv")
        rb = read_csv(tmp_path / "b.csv")
        assert len(ra) == len(rb)
        for rowa, rowb in zip(ra[1:], rb[1:]):
            # numeric columns except wall time must match to full precision
            assert rowa[0] == rowb[0]
            assert abs(float(rowa[2]) - float(rowb[2])) <= 1e-12 * max(
                float(rowa[2]), 1e-30
            )
            assert rowa[4] == rowb[4] and rowa[5] == rowb[5]

    def test_solution_files_byte_identical(self, tmp_path):
        args = [
            "solve", "--problem", "poisson", "--d", "3", "--n", "4",
            "--tol", "1e-7", "--seed", "11",
        ]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        assert (tmp_path / "a.tt").read_bytes() == (tmp_path / "b.tt").read_bytes()
