"""Command-line experiment runner.

Two subcommands: ``solve`` builds (or loads) a TT linear system, runs the
selected solver, and writes a CSV convergence log, a JSON summary, and the
solution in the TT file format; ``diag`` runs randomized checks of the
convergence theory and writes a JSON report.

Runs are deterministic for a fixed seed and thread count.  BLAS threading is
controlled by the usual environment variables (``OMP_NUM_THREADS``,
``OPENBLAS_NUM_THREADS``, ``MKL_NUM_THREADS``); pin them for reproducible
timings.

Exit codes: 0 converged / check passed, 2 not converged / check failed,
3 invalid input, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .amen import SolverConfig, als_solve, amen_solve, dmrg_solve, symmetrize
from .diagnostics import (
    dense_oracle_solve,
    run_fom_check,
    run_kantorovich_check,
    run_rate_check,
)
from .io import TTFormatError, tt_io_read, tt_io_write
from .problems import (
    CascadeCMESpec,
    PoissonSpec,
    TimeSystemSpec,
    build_cme_operator,
    build_initial_state,
    build_poisson,
    build_time_system,
)
from .tt import (
    DenseSizeError,
    TTMatrix,
    TTVector,
    qtt_quantize,
    to_dense,
    tt_add,
    tt_norm,
    tt_round,
)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INVALID = 3
EXIT_IO = 4

CSV_HEADER = ["sweep", "wall_time_s", "rel_residual", "a_norm_error", "max_rank", "local_converged"]

SOLVERS = ("amen_svd", "amen_chol", "amen_als", "als", "dmrg", "amen_sym")
PROBLEMS = ("poisson", "cme", "cme_time", "custom")

DENSE_REFERENCE_CAP = 1 << 24


class SpecError(ValueError):
    """Invalid experiment specification; message lists the offending fields."""


@dataclass
class ExperimentSpec:
    """Validated description of one solver run."""

    problem: str = "poisson"
    solver: str = "amen_svd"
    d: int = 4
    n: int = 8
    tol: float = 1e-5
    kickrank: int = 4
    max_sweeps: int = 20
    max_rank: Optional[int] = None
    seed: int = 0
    out: str = "experiment"
    matrix: Optional[str] = None
    rhs: Optional[str] = None
    reference: str = "dense"
    symmetrize: bool = False
    # time-system knobs (cme_time), overridable through --spec
    n_steps: int = 256
    t_final: float = 10.0
    scheme: str = "crank_nicolson"
    qtt: bool = True

    def validate(self):
        bad = []
        if self.problem not in PROBLEMS:
            bad.append(f"problem={self.problem!r} (one of {PROBLEMS})")
        if self.solver not in SOLVERS:
            bad.append(f"solver={self.solver!r} (one of {SOLVERS})")
        if self.d < 1:
            bad.append(f"d={self.d} (must be >= 1)")
        if self.n < 2:
            bad.append(f"n={self.n} (must be >= 2)")
        if not (0 < self.tol < 1):
            bad.append(f"tol={self.tol} (must be in (0, 1))")
        if self.kickrank < 1:
            bad.append(f"kickrank={self.kickrank} (must be >= 1)")
        if self.max_sweeps < 1:
            bad.append(f"max_sweeps={self.max_sweeps} (must be >= 1)")
        if self.max_rank is not None and self.max_rank < 1:
            bad.append(f"max_rank={self.max_rank} (must be >= 1)")
        if self.reference not in ("dense", "tight", "none"):
            bad.append(f"reference={self.reference!r} (one of dense|tight|none)")
        if self.problem == "custom" and (self.matrix is None or self.rhs is None):
            bad.append("matrix/rhs (required for problem=custom)")
        if self.n_steps < 1:
            bad.append(f"n_steps={self.n_steps} (must be >= 1)")
        if self.t_final <= 0:
            bad.append(f"t_final={self.t_final} (must be positive)")
        if self.scheme not in ("crank_nicolson", "implicit_euler"):
            bad.append(f"scheme={self.scheme!r}")
        if bad:
            raise SpecError("invalid experiment fields: " + "; ".join(bad))


def build_problem(spec: ExperimentSpec):
    """Return (A, y) for the requested problem."""
    if spec.problem == "poisson":
        return build_poisson(PoissonSpec(dimension=spec.d, grid_points=spec.n))
    if spec.problem == "cme":
        cspec = CascadeCMESpec(species=spec.d, states=spec.n)
        A = build_cme_operator(cspec)
        y = build_initial_state(cspec)
        if spec.qtt and _is_power_of_two(spec.n):
            A = qtt_quantize(A, tol=1e-13)
            y = qtt_quantize(y, tol=1e-13)
        return A, y
    if spec.problem == "cme_time":
        cspec = CascadeCMESpec(species=spec.d, states=spec.n)
        A = build_cme_operator(cspec)
        psi0 = build_initial_state(cspec)
        if spec.qtt and _is_power_of_two(spec.n):
            A = qtt_quantize(A, tol=1e-13)
            psi0 = qtt_quantize(psi0, tol=1e-13)
        tspec = TimeSystemSpec(
            tau=spec.t_final / spec.n_steps, n_steps=spec.n_steps, scheme=spec.scheme
        )
        M, b = build_time_system(A, psi0, tspec)
        if spec.qtt and _is_power_of_two(spec.n_steps):
            M = qtt_quantize(M, tol=1e-13)
            b = qtt_quantize(b, tol=1e-13)
        return M, b
    # custom
    A = tt_io_read(spec.matrix)
    y = tt_io_read(spec.rhs)
    if not isinstance(A, TTMatrix) or not isinstance(y, TTVector):
        raise SpecError("custom problem needs a ttmatrix file and a ttvector file")
    return A, y


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


def run_experiment(spec: ExperimentSpec):
    """Build, solve, attach reference error, and write all artifacts."""
    spec.validate()
    A, y = build_problem(spec)
    config = SolverConfig(
        tol=spec.tol,
        max_sweeps=spec.max_sweeps,
        kickrank=spec.kickrank,
        max_rank=spec.max_rank,
        seed=spec.seed,
        enrichment={
            "amen_svd": "svd",
            "amen_chol": "chol",
            "amen_als": "als",
            "amen_sym": "svd",
            "als": "none",
            "dmrg": "none",
        }[spec.solver],
    )
    A_solve, y_solve = A, y
    if spec.symmetrize or spec.solver == "amen_sym":
        A_solve, y_solve = symmetrize(A, y, round_tol=min(spec.tol / 100, 1e-10))
    if spec.solver == "als":
        x, log = als_solve(A_solve, y_solve, config=config)
    elif spec.solver == "dmrg":
        x, log = dmrg_solve(A_solve, y_solve, config=config)
    else:
        x, log = amen_solve(A_solve, y_solve, config=config)

    err = _reference_error(spec, A, y, x)
    if err is not None and log.records:
        log.records[-1].a_norm_error = err

    _write_artifacts(spec, A, y, x, log, err)
    return x, log


def _reference_error(spec: ExperimentSpec, A, y, x) -> Optional[float]:
    """Relative error against a dense or tighter-tolerance reference."""
    if spec.reference == "none":
        return None
    if spec.reference == "dense":
        size = int(np.prod(x.mode_sizes, dtype=np.int64))
        if size * size > DENSE_REFERENCE_CAP:
            return _tight_reference_error(spec, A, y, x)
        try:
            xs = dense_oracle_solve(to_dense(A), to_dense(y))
        except (DenseSizeError, np.linalg.LinAlgError):
            return None
        xd = to_dense(x)
        denom = np.linalg.norm(xs)
        return float(np.linalg.norm(xd - xs) / (denom if denom > 0 else 1.0))
    return _tight_reference_error(spec, A, y, x)


def _tight_reference_error(spec: ExperimentSpec, A, y, x) -> Optional[float]:
    ref_config = SolverConfig(
        tol=spec.tol / 1000,
        max_sweeps=max(spec.max_sweeps, 30),
        kickrank=spec.kickrank,
        enrichment="svd",
        seed=spec.seed + 1,
    )
    xref, ref_log = amen_solve(A, y, config=ref_config)
    if ref_log.status != "converged":
        return None
    diff = tt_round(tt_add(x, xref, 1.0, -1.0), spec.tol / 100)
    denom = tt_norm(xref)
    return float(tt_norm(diff) / (denom if denom > 0 else 1.0))


def write_log(log, path):
    """CSV convergence log, one row per sweep; empty field for missing error."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in log.records:
            err = "" if rec.a_norm_error is None else repr(float(rec.a_norm_error))
            writer.writerow(
                [
                    rec.sweep,
                    repr(float(rec.wall_time)),
                    repr(float(rec.rel_residual)),
                    err,
                    rec.max_rank,
                    int(rec.local_converged),
                ]
            )


def _write_artifacts(spec, A, y, x, log, err):
    write_log(log, spec.out + ".csv")
    summary = {
        "status": log.status,
        "stop_reason": log.stop_reason,
        "final_residual": log.final_residual,
        "final_error": err,
        "ranks": list(x.ranks),
        "sweeps": len(log.records),
        "config": asdict(spec),
        "notes": [note for rec in log.records for note in rec.notes],
    }
    with open(spec.out + ".json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    tt_io_write(x, spec.out + ".tt")


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SpecError(message)


def make_parser() -> _Parser:
    parser = _Parser(prog="ttamen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="build and solve a TT linear system")
    ps.add_argument("--problem", choices=PROBLEMS, default="poisson")
    ps.add_argument("--d", type=int, default=4, help="number of modes / species")
    ps.add_argument("--n", type=int, default=8, help="points or states per mode")
    ps.add_argument("--solver", choices=SOLVERS, default="amen_svd")
    ps.add_argument("--tol", type=float, default=1e-5)
    ps.add_argument("--kickrank", type=int, default=4)
    ps.add_argument("--max-sweeps", type=int, default=20)
    ps.add_argument("--max-rank", type=int, default=None)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", default="experiment", help="artifact path prefix")
    ps.add_argument("--matrix", default=None, help="TT operator file (custom)")
    ps.add_argument("--rhs", default=None, help="TT right-hand side file (custom)")
    ps.add_argument("--reference", choices=("dense", "tight", "none"), default="dense")
    ps.add_argument("--symmetrize", action="store_true")
    ps.add_argument("--spec", default=None, help="JSON experiment file overriding flags")
    ps.add_argument("--jobs", type=int, default=1, help="concurrent experiments for list specs")

    pd = sub.add_parser("diag", help="randomized convergence-theory checks")
    pd.add_argument("--check", choices=("kantorovich", "rate", "fom"), required=True)
    pd.add_argument("--trials", type=int, default=100)
    pd.add_argument("--seed", type=int, default=0)
    pd.add_argument("--out", default=None, help="JSON report path (default stdout)")
    return parser


_SPEC_KEYS = {f for f in ExperimentSpec.__dataclass_fields__}


def _spec_from_args(args) -> list[ExperimentSpec]:
    base = {
        "problem": args.problem,
        "solver": args.solver,
        "d": args.d,
        "n": args.n,
        "tol": args.tol,
        "kickrank": args.kickrank,
        "max_sweeps": args.max_sweeps,
        "max_rank": args.max_rank,
        "seed": args.seed,
        "out": args.out,
        "matrix": args.matrix,
        "rhs": args.rhs,
        "reference": args.reference,
        "symmetrize": args.symmetrize,
    }
    if args.spec is None:
        return [ExperimentSpec(**base)]
    with open(args.spec) as fh:
        data = json.load(fh)
    entries = data if isinstance(data, list) else [data]
    specs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SpecError(f"spec entry {i} is not an object")
        unknown = sorted(set(entry) - _SPEC_KEYS)
        if unknown:
            raise SpecError(f"unknown spec fields: {', '.join(unknown)}")
        merged = dict(base)
        merged.update(entry)
        if len(entries) > 1 and "out" not in entry:
            merged["out"] = f"{base['out']}_{i}"
        specs.append(ExperimentSpec(**merged))
    return specs


def _run_solve(args) -> int:
    specs = _spec_from_args(args)
    for spec in specs:
        spec.validate()
    if len(specs) == 1 or args.jobs <= 1:
        results = [run_experiment(s) for s in specs]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_experiment, specs))
    worst = EXIT_OK
    for spec, (x, log) in zip(specs, results):
        converged = log.status == "converged"
        print(
            f"{spec.problem} {spec.solver}: {log.status} after "
            f"{len(log.records)} sweeps, residual {log.final_residual:.3e}, "
            f"artifacts at {spec.out}.{{csv,json,tt}}"
        )
        if not converged:
            worst = EXIT_NOT_CONVERGED
    return worst


def _run_diag(args) -> int:
    if args.check == "kantorovich":
        report = run_kantorovich_check(trials=args.trials, seed=args.seed)
    elif args.check == "rate":
        report = run_rate_check(trials=min(args.trials, 10), seed=args.seed)
    else:
        report = run_fom_check(trials=args.trials, seed=args.seed)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK if report["passed"] else EXIT_NOT_CONVERGED


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "solve":
            return _run_solve(args)
        return _run_diag(args)
    except (SpecError, ValueError, TTFormatError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
