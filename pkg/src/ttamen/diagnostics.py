"""Numerical checks of the solver's convergence theory.

Contains the worst-case steepest-descent contraction bound, the per-sweep
rate formula built from measured local progress factors, dense instrumented
runs that verify the rate formula as an identity, and angle-based one-step
bounds for Galerkin projection on nonsymmetric systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import amen as _amen
from .tt import (
    TTMatrix,
    TTVector,
    interface_matrix,
    orthogonalize,
    to_dense,
    tt_matvec,
    tt_norm,
    tt_round,
)

__all__ = [
    "RateReport",
    "AngleReport",
    "kantorovich_bound",
    "tt_extreme_eigenvalues",
    "sd_step",
    "sd_run",
    "phi_d",
    "angle_quantities",
    "fom_chain_bound",
    "dense_oracle_solve",
    "subtrain_dense",
    "reduced_system",
    "instrumented_amen_run",
    "run_kantorovich_check",
    "run_rate_check",
    "run_fom_check",
    "random_spd",
    "random_well_conditioned",
]


@dataclass
class RateReport:
    """Measured convergence quantities of an instrumented run.

    ``sweeps`` holds one record per sweep with the measured per-core progress
    factors ``mu``, the projector angles ``omega``, the predicted squared rate
    ``phi_sq``, the realized energy ratio ``j_ratio``, and their gap.
    """

    lambda_min: float
    lambda_max: float
    omega_bound: float
    sweeps: list = field(default_factory=list)
    j_trace: list = field(default_factory=list)
    monotone: bool = True
    max_violation: float = 0.0


@dataclass
class AngleReport:
    """One-step Galerkin projection bound and its ingredients.

    ``eps`` is the residual projection defect, ``mu`` the smallest eigenvalue
    of the symmetric part of the projected operator, ``omega`` the induced
    angle.  ``applicable`` is False when ``mu <= 0`` (the bound says nothing).
    """

    eps: float
    mu: float
    omega: float
    realized: float
    bound: float
    applicable: bool


# ----------------------------------------------------------------------
# Contraction bounds
# ----------------------------------------------------------------------

def _check_spd(A: np.ndarray, tol: float = 1e-10):
    nrm = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > tol * max(nrm, 1e-300):
        raise ValueError("matrix is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    if w[0] <= 0:
        raise ValueError(f"matrix is not positive definite (lambda_min={w[0]:.3e})")
    return float(w[0]), float(w[-1])


def kantorovich_bound(A, lam_min: Optional[float] = None, lam_max: Optional[float] = None) -> float:
    """Worst-case one-step contraction of exact steepest descent on SPD A.

    For a dense array the extreme eigenvalues are computed directly (symmetry
    and positive definiteness are checked); for a TT operator they are
    estimated by power iteration unless supplied.
    """
    if isinstance(A, np.ndarray):
        lam_min, lam_max = _check_spd(A)
    elif isinstance(A, TTMatrix):
        if lam_min is None or lam_max is None:
            lam_min, lam_max = tt_extreme_eigenvalues(A)
    else:
        raise TypeError(f"expected ndarray or TTMatrix, got {type(A)}")
    if lam_min <= 0:
        raise ValueError(f"lambda_min={lam_min:.3e} is not positive")
    return (lam_max - lam_min) / (lam_max + lam_min)


def tt_extreme_eigenvalues(
    A: TTMatrix,
    steps: int = 100,
    round_tol: float = 1e-6,
    max_rank: int = 50,
    seed: int = 0,
):
    """Power-iteration estimates of the extreme eigenvalues of a symmetric A.

    The largest eigenvalue comes from plain power iteration with rounding
    after every operator application; the smallest from power iteration on
    the spectrally shifted operator.
    """
    from .tt import tt_random, ttmat_add, ttmat_identity

    rng = np.random.default_rng(seed)

    def _power(M: TTMatrix) -> float:
        v = tt_round(tt_random(M.col_sizes, 2, rng=rng), 0.0)
        nrm = tt_norm(v)
        v.cores[0] /= nrm
        lam = 0.0
        for _ in range(steps):
            w = tt_round(tt_matvec(M, v), round_tol, max_rank=max_rank)
            nrm = tt_norm(w)
            if nrm == 0:
                return 0.0
            w.cores[0] /= nrm
            lam = _rayleigh(M, w)
            v = w
        return lam

    lam_max = _power(A)
    shift = abs(lam_max) * 1.05 + 1e-30
    shifted = ttmat_add(ttmat_identity(A.row_sizes), A, shift, -1.0)
    lam_min = shift - _power(shifted)
    return float(lam_min), float(lam_max)


def _rayleigh(M: TTMatrix, v: TTVector) -> float:
    from .tt import tt_dot

    return float(tt_dot(v, tt_matvec(M, v)) / tt_dot(v, v))


def sd_step(A: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exact steepest descent step for SPD A: x + h z with optimal h."""
    z = y - A @ x
    zz = float(z @ z)
    if zz == 0:
        return x.copy()
    h = zz / float(z @ (A @ z))
    return x + h * z


def sd_run(A: np.ndarray, y: np.ndarray, x0: np.ndarray, steps: int = 10):
    """Run exact SD and return the per-step A-norm error contraction ratios."""
    x_star = np.linalg.solve(A, y)

    def a_err(x):
        e = x_star - x
        return float(np.sqrt(max(e @ (A @ e), 0.0)))

    ratios = []
    x = x0
    for _ in range(steps):
        before = a_err(x)
        if before == 0:
            break
        x = sd_step(A, y, x)
        ratios.append(a_err(x) / before)
    return np.asarray(ratios)


def phi_d(mu, omega) -> float:
    """Predicted per-sweep contraction from local progress factors.

    ``phi**2 = sum_k omega_k^2 prod_{j<k}(1-omega_j^2) prod_{j<=k} mu_j^2``
    over k = 1..d-1; both sequences have length d-1 with entries in [0, 1].
    """
    mu = np.asarray(mu, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if mu.shape != omega.shape or mu.ndim != 1:
        raise ValueError("mu and omega must be 1-D sequences of equal length")
    if np.any((mu < 0) | (mu > 1)) or np.any((omega < 0) | (omega > 1)):
        raise ValueError("entries must lie in [0, 1]")
    total = 0.0
    lead = 1.0  # prod_{j<k} (1-omega_j^2) * prod_{j<k} mu_j^2
    for m, w in zip(mu, omega):
        total += w**2 * lead * m**2
        lead *= (1.0 - w**2) * m**2
    return float(np.sqrt(min(max(total, 0.0), 1.0 + 1e-15)))


def fom_chain_bound(mu, omega) -> float:
    """Accumulated one-sweep residual bound for the nonsymmetric analysis.

    ``sum_k omega_k mu_k prod_{m<k} mu_m / sqrt(1-omega_m^2)``; requires all
    ``omega_k < 1``.
    """
    mu = np.asarray(mu, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if mu.shape != omega.shape or mu.ndim != 1:
        raise ValueError("mu and omega must be 1-D sequences of equal length")
    if np.any(omega >= 1):
        raise ValueError("bound requires all omega < 1")
    total = 0.0
    lead = 1.0
    for m, w in zip(mu, omega):
        total += w * m * lead
        lead *= m / np.sqrt(1.0 - w**2)
    return float(total)


def angle_quantities(A: np.ndarray, V: np.ndarray, z: np.ndarray) -> AngleReport:
    """One Galerkin projection step on the basis V against right-hand side z.

    Treats the initial guess as zero (any guess in span(V) gives the same
    residual), computes the projection defect ``eps = ||z - V V^T z||/||z||``,
    the angle ``omega`` with ``sqrt(1-omega^2) = mu/||AV||``, the realized
    residual ratio, and the bound ``eps + omega/sqrt(1-omega^2) sqrt(1-eps^2)``.
    """
    V = np.asarray(V, dtype=float)
    if np.linalg.norm(V.T @ V - np.eye(V.shape[1])) > 1e-10:
        raise ValueError("V must have orthonormal columns")
    znorm = np.linalg.norm(z)
    if znorm == 0:
        return AngleReport(0.0, 0.0, 0.0, 0.0, 0.0, False)
    Vz = V.T @ z
    eps = float(np.linalg.norm(z - V @ Vz) / znorm)
    eps = min(eps, 1.0)
    AV = A @ V
    H = V.T @ AV
    mu = float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])
    av_norm = float(np.linalg.norm(AV, 2))
    applicable = mu > 0
    if applicable:
        c = min(mu / av_norm, 1.0)
        omega = float(np.sqrt(max(0.0, 1.0 - c * c)))
        bound = eps + (omega / c) * np.sqrt(max(0.0, 1.0 - eps * eps))
    else:
        omega = 1.0
        bound = np.inf
    try:
        w = np.linalg.solve(H, Vz)
        realized = float(np.linalg.norm(z - AV @ w) / znorm)
    except np.linalg.LinAlgError:
        realized = np.inf
        applicable = False
    return AngleReport(eps, mu, omega, realized, float(bound), applicable)


def dense_oracle_solve(A: np.ndarray, y: np.ndarray, max_size: int = 1 << 14) -> np.ndarray:
    """Direct reference solve with a residual check (1e-12 relative)."""
    if A.shape[0] > max_size:
        raise ValueError(f"system of size {A.shape[0]} exceeds the dense cap {max_size}")
    x = np.linalg.solve(A, y)
    ynorm = np.linalg.norm(y)
    res = np.linalg.norm(y - A @ x)
    if ynorm > 0 and res > 1e-12 * ynorm:
        # one step of iterative refinement for marginally conditioned systems
        x = x + np.linalg.solve(A, y - A @ x)
        res = np.linalg.norm(y - A @ x)
        if res > 1e-10 * ynorm:
            raise np.linalg.LinAlgError(
                f"direct solve residual {res / ynorm:.3e} too large; matrix near singular"
            )
    return x


# ----------------------------------------------------------------------
# Instrumented run: measure mu_k and omega_k densely
# ----------------------------------------------------------------------

def subtrain_dense(cores) -> np.ndarray:
    """Dense vector of a core chain whose first core has left rank r > 1.

    The leading rank is treated as an extra fastest mode, matching the
    vectorization of the reduced problems.
    """
    from .tt import _left_interface

    first = cores[0]
    r, n, R = first.shape
    fused = np.reshape(first, (1, r * n, R), order="F")
    return _left_interface([fused] + list(cores[1:]))[:, 0]


def reduced_system(A: np.ndarray, y: np.ndarray, left_iface: np.ndarray, rest_size: int):
    """Project (A, y) onto kron(I_rest, L) for a left interface L."""
    X = np.kron(np.eye(rest_size), left_iface)
    return X.T @ A @ X, X.T @ y, X


class _RateRecorder:
    """Collects energy values and local progress factors during a sweep.

    All quantities are computed densely, so this is meant for small systems
    only.  The projector angle at core k uses the finalized (expanded and
    orthogonalized) core, the progress factor the exact local reference.
    """

    def __init__(self, A: np.ndarray, y: np.ndarray):
        self.A = A
        self.y = y
        self.x_star = dense_oracle_solve(A, y)
        self.mu = []
        self.omega = []
        self.j_trace = []
        self.sweep_start_j = None
        self._ctx = None

    def _energy(self, x_dense) -> float:
        e = self.x_star - x_dense
        return float(e @ (self.A @ e))

    def on_sweep_start(self, x: TTVector):
        self.mu = []
        self.omega = []
        self.sweep_start_j = self._energy(to_dense(x))
        self.j_trace.append(self.sweep_start_j)

    def on_core_start(self, k0: int, x: TTVector):
        from .tt import _left_interface

        d = x.d
        rest = int(np.prod(x.mode_sizes[k0:], dtype=np.int64))
        L = _left_interface(x.cores[:k0])
        Ak, yk, X = reduced_system(self.A, self.y, L, rest)
        t_sub = subtrain_dense(x.cores[k0:])
        self._ctx = {
            "k0": k0,
            "Ak": Ak,
            "yk": yk,
            "X": X,
            "x_star_k": dense_oracle_solve(Ak, yk),
            "t_sub": t_sub,
            "rest_after": int(np.prod(x.mode_sizes[k0 + 1 :], dtype=np.int64)),
        }

    def on_core_solved(self, k0: int, u_core: np.ndarray):
        self._ctx["u_core"] = u_core

    def on_core_done(self, k0: int, x: TTVector):
        ctx = self._ctx
        Ak, xs, t_sub = ctx["Ak"], ctx["x_star_k"], ctx["t_sub"]
        u_core = ctx["u_core"]
        d = x.d
        # u-subtrain: solved core with the not-yet-touched tail cores; at this
        # point core k0 is already expanded/orthogonalized and core k0+1
        # rescaled, but the represented tail tau(cores[k0+1:]) absorbed only
        # the QR factor, so rebuild u from the recorded pre-expansion core
        if k0 < d - 1:
            u_sub = ctx["u_sub"]
        else:
            u_sub = subtrain_dense([u_core])

        def a_err(v):
            e = xs - v
            return float(np.sqrt(max(e @ (Ak @ e), 0.0)))

        err_t = a_err(t_sub)
        err_u = a_err(u_sub)
        self.mu.append(err_u / err_t if err_t > 0 else 1.0)
        self.j_trace.append(self._energy(ctx["X"] @ u_sub))
        if k0 < d - 1:
            r0, n, r1 = x.cores[k0].shape
            M = np.reshape(x.cores[k0], (r0 * n, r1), order="F")
            V = np.kron(np.eye(ctx["rest_after"]), M)
            c = xs - u_sub
            AkV = Ak @ V
            w = np.linalg.solve(V.T @ AkV, V.T @ (Ak @ c))
            Rc = V @ w
            denom = float(c @ (Ak @ c))
            frac = float(c @ (Ak @ Rc)) / denom if denom > 0 else 1.0
            self.omega.append(float(np.sqrt(min(max(1.0 - frac, 0.0), 1.0))))
        self._ctx = None


# the recorder needs the u-subtrain before the tail is rescaled by QR;
# hook into on_core_solved where the tail cores are still untouched
def _record_u_sub(rec: _RateRecorder, x: TTVector, k0: int, u_core: np.ndarray):
    if k0 < x.d - 1:
        rec._ctx["u_sub"] = subtrain_dense([u_core] + list(x.cores[k0 + 1 :]))


class _HookedRecorder:
    """Adapter wiring the dense rate recorder into the sweep hooks."""

    def __init__(self, rec: _RateRecorder):
        self.rec = rec
        self._x = None

    def on_sweep_start(self, x):
        self._x = x
        self.rec.on_sweep_start(x)

    def on_core_start(self, k0, x):
        self.rec.on_core_start(k0, x)

    def on_core_solved(self, k0, u_core):
        self.rec.on_core_solved(k0, u_core)
        _record_u_sub(self.rec, self._x, k0, u_core)

    def on_core_done(self, k0, x):
        self.rec.on_core_done(k0, x)


def instrumented_amen_run(
    A: TTMatrix,
    y: TTVector,
    sweeps: int = 3,
    kickrank: int = 2,
    enrichment: str = "svd",
    seed: int = 0,
    x0: Optional[TTVector] = None,
) -> RateReport:
    """Dense-instrumented sweeps measuring the per-core progress factors.

    Runs the standard sweep with exact (direct) local solves on a problem
    small enough to materialize, recording the energy after every local
    update, the measured progress ``mu_k``, and the projector angle
    ``omega_k`` of each finalized core.  With these definitions the measured
    per-sweep energy ratio matches the predicted rate exactly, up to
    round-off from the final core's direct solve.
    """
    A_dense = to_dense(A)
    y_dense = to_dense(y)
    lam_min, lam_max = _check_spd(A_dense)
    config = _amen.SolverConfig(
        tol=1e-14,
        max_sweeps=sweeps,
        kickrank=kickrank,
        enrichment=enrichment,
        local_solver="direct",
        max_direct_size=1 << 16,
        seed=seed,
    )
    rng = np.random.default_rng(seed)
    x = x0.copy() if x0 is not None else _amen._default_guess(A.col_sizes, rng)
    rec = _RateRecorder(A_dense, y_dense)
    hooked = _HookedRecorder(rec)
    report = RateReport(
        lambda_min=lam_min,
        lambda_max=lam_max,
        omega_bound=(lam_max - lam_min) / (lam_max + lam_min),
    )
    for _ in range(sweeps):
        x = orthogonalize(x, "right", 1)
        state = _amen.build_environments(A, y, x)
        ens = None
        if enrichment != "none":
            ens = _amen.EnrichmentState(enrichment, kickrank, rng=rng)
            ens.prepare_sweep(A, y, x)
        x, state, ens, _ = _amen.amen_sweep(x, A, y, state, ens, config, recorder=hooked)
        j_start = rec.sweep_start_j
        j_end = rec.j_trace[-1]
        ratio = j_end / j_start if j_start > 0 else 0.0
        # the last core's progress is absorbed by its exact solve
        phi = phi_d(np.clip(rec.mu[:-1], 0, 1), np.clip(rec.omega, 0, 1))
        report.sweeps.append(
            {
                "mu": list(rec.mu),
                "omega": list(rec.omega),
                "phi_sq": phi**2,
                "j_ratio": ratio,
                "identity_gap": abs(ratio - phi**2),
            }
        )
        if j_end <= 1e-24 * max(j_start, 1.0):
            break
    report.j_trace = list(rec.j_trace)
    diffs = np.diff(report.j_trace)
    scale = max(report.j_trace) if report.j_trace else 1.0
    report.max_violation = float(max(diffs.max(initial=0.0), 0.0) / max(scale, 1e-300))
    report.monotone = bool(report.max_violation <= 1e-10)
    return report


# ----------------------------------------------------------------------
# Randomized trial suites
# ----------------------------------------------------------------------

def random_spd(n: int, rng, cond: float = 100.0) -> np.ndarray:
    """Random SPD matrix with a log-uniform spectrum of condition ``cond``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lams = np.exp(rng.uniform(0, np.log(cond), size=n))
    return (Q * lams) @ Q.T


def random_well_conditioned(n: int, rng) -> np.ndarray:
    """I + 0.5 N with a random perturbation scaled to unit spectral norm."""
    N = rng.standard_normal((n, n))
    N /= np.linalg.norm(N, 2)
    return np.eye(n) + 0.5 * N


def run_kantorovich_check(trials: int = 100, n: int = 50, steps: int = 5, seed: int = 0) -> dict:
    """Check that every exact SD step contracts by at most the spectral bound."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    failures = 0
    for _ in range(trials):
        A = random_spd(n, rng)
        bound = kantorovich_bound(A)
        y = rng.standard_normal(n)
        x0 = rng.standard_normal(n)
        ratios = sd_run(A, y, x0, steps=steps)
        slack = float(np.max(ratios) - bound) if ratios.size else -bound
        worst = max(worst, slack)
        if slack > 1e-12:
            failures += 1
    return {
        "check": "kantorovich",
        "trials": trials,
        "failures": failures,
        "worst_slack": worst,
        "passed": failures == 0,
    }


def run_rate_check(trials: int = 3, seed: int = 0, tol: float = 1e-10) -> dict:
    """Instrumented small SPD runs: energy monotone, rate identity to ``tol``."""
    from .problems import PoissonSpec, build_poisson
    from .tt import ttmat_add, ttmat_identity

    rng = np.random.default_rng(seed)
    gaps = []
    monotone = True
    for t in range(trials):
        Aop, y = build_poisson(PoissonSpec(dimension=3, grid_points=4))
        shift = float(rng.uniform(0.5, 2.0))
        Aop = ttmat_add(Aop, ttmat_identity(Aop.row_sizes), 1.0, shift)
        rep = instrumented_amen_run(
            Aop, y, sweeps=2, kickrank=1, enrichment="svd", seed=seed + t
        )
        monotone = monotone and rep.monotone
        gaps.extend(s["identity_gap"] for s in rep.sweeps)
    worst = max(gaps) if gaps else 0.0
    return {
        "check": "rate",
        "trials": trials,
        "worst_identity_gap": worst,
        "monotone": monotone,
        "passed": monotone and worst <= tol,
    }


def run_fom_check(trials: int = 1000, n: int = 30, m: int = 6, seed: int = 0) -> dict:
    """Randomized one-step Galerkin bound checks on well-conditioned systems."""
    rng = np.random.default_rng(seed)
    violations = 0
    inapplicable = 0
    worst = -np.inf
    for _ in range(trials):
        A = random_well_conditioned(n, rng)
        V, _ = np.linalg.qr(rng.standard_normal((n, m)))
        # mix in-span and out-of-span components so eps varies over [0, 1)
        z = V @ rng.standard_normal(m) + rng.uniform(0, 1) * rng.standard_normal(n)
        rep = angle_quantities(A, V, z)
        if not rep.applicable:
            inapplicable += 1
            continue
        slack = rep.realized - rep.bound
        worst = max(worst, slack)
        if slack > 1e-10:
            violations += 1
    return {
        "check": "fom",
        "trials": trials,
        "inapplicable": inapplicable,
        "violations": violations,
        "worst_slack": worst,
        "passed": violations == 0,
    }
