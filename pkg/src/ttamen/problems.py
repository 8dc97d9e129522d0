"""Benchmark problem generators in TT form.

Covers the discrete high-dimensional Poisson operator, the cascade gene
regulatory chemical-master-equation generator, and the all-at-once time
stepping system (Crank-Nicolson or implicit Euler) with time as an extra
trailing mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tt import (
    TTMatrix,
    TTVector,
    tt_matvec,
    tt_ones,
    tt_round,
    tt_unit,
    ttmat_round,
)

__all__ = [
    "PoissonSpec",
    "CascadeCMESpec",
    "TimeSystemSpec",
    "build_poisson",
    "build_cme_operator",
    "build_time_system",
    "build_initial_state",
    "laplace_1d",
]


@dataclass
class PoissonSpec:
    """Homogeneous-Dirichlet finite difference Laplacian on [0,1]^d."""

    dimension: int
    grid_points: int = 64

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")


@dataclass
class CascadeCMESpec:
    """Cascade gene regulatory model: d species, states 0..n-1 per species."""

    species: int
    states: int = 64
    alpha0: float = 0.7
    delta: float = 0.07
    beta: float = 1.0
    gamma: float = 5.0

    def __post_init__(self):
        if self.species < 1:
            raise ValueError("species must be >= 1")
        if self.states < 2:
            raise ValueError("states must be >= 2")
        for name in ("alpha0", "delta", "beta", "gamma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class TimeSystemSpec:
    """All-at-once time discretization: tau step size, n_steps steps."""

    tau: float
    n_steps: int
    scheme: str = "crank_nicolson"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.scheme not in ("crank_nicolson", "implicit_euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def laplace_1d(n: int) -> np.ndarray:
    """Unscaled tridiag{-1, 2, -1} stencil with zero Dirichlet boundaries."""
    return (
        2.0 * np.eye(n)
        - np.eye(n, k=1)
        - np.eye(n, k=-1)
    )


def build_poisson(spec: PoissonSpec) -> tuple[TTMatrix, TTVector]:
    """Kronecker-sum Laplacian (interior TT operator ranks 2) and all-ones rhs."""
    d, n = spec.dimension, spec.grid_points
    L = laplace_1d(n)
    eye = np.eye(n)
    if d == 1:
        return TTMatrix([L[None, :, :, None]]), tt_ones([n])
    cores = []
    first = np.zeros((1, n, n, 2))
    first[0, :, :, 0] = L
    first[0, :, :, 1] = eye
    cores.append(first)
    for _ in range(d - 2):
        mid = np.zeros((2, n, n, 2))
        mid[0, :, :, 0] = eye
        mid[1, :, :, 0] = L
        mid[1, :, :, 1] = eye
        cores.append(mid)
    last = np.zeros((2, n, n, 1))
    last[0, :, :, 0] = eye
    last[1, :, :, 0] = L
    cores.append(last)
    return TTMatrix(cores), tt_ones([n] * d)


def _cme_mode_matrices(spec: CascadeCMESpec):
    n = spec.states
    counts = np.arange(n, dtype=float)
    # inflow shift: state i is fed from i-1; inflow from outside the window
    # (i-1 < 0 or i+1 >= n) is dropped, outflow is kept (sub-generator)
    shift = np.eye(n, k=-1)
    degrade = np.diag(counts[1:], k=1) - np.diag(counts)
    couple = np.diag(spec.beta * counts / (spec.beta * counts + spec.gamma))
    gen = spec.alpha0 * (shift - np.eye(n))
    return shift - np.eye(n), degrade, couple, gen


def build_cme_operator(spec: CascadeCMESpec) -> TTMatrix:
    """Generator A = A_1 + ... + A_d of the cascade model, TT ranks <= 3.

    A_1 carries constant generation (rate alpha0) and linear degradation
    (rate delta).  A_k for k >= 2 couples production on mode k to the
    occupation of mode k-1 through beta*i/(beta*i + gamma), plus degradation.
    """
    d, n = spec.species, spec.states
    prod_minus_id, degrade, couple, gen = _cme_mode_matrices(spec)
    eye = np.eye(n)
    g_first = gen + spec.delta * degrade
    g_local = spec.delta * degrade
    if d == 1:
        return TTMatrix([g_first[None, :, :, None]])
    cores = []
    first = np.zeros((1, n, n, 3))
    first[0, :, :, 0] = eye
    first[0, :, :, 1] = couple
    first[0, :, :, 2] = g_first
    cores.append(first)
    for _ in range(d - 2):
        mid = np.zeros((3, n, n, 3))
        mid[0, :, :, 0] = eye
        mid[0, :, :, 1] = couple
        mid[0, :, :, 2] = g_local
        mid[1, :, :, 2] = prod_minus_id
        mid[2, :, :, 2] = eye
        cores.append(mid)
    last = np.zeros((3, n, n, 1))
    last[0, :, :, 0] = g_local
    last[1, :, :, 0] = prod_minus_id
    last[2, :, :, 0] = eye
    cores.append(last)
    return TTMatrix(cores)


def build_time_system(
    A: TTMatrix, psi0: TTVector, tspec: TimeSystemSpec, round_tol: float = 1e-13
) -> tuple[TTMatrix, TTVector]:
    """Block-bidiagonal-in-time system with time appended as the last mode.

    The unknown stacks the states at t_1..t_{n_steps}.  Crank-Nicolson rows
    read ``(I - tau/2 A) x_m - (I + tau/2 A) x_{m-1} = 0`` with the initial
    state feeding the first row's right-hand side; implicit Euler uses
    ``(I - tau A)`` on the diagonal and the identity below it.
    """
    if A.col_sizes != psi0.mode_sizes:
        raise ValueError("operator and initial state sizes differ")
    tau, nt = tspec.tau, tspec.n_steps
    half = 0.5 * tau if tspec.scheme == "crank_nicolson" else tau
    eye_cores = [np.eye(n)[None, :, :, None] for n in A.row_sizes]

    def _shifted(scale):
        # I + scale*A with ranks R+1 (boundary concatenation)
        out = []
        for k, (ec, ac) in enumerate(zip(eye_cores, A.cores)):
            if A.d == 1:
                out.append(ec + scale * ac)
            elif k == 0:
                out.append(np.concatenate([ec, scale * ac], axis=3))
            elif k == A.d - 1:
                out.append(np.concatenate([ec, ac], axis=0))
            else:
                r0, n, m, r1 = ac.shape
                c = np.zeros((1 + r0, n, m, 1 + r1))
                c[0, :, :, 0] = ec[0, :, :, 0]
                c[1:, :, :, 1:] = ac
                out.append(c)
        return out

    p_cores = _shifted(-half)  # diagonal-in-time blocks
    q_scale = half if tspec.scheme == "crank_nicolson" else 0.0
    q_cores = _shifted(q_scale)  # sub-diagonal blocks (I for implicit Euler)

    time_eye = np.eye(nt)
    time_sub = np.eye(nt, k=-1)

    # M = P (x) I_t  -  Q (x) S_t, assembled by rank concatenation
    cores = []
    for k in range(A.d):
        pc, qc = p_cores[k], q_cores[k]
        rp0, n, m, rp1 = pc.shape
        rq0, _, _, rq1 = qc.shape
        if k == 0:
            c = np.concatenate([pc, qc], axis=3)
        else:
            c = np.zeros((rp0 + rq0, n, m, rp1 + rq1))
            c[:rp0, :, :, :rp1] = pc
            c[rp0:, :, :, rp1:] = qc
        cores.append(c)
    rp1 = p_cores[-1].shape[3]
    rq1 = q_cores[-1].shape[3]
    tcore = np.zeros((rp1 + rq1, nt, nt, 1))
    for b in range(rp1):
        tcore[b, :, :, 0] = time_eye
    for b in range(rq1):
        tcore[rp1 + b, :, :, 0] = -time_sub
    cores.append(tcore)
    M = ttmat_round(TTMatrix(cores), round_tol)

    rhs_space = tt_matvec(_q_matrix(q_cores), psi0)
    e0 = np.zeros((rhs_space.ranks[-1], nt, 1))
    e0[:, 0, 0] = 1.0
    b = TTVector(rhs_space.cores + [e0])
    return M, tt_round(b, round_tol)


def _q_matrix(q_cores) -> TTMatrix:
    return TTMatrix(q_cores)


def build_initial_state(spec: CascadeCMESpec) -> TTVector:
    """Rank-1 state with all species at occupation 0 (unit mass there)."""
    return tt_unit([spec.states] * spec.species)
