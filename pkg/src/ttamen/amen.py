"""Alternating solvers for TT-structured linear systems.

Provides the rank-adaptive AMEn solver with three residual-enrichment
back-ends (SVD, unfinished Cholesky, auxiliary low-rank ALS), plus the
fixed-rank one-site ALS and the two-site DMRG baselines.

Each sweep walks the cores left to right.  At core k the global system is
Galerkin-projected onto the frame spanned by all other cores, the small
local system is solved, and (except at the last core) the core basis is
expanded with a low-rank approximation of the local residual before the
left-orthogonality is recovered by QR.  Left/right partial contractions of
the operator and right-hand side against the iterate ("environments") make
each local assembly O(1) in the dimension.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .tt import (
    TTMatrix,
    TTVector,
    orthogonalize,
    tt_add,
    tt_matvec,
    tt_norm,
    tt_random,
    tt_round,
    ttmat_matmul,
    ttmat_round,
    ttmat_transpose,
)

__all__ = [
    "SolverConfig",
    "SweepState",
    "EnrichmentState",
    "ConvergenceLog",
    "SweepRecord",
    "LocalSizeError",
    "build_environments",
    "assemble_local",
    "solve_local",
    "exact_residual_core",
    "enrich_svd",
    "enrich_chol",
    "expand_and_orthogonalize",
    "amen_sweep",
    "amen_solve",
    "als_solve",
    "dmrg_solve",
    "symmetrize",
    "pivoted_cholesky",
    "vec_core",
    "unvec_core",
]


class LocalSizeError(RuntimeError):
    """Local system too large to assemble densely; use the iterative path."""


# ----------------------------------------------------------------------
# Configuration and logging
# ----------------------------------------------------------------------

@dataclass
class SolverConfig:
    """Options shared by the alternating solvers.

    ``tol`` is the relative Frobenius residual target.  ``enrichment``
    selects the residual approximation back-end for AMEn (``"svd"``,
    ``"chol"`` or ``"als"``); ``kickrank`` is the width of the basis
    expansion (the rank of the residual approximant).  Local systems up to
    ``max_direct_size`` unknowns are factorized directly, larger ones are
    handled matrix-free by GMRES at ``local_rtol`` (default ``tol/10``).
    """

    tol: float = 1e-5
    max_sweeps: int = 20
    kickrank: int = 4
    enrichment: str = "svd"
    local_solver: str = "auto"  # "auto" | "direct" | "iterative"
    local_rtol: Optional[float] = None
    local_maxiter: int = 400
    max_direct_size: int = 1500
    max_rank: Optional[int] = None
    residual_round_tol: Optional[float] = None  # default tol/100
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.kickrank < 1:
            raise ValueError("kickrank must be >= 1")
        if self.enrichment not in ("svd", "chol", "als", "none"):
            raise ValueError(f"unknown enrichment {self.enrichment!r}")
        if self.local_solver not in ("auto", "direct", "iterative"):
            raise ValueError(f"unknown local solver {self.local_solver!r}")

    @property
    def effective_local_rtol(self) -> float:
        return self.tol / 10 if self.local_rtol is None else self.local_rtol

    @property
    def effective_residual_round_tol(self) -> float:
        if self.residual_round_tol is None:
            return self.tol / 100
        return self.residual_round_tol


@dataclass
class SweepRecord:
    sweep: int
    wall_time: float
    rel_residual: float
    a_norm_error: Optional[float]
    max_rank: int
    local_converged: bool
    mu: list = field(default_factory=list)
    omega_surrogate: list = field(default_factory=list)
    omega_is_surrogate: bool = True
    notes: list = field(default_factory=list)


@dataclass
class ConvergenceLog:
    records: list = field(default_factory=list)
    status: str = "running"  # "converged" | "stalled" | "max_sweeps" | "running"
    stop_reason: Optional[str] = None

    @property
    def final_residual(self) -> float:
        return self.records[-1].rel_residual if self.records else np.inf


# ----------------------------------------------------------------------
# Core vectorization (Fortran order: left rank fastest, as in the TT layout)
# ----------------------------------------------------------------------

def vec_core(core: np.ndarray) -> np.ndarray:
    return np.ravel(core, order="F")


def unvec_core(v: np.ndarray, shape) -> np.ndarray:
    return np.reshape(v, shape, order="F")


def _unfold_first(block: np.ndarray) -> np.ndarray:
    """(r, n, w) -> (r*n, w) with the rank index fastest."""
    r, n, w = block.shape
    return np.reshape(block, (r * n, w), order="F")


# ----------------------------------------------------------------------
# Environments
# ----------------------------------------------------------------------

class SweepState:
    """Left/right partial contractions of (x, A, x) and (x, y) per position.

    ``left_op[k]`` contracts cores ``0..k-1``; ``right_op[k]`` contracts
    cores ``k+1..d-1``.  Both boundary environments are 1x1x1 identities.
    """

    def __init__(self, d: int):
        self.d = d
        self.left_op = [None] * d
        self.right_op = [None] * d
        self.left_rhs = [None] * d
        self.right_rhs = [None] * d
        self.left_op[0] = np.ones((1, 1, 1))
        self.left_rhs[0] = np.ones((1, 1))
        self.right_op[d - 1] = np.ones((1, 1, 1))
        self.right_rhs[d - 1] = np.ones((1, 1))
        self.pos = 0

    def advance_left(self, k: int, A: TTMatrix, y: TTVector, x: TTVector):
        """Absorb core k into the left environments (valid once core k is final)."""
        xc, ac, yc = x.cores[k], A.cores[k], y.cores[k]
        # (a,P,b),(a,i,c),(P,i,j,Q),(b,j,d) -> (c,Q,d) via BLAS-able pairings
        T = np.tensordot(self.left_op[k], xc, axes=(0, 0))  # (P,b,i,c)
        T = np.tensordot(T, ac, axes=([0, 2], [0, 1]))  # (b,c,j,Q)
        T = np.tensordot(xc, T, axes=([0, 1], [0, 2]))  # (d,c,Q)
        self.left_op[k + 1] = T.transpose(1, 2, 0)
        T = np.tensordot(self.left_rhs[k], xc, axes=(0, 0))  # (p,i,c)
        self.left_rhs[k + 1] = np.tensordot(T, yc, axes=([0, 1], [0, 1]))  # (c,q)
        self.pos = k + 1

    def advance_right(self, k: int, A: TTMatrix, y: TTVector, x: TTVector):
        """Absorb core k into the right environments."""
        xc, ac, yc = x.cores[k], A.cores[k], y.cores[k]
        T = np.tensordot(xc, self.right_op[k], axes=(2, 0))  # (a,i,Q,d)
        T = np.tensordot(T, ac, axes=([1, 2], [1, 3]))  # (a,d,P,j)
        self.right_op[k - 1] = np.tensordot(T, xc, axes=([1, 3], [2, 1]))  # (a,P,b)
        T = np.tensordot(xc, self.right_rhs[k], axes=(2, 0))  # (a,i,q)
        self.right_rhs[k - 1] = np.tensordot(T, yc, axes=([1, 2], [1, 2]))


def build_environments(A: TTMatrix, y: TTVector, x: TTVector) -> SweepState:
    """Populate all right environments; left ones start at identities."""
    if A.col_sizes != x.mode_sizes or A.row_sizes != y.mode_sizes:
        raise ValueError("operator / vector sizes are inconsistent")
    d = x.d
    state = SweepState(d)
    for k in range(d - 1, 0, -1):
        state.advance_right(k, A, y, x)
    return state


def assemble_local(
    state: SweepState,
    A: TTMatrix,
    y: TTVector,
    x: TTVector,
    k: int,
    max_size: Optional[int] = None,
):
    """Dense local system (B_k, b_k) at 1-based position k.

    Row/column ordering is the Fortran vectorization of the core, i.e. the
    left rank index fastest.  Raises :class:`LocalSizeError` when the local
    problem exceeds ``max_size`` unknowns (then the matrix-free path applies).
    """
    k0 = k - 1
    r0, n, r1 = x.cores[k0].shape
    N = r0 * n * r1
    cap = 1500 if max_size is None else max_size
    if N > cap:
        raise LocalSizeError(
            f"local system has {N} unknowns (> {cap}); use the iterative solver"
        )
    B = _local_matrix(state.left_op[k0], A.cores[k0], state.right_op[k0])
    b = _local_rhs(state.left_rhs[k0], y.cores[k0], state.right_rhs[k0])
    return B, b


def _local_matrix(L, Ac, R) -> np.ndarray:
    T = np.tensordot(L, Ac, axes=(1, 0))  # (a,b,i,j,Q)
    T = np.tensordot(T, R, axes=(4, 1))  # (a,b,i,j,c,d)
    N = L.shape[0] * Ac.shape[1] * R.shape[0]
    return np.ascontiguousarray(T.transpose(4, 2, 0, 5, 3, 1)).reshape(N, N)


def _local_rhs(Ly, yc, Ry) -> np.ndarray:
    t = np.tensordot(np.tensordot(Ly, yc, axes=(1, 0)), Ry, axes=(2, 1))
    return vec_core(t)


def _local_matvec(L, Ac, R, v_core) -> np.ndarray:
    return _LocalOperator(L, Ac, R).apply(v_core)


def solve_local(B: np.ndarray, b: np.ndarray, guess=None, config: Optional[SolverConfig] = None):
    """Direct dense solve with a least-squares fallback for singular systems.

    Returns ``(u, info)`` where ``info["fallback"]`` flags an ill-conditioned
    system solved in the least-squares sense.
    """
    info = {"fallback": False}
    try:
        u = np.linalg.solve(B, b)
        res = np.linalg.norm(b - B @ u)
        if not np.isfinite(res) or res > 1e-6 * max(np.linalg.norm(b), 1e-300):
            raise np.linalg.LinAlgError("inaccurate direct solve")
    except np.linalg.LinAlgError:
        u, *_ = np.linalg.lstsq(B, b, rcond=None)
        info["fallback"] = True
    return u, info


class _LocalOperator:
    """Matrix-free local operator with factors precontracted for GEMM speed."""

    def __init__(self, L, Ac, R):
        self.out_shape = (L.shape[0], Ac.shape[1], R.shape[0])
        self.in_shape = (L.shape[2], Ac.shape[2], R.shape[2])
        r0l, n, r1l = self.out_shape
        r0r, m, r1r = self.in_shape
        R1 = Ac.shape[3]
        M1 = np.einsum("aPb,PijQ->aiQbj", L, Ac, optimize=True)
        self._M1 = np.ascontiguousarray(M1.reshape(r0l * n * R1, r0r * m))
        self._M2 = np.ascontiguousarray(R.reshape(r1l, R1 * r1r))
        self._R1 = R1

    def apply(self, v_core: np.ndarray) -> np.ndarray:
        r0l, n, r1l = self.out_shape
        r0r, m, r1r = self.in_shape
        W = self._M1 @ v_core.reshape(r0r * m, r1r)
        W = W.reshape(r0l * n, self._R1 * r1r)
        return (W @ self._M2.T).reshape(r0l, n, r1l)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return vec_core(self.apply(unvec_core(v, self.in_shape)))

    def is_symmetric(self, rng=None) -> bool:
        # cheap randomized self-adjointness probe (square operators only)
        if self.in_shape != self.out_shape:
            return False
        rng = np.random.default_rng(0 if rng is None else rng)
        v = rng.standard_normal(self.in_shape)
        w = rng.standard_normal(self.in_shape)
        av = self.apply(v)
        aw = self.apply(w)
        s1 = float(np.tensordot(w, av, axes=3))
        s2 = float(np.tensordot(v, aw, axes=3))
        scale = max(np.linalg.norm(av.ravel()) * np.linalg.norm(w.ravel()), 1e-300)
        return abs(s1 - s2) <= 1e-10 * scale


def _solve_local_iterative(L, Ac, R, b, guess, rtol, maxiter):
    loc = _LocalOperator(L, Ac, R)
    N = b.size
    op = spla.LinearOperator((N, N), matvec=loc.matvec)
    info = {"fallback": False}
    if loc.is_symmetric():
        u, code = spla.cg(op, b, x0=guess, rtol=rtol, atol=0.0, maxiter=maxiter)
        info["cg_info"] = int(code)
        if code == 0:
            return u, info
        guess = u  # fall through to gmres from the partial solution
    u, code = spla.gmres(
        op,
        b,
        x0=guess,
        rtol=rtol,
        atol=0.0,
        maxiter=maxiter,
        restart=min(N, 200),
    )
    info["gmres_info"] = int(code)
    return u, info


# ----------------------------------------------------------------------
# Exact residual in TT block form
# ----------------------------------------------------------------------

def _residual_right_block(A: TTMatrix, y: TTVector, x: TTVector, p: int, last: bool):
    """Block p of the exact local residual chain (0-based p >= 1).

    Block-diagonal pairing of the rhs core with the operator-times-iterate
    core; at the last position the two column blocks collapse to rank 1.
    """
    yc = y.cores[p]
    ac, xc = A.cores[p], x.cores[p]
    R0, n, _, R1 = ac.shape
    r0, _, r1 = xc.shape
    ax = np.tensordot(ac, xc, axes=(2, 1))  # (P,i,Q,b,d)
    ax = np.ascontiguousarray(ax.transpose(0, 3, 1, 2, 4)).reshape(
        R0 * r0, n, R1 * r1
    )
    ry0, _, ry1 = yc.shape
    if last:
        return np.concatenate([yc, ax], axis=0)
    block = np.zeros((ry0 + R0 * r0, n, ry1 + R1 * r1))
    block[:ry0, :, :ry1] = yc
    block[ry0:, :, ry1:] = ax
    return block


def _residual_first_block(state: SweepState, A, y, u_core, k0: int) -> np.ndarray:
    """Step-dependent head block of the exact local residual at core k0."""
    yc = y.cores[k0]
    y_part = np.tensordot(state.left_rhs[k0], yc, axes=(1, 0))  # (a,i,q)
    T = np.tensordot(state.left_op[k0], A.cores[k0], axes=(1, 0))  # (a,b,i,j,Q)
    a_part = np.tensordot(T, u_core, axes=([1, 3], [0, 1]))  # (a,i,Q,c)
    r0, n = a_part.shape[0], a_part.shape[1]
    a_part = a_part.reshape(r0, n, -1)
    return np.concatenate([y_part, -a_part], axis=2)


def exact_residual_core(state: SweepState, A, y, x, u_core, k: int):
    """Exact TT factors of the local residual at 1-based position k.

    Returns ``(head, tails)``: ``head`` is the only block that depends on the
    freshly solved core, ``tails`` are the blocks for positions k+1..d built
    from data available before the step.
    """
    k0 = k - 1
    head = _residual_first_block(state, A, y, u_core, k0)
    d = x.d
    tails = [
        _residual_right_block(A, y, x, p, last=(p == d - 1))
        for p in range(k0 + 1, d)
    ]
    return head, tails


def _gram_tails(blocks: list) -> list:
    """E[j] = Gram matrix of the chain blocks[j:], contracted right to left."""
    m = len(blocks)
    E = [None] * (m + 1)
    E[m] = np.ones((1, 1))
    for j in range(m - 1, -1, -1):
        T = np.tensordot(blocks[j], E[j + 1], axes=(2, 0))  # (a,i,d)
        E[j] = np.tensordot(T, blocks[j], axes=([1, 2], [1, 2]))  # (a,c)
    return E


def _psd_sqrt(G: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(G)
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)


def pivoted_cholesky(G: np.ndarray, max_rank: int, indefinite_tol: float = 1e-10):
    """Rank-truncated pivoted Cholesky of a (near) PSD Gram matrix.

    Pivots on the largest remaining diagonal entry (ties -> lowest index) and
    stops at ``max_rank`` columns, at numerical rank exhaustion, or when a
    pivot drops below ``-indefinite_tol * trace``.
    Returns the factor ``L`` with ``L @ L.T ~= G`` (on the achieved width).
    """
    n = G.shape[0]
    diag = np.diag(G).astype(float).copy()
    trace0 = max(float(np.sum(np.clip(diag, 0, None))), 0.0)
    L = np.zeros((n, min(max_rank, n)))
    width = 0
    for j in range(min(max_rank, n)):
        i = int(np.argmax(diag))
        dmax = diag[i]
        if dmax < -indefinite_tol * max(trace0, 1e-300):
            break
        if dmax <= 1e-12 * max(trace0, 1e-300):
            break
        col = G[:, i] - L[:, :j] @ L[i, :j]
        L[:, j] = col / np.sqrt(dmax)
        diag -= L[:, j] ** 2
        diag[i] = 0.0
        width += 1
    return L[:, :width]


def enrich_svd(head: np.ndarray, gram_tail: np.ndarray, kickrank: int):
    """Dominant left singular subspace of the local residual's first unfolding.

    ``gram_tail`` is the Gram matrix of the right residual chain; replacing
    the chain by any factor with the same Gram matrix leaves the left singular
    subspace unchanged.
    """
    M = _unfold_first(head)
    C = _psd_sqrt(gram_tail)
    U, s, _ = np.linalg.svd(M @ C, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        return None, {"sigma": s, "width": 0}
    width = min(kickrank, int(np.sum(s > 1e-14 * s[0])))
    if width == 0:
        return None, {"sigma": s, "width": 0}
    r0, n, _ = head.shape
    Z = unvec_core(U[:, :width].ravel(order="F"), (r0, n, width))
    return Z, {"sigma": s, "width": width}


def enrich_chol(head: np.ndarray, gram_tail: np.ndarray, kickrank: int):
    """Approximate dominant subspace via pivoted Cholesky of the Gram matrix."""
    M = _unfold_first(head)
    G = M @ gram_tail @ M.T
    L = pivoted_cholesky(G, kickrank)
    if L.shape[1] == 0:
        return None, {"width": 0, "captured": 0.0, "total": float(np.trace(G))}
    Q, _ = np.linalg.qr(L)
    r0, n, _ = head.shape
    Z = unvec_core(Q.ravel(order="F"), (r0, n, Q.shape[1]))
    info = {
        "width": Q.shape[1],
        "captured": float(np.sum(L**2)),
        "total": float(np.trace(G)),
    }
    return Z, info


# ----------------------------------------------------------------------
# Enrichment state
# ----------------------------------------------------------------------

class EnrichmentState:
    """Per-sweep caches for the residual-enrichment back-ends.

    For the SVD and Cholesky methods this holds the right residual blocks and
    their Gram contractions; for the ALS method it additionally maintains the
    persistent rank-``kickrank`` residual approximant and the cross
    environments needed for its one-core-per-step update.
    """

    def __init__(self, method: str, kickrank: int, rng=None):
        if method not in ("svd", "chol", "als"):
            raise ValueError(f"unknown enrichment method {method!r}")
        self.method = method
        self.kickrank = kickrank
        self.rng = np.random.default_rng(rng)
        self.residual_tt: Optional[TTVector] = None
        self.notices: list[str] = []
        self._tails = None
        self._gram = None
        self._W = None
        self._Rzy = None
        self._Rza = None
        self._Lzy = None
        self._Lza = None

    # -- sweep preparation -------------------------------------------------

    def prepare_sweep(self, A: TTMatrix, y: TTVector, x: TTVector):
        d = x.d
        self._tails = [None] * d
        for p in range(1, d):
            self._tails[p] = _residual_right_block(A, y, x, p, last=(p == d - 1))
        if self.method in ("svd", "chol"):
            E = _gram_tails(self._tails[1:])
            # gram keyed by 1-based position of the first tail block
            self._gram = {p: E[p - 1] for p in range(1, d + 1)}
            return
        # ALS: make sure the residual approximant exists and is right-orthogonal
        z = self.residual_tt
        if z is None or z.mode_sizes != y.mode_sizes:
            z = tt_random(y.mode_sizes, self.kickrank, rng=self.rng)
        z = orthogonalize(z, "right", 1)
        nrm = float(np.linalg.norm(z.cores[0]))
        if nrm > 0:
            z.cores[0] /= nrm
        self.residual_tt = z
        self._W = [None] * (d + 1)
        self._W[d] = np.ones((1, 1))
        for p in range(d - 1, 0, -1):
            T = np.tensordot(self._tails[p], self._W[p + 1], axes=(2, 0))  # (a,i,h)
            self._W[p] = np.tensordot(T, z.cores[p], axes=([1, 2], [1, 2]))  # (a,g)
        self._Rzy = [None] * d
        self._Rza = [None] * d
        self._Rzy[d - 1] = np.ones((1, 1))
        self._Rza[d - 1] = np.ones((1, 1, 1))
        for p in range(d - 1, 0, -1):
            zc, yc, ac, xc = z.cores[p], y.cores[p], A.cores[p], x.cores[p]
            T = np.tensordot(zc, self._Rzy[p], axes=(2, 0))  # (g,i,q)
            self._Rzy[p - 1] = np.tensordot(T, yc, axes=([1, 2], [1, 2]))  # (g,p)
            T = np.tensordot(zc, self._Rza[p], axes=(2, 0))  # (g,i,Q,b)
            T = np.tensordot(T, ac, axes=([1, 2], [1, 3]))  # (g,b,P,j)
            self._Rza[p - 1] = np.tensordot(T, xc, axes=([1, 3], [2, 1]))  # (g,P,a)
        self._Lzy = np.ones((1, 1))
        self._Lza = np.ones((1, 1, 1))

    # -- per-step enrichment ----------------------------------------------

    def enrich(self, state: SweepState, A, y, x, u_core, k0: int):
        """Enrichment block for 0-based core k0 (< d-1); may update z-tilde."""
        head = _residual_first_block(state, A, y, u_core, k0)
        if self.method == "svd":
            return enrich_svd(head, self._gram[k0 + 1], self.kickrank)
        if self.method == "chol":
            return enrich_chol(head, self._gram[k0 + 1], self.kickrank)
        return self._enrich_als(state, A, y, x, u_core, k0, head)

    def _enrich_als(self, state, A, y, x, u_core, k0, head):
        M = _unfold_first(head)
        W = self._W[k0 + 1]
        proj = M @ W
        r0, n, _ = head.shape
        pnorm = np.linalg.norm(proj)
        Z = None
        width = 0
        if pnorm > 0:
            # drop numerically null directions so ranks do not grow idly
            U, s, _ = np.linalg.svd(proj, full_matrices=False)
            width = int(np.sum(s > 1e-14 * s[0]))
            if width > 0:
                Z = unvec_core(U[:, :width].ravel(order="F"), (r0, n, width))
        info = {"width": width, "proj_norm": float(pnorm)}
        self._update_residual_core(state, A, y, u_core, k0)
        return Z, info

    def _update_residual_core(self, state, A, y, u_core, k0):
        """One ALS step for z-tilde: project the current global residual."""
        z = self.residual_tt
        pos = np.tensordot(
            np.tensordot(self._Lzy, y.cores[k0], axes=(1, 0)),
            self._Rzy[k0],
            axes=(2, 1),
        )  # (g,i,h)
        T = np.tensordot(self._Lza, A.cores[k0], axes=(1, 0))  # (g,a,i,j,Q)
        T = np.tensordot(T, u_core, axes=([1, 3], [0, 1]))  # (g,i,Q,b)
        neg = np.tensordot(T, self._Rza[k0], axes=([2, 3], [1, 2]))  # (g,i,h)
        z_new = pos - neg
        nrm = np.linalg.norm(z_new)
        if nrm <= 1e-300:
            g0, n, g1 = z.cores[k0].shape
            z_new = self.rng.standard_normal((g0, n, g1))
            self.notices.append(
                f"residual approximant core {k0 + 1} degenerated; reinitialized"
            )
        # keep the left part of z-tilde orthonormal for the next projection
        g0, n, g1 = z_new.shape
        Q, _ = np.linalg.qr(z_new.reshape(g0 * n, g1))
        z.cores[k0] = Q.reshape(g0, n, -1)
        z.ortho = None

    def advance(self, A, y, x, k0: int):
        """Advance the ALS cross environments past the finalized core k0."""
        if self.method != "als":
            return
        z = self.residual_tt
        T = np.tensordot(self._Lzy, z.cores[k0], axes=(0, 0))  # (p,i,h)
        self._Lzy = np.tensordot(T, y.cores[k0], axes=([0, 1], [0, 1]))  # (h,q)
        T = np.tensordot(self._Lza, z.cores[k0], axes=(0, 0))  # (P,a,i,h)
        T = np.tensordot(T, A.cores[k0], axes=([0, 2], [0, 1]))  # (a,h,j,Q)
        self._Lza = np.tensordot(T, x.cores[k0], axes=([0, 2], [0, 1]))  # (h,Q,b)


# ----------------------------------------------------------------------
# Basis expansion
# ----------------------------------------------------------------------

def expand_and_orthogonalize(x: TTVector, k: int, Z: Optional[np.ndarray]) -> TTVector:
    """Widen core k (1-based) by Z, zero-pad core k+1, recover orthogonality.

    The represented vector is unchanged: the appended columns multiply zero
    rows of the next core, and the QR factor is absorbed rightwards.
    """
    if not 1 <= k < x.d:
        raise ValueError(f"expansion position {k} must be in [1, d-1]")
    out = x.copy()
    _expand(out.cores, k - 1, Z)
    out.ortho = None
    return out


def _expand(cores: list, k0: int, Z: Optional[np.ndarray]):
    if Z is not None and Z.shape[2] > 0:
        cores[k0] = np.concatenate([cores[k0], Z], axis=2)
        pad = np.zeros((Z.shape[2],) + cores[k0 + 1].shape[1:])
        cores[k0 + 1] = np.concatenate([cores[k0 + 1], pad], axis=0)
    _qr_push(cores, k0)


def _qr_push(cores: list, k0: int):
    r0, n, r1 = cores[k0].shape
    Q, Rf = np.linalg.qr(cores[k0].reshape(r0 * n, r1))
    cores[k0] = Q.reshape(r0, n, -1)
    cores[k0 + 1] = np.einsum("ab,bnc->anc", Rf, cores[k0 + 1])


# ----------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------

def _solve_core(state, A, y, x, k0, config):
    """Solve the local system at core k0; returns (u_core, stats_entry)."""
    r0, n, r1 = x.cores[k0].shape
    N = r0 * n * r1
    guess = vec_core(x.cores[k0])
    use_direct = config.local_solver == "direct" or (
        config.local_solver == "auto" and N <= config.max_direct_size
    )
    L, Ac, R = state.left_op[k0], A.cores[k0], state.right_op[k0]
    b = _local_rhs(state.left_rhs[k0], y.cores[k0], state.right_rhs[k0])
    bnorm = np.linalg.norm(b)
    scale = bnorm if bnorm > 0 else 1.0
    if use_direct:
        B = _local_matrix(L, Ac, R)
        res_before = np.linalg.norm(b - B @ guess) / scale
        u, info = solve_local(B, b, guess, config)
        res_after = np.linalg.norm(b - B @ u) / scale
    else:
        res_before = (
            np.linalg.norm(b - vec_core(_local_matvec(L, Ac, R, x.cores[k0]))) / scale
        )
        u, info = _solve_local_iterative(
            L, Ac, R, b, guess, config.effective_local_rtol, config.local_maxiter
        )
        u_core = unvec_core(u, (r0, n, r1))
        res_after = np.linalg.norm(b - vec_core(_local_matvec(L, Ac, R, u_core))) / scale
    mu = res_after / res_before if res_before > 0 else 1.0
    entry = {
        "k": k0 + 1,
        "local_res_before": float(res_before),
        "local_res_after": float(res_after),
        "mu": float(min(mu, 1.0) if np.isfinite(mu) else 1.0),
        "fallback": info.get("fallback", False),
    }
    return unvec_core(u, (r0, n, r1)), entry


def amen_sweep(
    x: TTVector,
    A: TTMatrix,
    y: TTVector,
    state: SweepState,
    ens: Optional[EnrichmentState],
    config: SolverConfig,
    recorder=None,
):
    """One left-to-right AMEn pass; returns (x, state, ens, per-core stats).

    Expects ``x`` right-orthogonal from position 2 with fresh environments
    and, when ``ens`` is given, ``ens.prepare_sweep`` already called.
    """
    x = x.copy()
    d = x.d
    stats = []
    if recorder is not None:
        recorder.on_sweep_start(x)
    for k0 in range(d):
        if recorder is not None:
            recorder.on_core_start(k0, x)
        u_core, entry = _solve_core(state, A, y, x, k0, config)
        if recorder is not None:
            recorder.on_core_solved(k0, u_core)
        x.cores[k0] = u_core
        if k0 < d - 1:
            Z = None
            if ens is not None:
                Z, einfo = ens.enrich(state, A, y, x, u_core, k0)
                entry["enrich_width"] = einfo.get("width", 0)
                entry["omega_surrogate"] = _omega_surrogate(ens.method, einfo)
                if Z is not None and config.max_rank is not None:
                    room = config.max_rank - x.cores[k0].shape[2]
                    if room <= 0:
                        Z = None
                    elif Z.shape[2] > room:
                        Z = Z[:, :, :room]
            _expand(x.cores, k0, Z)
            state.advance_left(k0, A, y, x)
            if ens is not None:
                ens.advance(A, y, x, k0)
        if recorder is not None:
            recorder.on_core_done(k0, x)
        stats.append(entry)
    x.ortho = ("left_upto", d - 1)
    return x, state, ens, stats


def _omega_surrogate(method: str, einfo: dict) -> Optional[float]:
    if method == "svd":
        s = einfo.get("sigma")
        if s is None or s.size == 0:
            return None
        total = float(np.sum(s**2))
        if total == 0:
            return 0.0
        captured = float(np.sum(s[: einfo["width"]] ** 2))
        return float(np.sqrt(max(0.0, 1.0 - captured / total)))
    if method == "chol":
        total = einfo.get("total", 0.0)
        if total <= 0:
            return 0.0
        return float(np.sqrt(max(0.0, 1.0 - einfo.get("captured", 0.0) / total)))
    return None


# ----------------------------------------------------------------------
# Drivers
# ----------------------------------------------------------------------

def _default_guess(mode_sizes, rng) -> TTVector:
    x = tt_random(mode_sizes, 1, rng=rng)
    x = orthogonalize(x, "right", 1)
    nrm = float(np.linalg.norm(x.cores[0]))
    if nrm > 0:
        x.cores[0] /= nrm
    return x


def _global_residual(A, y, x, round_tol) -> float:
    r = tt_add(y, tt_matvec(A, x), 1.0, -1.0)
    r = tt_round(r, round_tol)
    return tt_norm(r)


def _run_alternating(A, y, x0, config, make_ens, sweep_fn):
    rng = np.random.default_rng(config.seed)
    x = x0.copy() if x0 is not None else _default_guess(A.col_sizes, rng)
    ynorm = tt_norm(y)
    yscale = ynorm if ynorm > 0 else 1.0
    log = ConvergenceLog()
    ens = make_ens(rng)
    t0 = time.perf_counter()
    for sweep in range(config.max_sweeps):
        x = orthogonalize(x, "right", 1)
        state = build_environments(A, y, x)
        if ens is not None:
            ens.prepare_sweep(A, y, x)
        x, stats = sweep_fn(x, A, y, state, ens)
        rel = _global_residual(A, y, x, config.effective_residual_round_tol) / yscale
        local_conv = all(
            s["local_res_before"] <= config.tol for s in stats
        )
        rec = SweepRecord(
            sweep=sweep + 1,
            wall_time=time.perf_counter() - t0,
            rel_residual=float(rel),
            a_norm_error=None,
            max_rank=max(x.ranks),
            local_converged=local_conv,
            mu=[s["mu"] for s in stats],
            omega_surrogate=[s.get("omega_surrogate") for s in stats],
        )
        if ens is not None and ens.notices:
            rec.notes.extend(ens.notices)
            ens.notices = []
        log.records.append(rec)
        if rel <= config.tol:
            log.status = "converged"
            log.stop_reason = "residual"
            break
        if local_conv:
            # every local system was already solved on entry: the sweep made
            # no progress, so further sweeps cannot reduce the residual
            log.status = "converged" if rel <= config.tol else "stalled"
            log.stop_reason = "local_criterion"
            break
    else:
        log.status = "max_sweeps"
        log.stop_reason = "max_sweeps"
    return x, log


def amen_solve(
    A: TTMatrix,
    y: TTVector,
    x0: Optional[TTVector] = None,
    config: Optional[SolverConfig] = None,
):
    """Rank-adaptive AMEn solve of ``A x = y``.

    Runs left-to-right sweeps (re-orthogonalizing in between) until the global
    relative residual reaches ``config.tol``, the local stopping criterion
    fires, or ``max_sweeps`` is exhausted.  Never raises on non-convergence;
    the status is in the returned log.
    """
    config = config or SolverConfig()
    method = config.enrichment

    def make_ens(rng):
        if method == "none":
            return None
        return EnrichmentState(method, config.kickrank, rng=rng)

    def sweep_fn(x, A_, y_, state, ens):
        x, _, _, stats = amen_sweep(x, A_, y_, state, ens, config)
        return x, stats

    return _run_alternating(A, y, x0, config, make_ens, sweep_fn)


def als_solve(
    A: TTMatrix,
    y: TTVector,
    x0: Optional[TTVector] = None,
    config: Optional[SolverConfig] = None,
):
    """Fixed-rank one-site baseline: the AMEn sweep with enrichment disabled."""
    config = config or SolverConfig()

    def sweep_fn(x, A_, y_, state, ens):
        x, _, _, stats = amen_sweep(x, A_, y_, state, None, config)
        return x, stats

    return _run_alternating(A, y, x0, config, lambda rng: None, sweep_fn)


def dmrg_solve(
    A: TTMatrix,
    y: TTVector,
    x0: Optional[TTVector] = None,
    config: Optional[SolverConfig] = None,
):
    """Two-site baseline: merged neighboring cores, SVD split at ``tol``."""
    config = config or SolverConfig()
    if A.d < 2:
        return amen_solve(A, y, x0, config)

    def sweep_fn(x, A_, y_, state, ens):
        return _dmrg_sweep(x, A_, y_, state, config)

    return _run_alternating(A, y, x0, config, lambda rng: None, sweep_fn)


def _dmrg_sweep(x, A, y, state, config):
    x = x.copy()
    d = x.d
    stats = []
    for k0 in range(d - 1):
        u, entry = _solve_two_site(state, A, y, x, k0, config)
        r0, n1, _ = x.cores[k0].shape
        _, n2, r2 = x.cores[k0 + 1].shape
        W = unvec_core(u, (r0, n1, n2, r2))
        M = W.reshape(r0 * n1, n2 * r2, order="F")
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        snorm = np.linalg.norm(s)
        budget = config.tol * snorm / np.sqrt(max(d - 1, 1))
        tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]
        keep = max(int(np.searchsorted(-tail, -budget)), 1)
        if config.max_rank is not None:
            keep = min(keep, config.max_rank)
        x.cores[k0] = U[:, :keep].reshape(r0, n1, keep, order="F")
        x.cores[k0 + 1] = (s[:keep, None] * Vt[:keep]).reshape(
            keep, n2, r2, order="F"
        )
        state.advance_left(k0, A, y, x)
        stats.append(entry)
    x.ortho = ("left_upto", d - 1)
    return x, stats


def _merge_op_cores(A1: np.ndarray, A2: np.ndarray) -> np.ndarray:
    """Contract two neighboring operator cores into one with fused modes.

    The fused row index pairs (i,k) with i fastest, matching the Fortran
    vectorization of a merged two-site block; likewise for columns.
    """
    RP, n1, m1, _ = A1.shape
    _, n2, m2, RS = A2.shape
    T = np.tensordot(A1, A2, axes=(3, 0))  # (P,i,j,k,l,S)
    T = T.transpose(0, 3, 1, 4, 2, 5)  # (P,k,i,l,j,S)
    return np.ascontiguousarray(T).reshape(RP, n1 * n2, m1 * m2, RS)


def _merge_vec_cores(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    p, n1, _ = y1.shape
    _, n2, q = y2.shape
    T = np.tensordot(y1, y2, axes=(2, 0))  # (p,i,k,q)
    return np.ascontiguousarray(T.transpose(0, 2, 1, 3)).reshape(p, n1 * n2, q)


def _solve_two_site(state, A, y, x, k0, config):
    c1, c2 = x.cores[k0], x.cores[k0 + 1]
    r0, n1, _ = c1.shape
    _, n2, r2 = c2.shape
    N = r0 * n1 * n2 * r2
    L, R = state.left_op[k0], state.right_op[k0 + 1]
    A12 = _merge_op_cores(A.cores[k0], A.cores[k0 + 1])
    y12 = _merge_vec_cores(y.cores[k0], y.cores[k0 + 1])
    b = _local_rhs(state.left_rhs[k0], y12, state.right_rhs[k0 + 1])
    bnorm = np.linalg.norm(b)
    scale = bnorm if bnorm > 0 else 1.0
    merged = np.tensordot(c1, c2, axes=(2, 0)).transpose(0, 2, 1, 3)
    guess = vec_core(np.ascontiguousarray(merged).reshape(r0, n1 * n2, r2))
    use_direct = config.local_solver == "direct" or (
        config.local_solver == "auto" and N <= config.max_direct_size
    )
    if use_direct:
        B = _local_matrix(L, A12, R)
        res_before = np.linalg.norm(b - B @ guess) / scale
        u, info = solve_local(B, b, guess, config)
        res_after = np.linalg.norm(b - B @ u) / scale
    else:
        loc = _LocalOperator(L, A12, R)
        res_before = np.linalg.norm(b - loc.matvec(guess)) / scale
        u, info = _solve_local_iterative(
            L, A12, R, b, guess, config.effective_local_rtol, config.local_maxiter
        )
        res_after = np.linalg.norm(b - loc.matvec(u)) / scale
    mu = res_after / res_before if res_before > 0 else 1.0
    entry = {
        "k": k0 + 1,
        "local_res_before": float(res_before),
        "local_res_after": float(res_after),
        "mu": float(min(mu, 1.0) if np.isfinite(mu) else 1.0),
    }
    return u, entry


# ----------------------------------------------------------------------
# Symmetrization
# ----------------------------------------------------------------------

def symmetrize(
    A: TTMatrix,
    y: TTVector,
    round_tol: Optional[float] = None,
    rank_cap: int = 4096,
):
    """Normal equations ``(A^T A) x = A^T y``; operator ranks square.

    Raises if the squared ranks exceed ``rank_cap`` and no ``round_tol`` is
    given to compress them.
    """
    worst = max(r * r for r in A.ranks)
    if worst > rank_cap and round_tol is None:
        raise ValueError(
            f"normal-equation ranks reach {worst} (> {rank_cap}); "
            "pass round_tol to compress the product"
        )
    At = ttmat_transpose(A)
    AtA = ttmat_matmul(At, A)
    Aty = tt_matvec(At, y)
    if round_tol is not None:
        AtA = ttmat_round(AtA, round_tol)
        Aty = tt_round(Aty, round_tol)
    return AtA, Aty
