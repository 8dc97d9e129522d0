"""Tensor-train (TT) vectors, operators, and their multilinear algebra.

A TT vector of a d-dimensional array uses order-3 cores ``G[k]`` with shape
``(r[k-1], n[k], r[k])`` and boundary ranks ``r[0] = r[d] = 1``.  A TT
operator (matrix with Kronecker structure) uses order-4 cores with shape
``(R[k-1], n[k], m[k], R[k])``.

Vectorization is little-endian throughout: the first mode index runs fastest,
``f = i1 + i2*n1 + i3*n1*n2 + ...`` (0-based internally; the public
``flat_index``/``multi_index`` helpers follow the 1-based convention of their
defining formula).  Combined rank/mode indices such as the row index
``(alpha, i)`` of a core unfolding are ordered the same way, with ``alpha``
fastest, which corresponds to Fortran-order reshapes of the core arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "TTVector",
    "TTMatrix",
    "MultiIndex",
    "DenseSizeError",
    "DEFAULT_DENSE_CAP",
    "flat_index",
    "multi_index",
    "eval_entry",
    "to_dense",
    "interface_matrix",
    "frame_matrix",
    "orthogonalize",
    "tt_round",
    "tt_add",
    "tt_matvec",
    "tt_dot",
    "tt_norm",
    "qtt_quantize",
    "tt_random",
    "tt_ones",
    "tt_unit",
    "ttmat_random",
    "ttmat_identity",
    "ttmat_from_factors",
    "ttmat_add",
    "ttmat_transpose",
    "ttmat_matmul",
    "ttmat_round",
    "ttmat_to_tt",
    "tt_from_ttmat_layout",
    "kron_le",
]

#: Refuse to densify anything larger than this many entries unless overridden.
DEFAULT_DENSE_CAP = 2**24


class DenseSizeError(ValueError):
    """Raised when a dense materialization would exceed the configured cap."""


def _as_core(a) -> np.ndarray:
    core = np.asarray(a, dtype=np.float64)
    return core


class TTVector:
    """A vector of length ``prod(mode_sizes)`` stored as a chain of cores.

    Parameters
    ----------
    cores : sequence of ndarray
        Core ``k`` has shape ``(r[k-1], n[k], r[k])``; ``r[0] = r[d] = 1``.
    ortho : None or tuple
        Orthogonality tag: ``None``, ``("left_upto", p)`` meaning cores
        ``1..p`` (1-based) have orthonormal columns in their
        ``(r[k-1]*n[k], r[k])`` unfolding, or ``("right_from", p)`` meaning
        cores ``p..d`` have orthonormal rows in their ``(r[k-1], n[k]*r[k])``
        unfolding.
    """

    def __init__(self, cores: Sequence[np.ndarray], ortho=None):
        cores = [_as_core(c) for c in cores]
        if not cores:
            raise ValueError("a TT vector needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {k} is not order-3 (shape {c.shape})")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {k} and {k + 1}: "
                    f"{cores[k].shape[2]} vs {cores[k + 1].shape[0]}"
                )
        self.cores = cores
        self.ortho = ortho

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def size(self) -> int:
        return int(np.prod([c.shape[1] for c in self.cores], dtype=np.int64))

    def copy(self) -> "TTVector":
        return TTVector([c.copy() for c in self.cores], ortho=self.ortho)

    def __repr__(self):
        return (
            f"TTVector(d={self.d}, mode_sizes={self.mode_sizes}, "
            f"ranks={self.ranks}, ortho={self.ortho})"
        )


class TTMatrix:
    """A Kronecker-structured operator stored as a chain of order-4 cores."""

    def __init__(self, cores: Sequence[np.ndarray]):
        cores = [_as_core(c) for c in cores]
        if not cores:
            raise ValueError("a TT matrix needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 4:
                raise ValueError(f"core {k} is not order-4 (shape {c.shape})")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ValueError("boundary ranks must be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[3] != cores[k + 1].shape[0]:
                raise ValueError(f"rank mismatch between cores {k} and {k + 1}")
        self.cores = cores

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def row_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[2] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[3] for c in self.cores)

    def copy(self) -> "TTMatrix":
        return TTMatrix([c.copy() for c in self.cores])

    def __repr__(self):
        return (
            f"TTMatrix(d={self.d}, row_sizes={self.row_sizes}, "
            f"col_sizes={self.col_sizes}, ranks={self.ranks})"
        )


# ----------------------------------------------------------------------
# Multi-indexing
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MultiIndex:
    """A 1-based multi-index ``(i_1, ..., i_d)`` with an endianness flag."""

    indices: tuple[int, ...]
    endianness: str = "little"

    def __post_init__(self):
        if self.endianness not in ("little", "big"):
            raise ValueError(f"unknown endianness {self.endianness!r}")
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))


def _check_bounds(indices, sizes):
    if len(indices) != len(sizes):
        raise IndexError(f"index length {len(indices)} != {len(sizes)} modes")
    for k, (i, n) in enumerate(zip(indices, sizes)):
        if not 1 <= i <= n:
            raise IndexError(f"index {i} out of range [1, {n}] at mode {k + 1}")


def flat_index(mi, sizes) -> int:
    """Map a 1-based multi-index to its 1-based flat index.

    Little-endian: ``f = i1 + (i2-1)*n1 + ... + (id-1)*n1*...*n(d-1)``.
    """
    if isinstance(mi, MultiIndex):
        indices, endianness = mi.indices, mi.endianness
    else:
        indices, endianness = tuple(mi), "little"
    sizes = tuple(int(n) for n in sizes)
    _check_bounds(indices, sizes)
    if endianness == "big":
        indices = indices[::-1]
        sizes = sizes[::-1]
    f = 0
    stride = 1
    for i, n in zip(indices, sizes):
        f += (i - 1) * stride
        stride *= n
    return f + 1


def multi_index(f: int, sizes, endianness: str = "little") -> MultiIndex:
    """Inverse of :func:`flat_index` (both sides 1-based)."""
    sizes = tuple(int(n) for n in sizes)
    total = int(np.prod(sizes, dtype=np.int64))
    if not 1 <= f <= total:
        raise IndexError(f"flat index {f} out of range [1, {total}]")
    rem = f - 1
    iter_sizes = sizes if endianness == "little" else sizes[::-1]
    idx = []
    for n in iter_sizes:
        idx.append(rem % n + 1)
        rem //= n
    if endianness == "big":
        idx = idx[::-1]
    return MultiIndex(tuple(idx), endianness=endianness)


def eval_entry(x: TTVector, mi) -> float:
    """Evaluate one entry as the product of core slices (1-based index)."""
    indices = mi.indices if isinstance(mi, MultiIndex) else tuple(mi)
    _check_bounds(indices, x.mode_sizes)
    v = x.cores[0][:, indices[0] - 1, :]
    for k in range(1, x.d):
        v = v @ x.cores[k][:, indices[k] - 1, :]
    return float(v[0, 0])


# ----------------------------------------------------------------------
# Densification and interfaces
# ----------------------------------------------------------------------

def _check_dense_cap(n_entries: int, max_entries: Optional[int]):
    cap = DEFAULT_DENSE_CAP if max_entries is None else max_entries
    if n_entries > cap:
        raise DenseSizeError(
            f"dense materialization of {n_entries} entries exceeds cap {cap}"
        )


def to_dense(x, max_entries: Optional[int] = None) -> np.ndarray:
    """Materialize a TT vector (1-D array) or TT matrix (2-D array)."""
    if isinstance(x, TTVector):
        _check_dense_cap(x.size, max_entries)
        return _left_interface(x.cores)[:, 0]
    if isinstance(x, TTMatrix):
        nrow = int(np.prod(x.row_sizes, dtype=np.int64))
        ncol = int(np.prod(x.col_sizes, dtype=np.int64))
        _check_dense_cap(nrow * ncol, max_entries)
        out = np.ones((1, 1, 1))
        for core in x.cores:
            out = np.einsum("abx,xijy->iajby", out, core, optimize=True)
            R, a, n, b, m = (
                out.shape[4],
                out.shape[1],
                out.shape[0],
                out.shape[3],
                out.shape[2],
            )
            out = out.reshape(n * a, m * b, R)
        return out[:, :, 0]
    raise TypeError(f"expected TTVector or TTMatrix, got {type(x)}")


def _left_interface(cores) -> np.ndarray:
    """Dense interface matrix of a core chain, shape (n1*...*nk, r_k)."""
    M = np.ones((1, 1))
    for core in cores:
        r, n, R = core.shape
        T = (M @ core.reshape(r, n * R)).reshape(-1, n, R)
        M = T.transpose(1, 0, 2).reshape(-1, R)
    return M


def _right_interface(cores) -> np.ndarray:
    """Dense right interface, shape (r_k, n(k+1)*...*nd)."""
    W = np.ones((1, 1))
    for core in reversed(cores):
        r, n, R = core.shape
        A = (core.reshape(r * n, R) @ W).reshape(r, n, -1)
        W = A.transpose(0, 2, 1).reshape(r, -1)
    return W


def interface_matrix(x: TTVector, k: int, side: str, max_entries=None) -> np.ndarray:
    """Interface matrix of the first k cores (``side="leq"``) or the rest.

    ``k`` is 1-based.  ``side="leq"`` returns shape ``(n1*...*nk, r_k)``;
    ``side="gt"`` returns ``(r_k, n(k+1)*...*nd)``.
    """
    if not 1 <= k <= x.d:
        raise ValueError(f"position {k} out of range [1, {x.d}]")
    if side == "leq":
        size = int(np.prod(x.mode_sizes[:k], dtype=np.int64)) * x.ranks[k]
        _check_dense_cap(size, max_entries)
        return _left_interface(x.cores[:k])
    if side == "gt":
        size = int(np.prod(x.mode_sizes[k:], dtype=np.int64)) * x.ranks[k]
        _check_dense_cap(size, max_entries)
        return _right_interface(x.cores[k:])
    raise ValueError(f"side must be 'leq' or 'gt', got {side!r}")


def kron_le(*factors) -> np.ndarray:
    """Little-endian Kronecker product: the FIRST factor's index runs fastest.

    For matrices this is ``kron_le(A, B)[i + j*na, k + l*ma] = A[i,k] B[j,l]``.
    """
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(f, out)
    return out


def frame_matrix(x: TTVector, k: int, max_entries=None) -> np.ndarray:
    """Dense frame matrix mapping a vectorized core k (1-based) to the vector.

    Column index is the Fortran-order vectorization ``(alpha_{k-1}, i_k,
    alpha_k)`` with ``alpha_{k-1}`` fastest.  This is an oracle helper: it
    materializes a ``size x (r*n*r)`` matrix.
    """
    if not 1 <= k <= x.d:
        raise ValueError(f"position {k} out of range [1, {x.d}]")
    r0, n, r1 = x.cores[k - 1].shape
    _check_dense_cap(x.size * r0 * n * r1, max_entries)
    left = _left_interface(x.cores[: k - 1])
    right = _right_interface(x.cores[k:])
    return kron_le(left, np.eye(n), right.T)


# ----------------------------------------------------------------------
# Orthogonalization and rounding
# ----------------------------------------------------------------------

def _qr_push_right(cores, k):
    """Left-orthogonalize core k, absorbing the R factor into core k+1."""
    r, n, R = cores[k].shape
    Q, Rf = np.linalg.qr(cores[k].reshape(r * n, R))
    cores[k] = Q.reshape(r, n, -1)
    cores[k + 1] = np.einsum("ab,bnc->anc", Rf, cores[k + 1])


def _lq_push_left(cores, k):
    """Right-orthogonalize core k, absorbing the factor into core k-1."""
    r, n, R = cores[k].shape
    Q, Rf = np.linalg.qr(cores[k].reshape(r, n * R).T)
    cores[k] = Q.T.reshape(-1, n, R)
    cores[k - 1] = np.einsum("anb,cb->anc", cores[k - 1], Rf)


def orthogonalize(x: TTVector, direction: str, pivot: int) -> TTVector:
    """Return an equal vector with cores orthogonalized toward ``pivot``.

    ``direction="left"`` makes cores ``1..pivot-1`` left-orthogonal (the
    non-orthogonal factor accumulates in the pivot core);
    ``direction="right"`` makes cores ``pivot+1..d`` right-orthogonal.
    ``pivot`` is 1-based.
    """
    if not 1 <= pivot <= x.d:
        raise ValueError(f"pivot {pivot} out of range [1, {x.d}]")
    cores = [c.copy() for c in x.cores]
    if direction == "left":
        for k in range(pivot - 1):
            _qr_push_right(cores, k)
        ortho = ("left_upto", pivot - 1) if pivot > 1 else None
    elif direction == "right":
        for k in range(x.d - 1, pivot - 1, -1):
            _lq_push_left(cores, k)
        ortho = ("right_from", pivot + 1) if pivot < x.d else None
    else:
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    return TTVector(cores, ortho=ortho)


def _svd_trunc(M: np.ndarray, budget: float, max_rank: Optional[int]):
    """SVD of M keeping the smallest rank whose discarded tail is <= budget."""
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if budget > 0:
        tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]
        # tail[k] is the Frobenius error if columns k..end are dropped
        keep = int(np.searchsorted(-tail, -budget))
    else:
        smax = s[0] if s.size else 0.0
        keep = int(np.sum(s > 1e-14 * smax))
    keep = max(keep, 1)
    if max_rank is not None:
        keep = min(keep, max_rank)
    return U[:, :keep], s[:keep], Vt[:keep]


def tt_round(x: TTVector, tol: float, max_rank: Optional[int] = None) -> TTVector:
    """Compress ranks so that ``norm(x - result) <= tol * norm(x)``.

    Left-orthogonalizes first, then truncates by SVD right-to-left with a
    per-core budget of ``tol * norm(x) / sqrt(d-1)``.  The result is
    right-orthogonal from core 2 on.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    d = x.d
    if d == 1:
        return x.copy()
    y = orthogonalize(x, "left", pivot=d)
    cores = y.cores
    nrm = float(np.linalg.norm(cores[-1]))
    if nrm == 0.0:
        return TTVector(
            [np.zeros((1, n, 1)) for n in x.mode_sizes], ortho=("right_from", 2)
        )
    budget = tol * nrm / np.sqrt(d - 1)
    for k in range(d - 1, 0, -1):
        r, n, R = cores[k].shape
        U, s, Vt = _svd_trunc(cores[k].reshape(r, n * R), budget, max_rank)
        cores[k] = Vt.reshape(-1, n, R)
        carry = U * s
        cores[k - 1] = np.einsum("anb,bc->anc", cores[k - 1], carry)
    return TTVector(cores, ortho=("right_from", 2))


# ----------------------------------------------------------------------
# TT algebra
# ----------------------------------------------------------------------

def tt_add(x: TTVector, y: TTVector, alpha: float = 1.0, beta: float = 1.0) -> TTVector:
    """Exact representation of ``alpha*x + beta*y``; ranks add."""
    if x.mode_sizes != y.mode_sizes:
        raise ValueError(f"mode sizes differ: {x.mode_sizes} vs {y.mode_sizes}")
    d = x.d
    if d == 1:
        return TTVector([alpha * x.cores[0] + beta * y.cores[0]])
    cores = []
    for k in range(d):
        xc, yc = x.cores[k], y.cores[k]
        if k == 0:
            c = np.concatenate([alpha * xc, beta * yc], axis=2)
        elif k == d - 1:
            c = np.concatenate([xc, yc], axis=0)
        else:
            rx0, n, rx1 = xc.shape
            ry0, _, ry1 = yc.shape
            c = np.zeros((rx0 + ry0, n, rx1 + ry1))
            c[:rx0, :, :rx1] = xc
            c[rx0:, :, rx1:] = yc
        cores.append(c)
    return TTVector(cores)


def tt_matvec(A: TTMatrix, x: TTVector) -> TTVector:
    """Exact TT representation of ``A @ x``; output ranks are products."""
    if A.col_sizes != x.mode_sizes:
        raise ValueError(
            f"operator column sizes {A.col_sizes} != vector modes {x.mode_sizes}"
        )
    cores = []
    for Ac, xc in zip(A.cores, x.cores):
        R0, n, m, R1 = Ac.shape
        r0, _, r1 = xc.shape
        c = np.tensordot(Ac, xc, axes=(2, 1))  # (a,i,b,c,d)
        c = np.ascontiguousarray(c.transpose(0, 3, 1, 2, 4))
        cores.append(c.reshape(R0 * r0, n, R1 * r1))
    return TTVector(cores)


def tt_dot(x: TTVector, y: TTVector) -> float:
    """Inner product via left-to-right environment contraction."""
    if x.mode_sizes != y.mode_sizes:
        raise ValueError(f"mode sizes differ: {x.mode_sizes} vs {y.mode_sizes}")
    v = np.ones((1, 1))
    for xc, yc in zip(x.cores, y.cores):
        T = np.tensordot(v, xc, axes=(0, 0))  # (b,i,c)
        v = np.tensordot(T, yc, axes=([0, 1], [0, 1]))  # (c,d)
    return float(v[0, 0])


def tt_norm(x: TTVector) -> float:
    """Frobenius norm; tiny negative round-off in the dot product is clamped."""
    s = tt_dot(x, x)
    if s < 0:
        s = 0.0  # round-off; the true value is nonnegative
    return float(np.sqrt(s))


# ----------------------------------------------------------------------
# QTT quantization
# ----------------------------------------------------------------------

def _split_mode_axes(n: int, base: int) -> int:
    L = int(round(np.log(n) / np.log(base)))
    if base**L != n:
        raise ValueError(f"mode size {n} is not a power of {base}")
    return L


def _split_chain(t: np.ndarray, mode_sizes: list[int]) -> list[np.ndarray]:
    """Exactly split t of shape (r, n1, ..., nL, R) into a TT chain via QR."""
    r = t.shape[0]
    R = t.shape[-1]
    cur = t.reshape(r, -1)
    cores = []
    left = r
    for j, n in enumerate(mode_sizes):
        if j == len(mode_sizes) - 1:
            cores.append(cur.reshape(left, n, R))
            break
        cur = cur.reshape(left * n, -1)
        Q, Rf = np.linalg.qr(cur)
        cores.append(Q.reshape(left, n, -1))
        left = Q.shape[1]
        cur = Rf
    return cores


def qtt_quantize(x, base: int = 2, tol: float = 0.0):
    """Split every mode of size ``base**L`` into L modes of size ``base``.

    Bit order within a mode is little-endian (lowest bit first), so the
    represented dense vector/matrix is unchanged.  If ``tol > 0`` the result
    is compressed with :func:`tt_round` at that tolerance.
    """
    if isinstance(x, TTVector):
        new_cores = []
        for core in x.cores:
            r, n, R = core.shape
            L = _split_mode_axes(n, base)
            if L == 1:
                new_cores.append(core.copy())
                continue
            t = core.reshape((r,) + (base,) * L + (R,))
            # numpy puts the lowest bit in the last split axis; reverse them
            t = t.transpose((0,) + tuple(range(L, 0, -1)) + (L + 1,))
            new_cores.extend(_split_chain(t, [base] * L))
        out = TTVector(new_cores)
        return tt_round(out, tol) if tol > 0 else out
    if isinstance(x, TTMatrix):
        new_cores = []
        for core in x.cores:
            R0, n, m, R1 = core.shape
            L = _split_mode_axes(n, base)
            if m != n:
                raise ValueError("matrix quantization requires square mode sizes")
            if L == 1:
                new_cores.append(core.copy())
                continue
            t = core.reshape((R0,) + (base,) * L + (base,) * L + (R1,))
            row_axes = tuple(range(L, 0, -1))
            col_axes = tuple(range(2 * L, L, -1))
            # pair bit j of the row index with bit j of the column index
            paired = ()
            for a, b in zip(row_axes, col_axes):
                paired += (a, b)
            t = t.transpose((0,) + paired + (2 * L + 1,))
            t = t.reshape((R0,) + (base * base,) * L + (R1,))
            chain = _split_chain(t, [base * base] * L)
            new_cores.extend(c.reshape(c.shape[0], base, base, c.shape[2]) for c in chain)
        out = TTMatrix(new_cores)
        return ttmat_round(out, tol) if tol > 0 else out
    raise TypeError(f"expected TTVector or TTMatrix, got {type(x)}")


# ----------------------------------------------------------------------
# Constructors
# ----------------------------------------------------------------------

def _clip_ranks(mode_sizes, ranks):
    """Clip interior ranks to the maximum feasible value at each bond."""
    d = len(mode_sizes)
    left = np.cumprod([1] + list(mode_sizes))
    right = np.cumprod([1] + list(mode_sizes[::-1]))[::-1]
    out = [1]
    for k in range(1, d):
        out.append(int(min(ranks[k], left[k], right[k])))
    out.append(1)
    return out


def tt_random(mode_sizes, ranks, rng=None) -> TTVector:
    """Gaussian random TT vector.  ``ranks`` is an int or a full r_0..r_d list."""
    rng = np.random.default_rng(rng)
    d = len(mode_sizes)
    if np.isscalar(ranks):
        ranks = [1] + [int(ranks)] * (d - 1) + [1]
    ranks = _clip_ranks(mode_sizes, list(ranks))
    cores = [
        rng.standard_normal((ranks[k], mode_sizes[k], ranks[k + 1]))
        for k in range(d)
    ]
    return TTVector(cores)


def tt_ones(mode_sizes) -> TTVector:
    return TTVector([np.ones((1, n, 1)) for n in mode_sizes])


def tt_unit(mode_sizes, indices=None) -> TTVector:
    """Rank-1 unit vector; default is the first unit vector in every mode."""
    d = len(mode_sizes)
    if indices is None:
        indices = [0] * d
    cores = []
    for n, i in zip(mode_sizes, indices):
        c = np.zeros((1, n, 1))
        c[0, i, 0] = 1.0
        cores.append(c)
    return TTVector(cores)


def ttmat_random(row_sizes, col_sizes, ranks, rng=None) -> TTMatrix:
    rng = np.random.default_rng(rng)
    d = len(row_sizes)
    if np.isscalar(ranks):
        ranks = [1] + [int(ranks)] * (d - 1) + [1]
    cores = [
        rng.standard_normal((ranks[k], row_sizes[k], col_sizes[k], ranks[k + 1]))
        for k in range(d)
    ]
    return TTMatrix(cores)


def ttmat_identity(mode_sizes) -> TTMatrix:
    return TTMatrix([np.eye(n).reshape(1, n, n, 1) for n in mode_sizes])


def ttmat_from_factors(factors) -> TTMatrix:
    """Rank-1 TT matrix from per-mode dense factors (little-endian Kronecker)."""
    return TTMatrix([np.asarray(F)[None, :, :, None] for F in factors])


def ttmat_add(A: TTMatrix, B: TTMatrix, alpha: float = 1.0, beta: float = 1.0) -> TTMatrix:
    if A.row_sizes != B.row_sizes or A.col_sizes != B.col_sizes:
        raise ValueError("operator shapes differ")
    d = A.d
    if d == 1:
        return TTMatrix([alpha * A.cores[0] + beta * B.cores[0]])
    cores = []
    for k in range(d):
        ac, bc = A.cores[k], B.cores[k]
        if k == 0:
            c = np.concatenate([alpha * ac, beta * bc], axis=3)
        elif k == d - 1:
            c = np.concatenate([ac, bc], axis=0)
        else:
            ra0, n, m, ra1 = ac.shape
            rb0, _, _, rb1 = bc.shape
            c = np.zeros((ra0 + rb0, n, m, ra1 + rb1))
            c[:ra0, :, :, :ra1] = ac
            c[ra0:, :, :, ra1:] = bc
        cores.append(c)
    return TTMatrix(cores)


def ttmat_transpose(A: TTMatrix) -> TTMatrix:
    return TTMatrix([c.transpose(0, 2, 1, 3) for c in A.cores])


def ttmat_matmul(A: TTMatrix, B: TTMatrix) -> TTMatrix:
    """Exact operator product ``A @ B``; ranks multiply."""
    if A.col_sizes != B.row_sizes:
        raise ValueError("inner sizes differ")
    cores = []
    for ac, bc in zip(A.cores, B.cores):
        Ra0, n, m, Ra1 = ac.shape
        Rb0, _, p, Rb1 = bc.shape
        c = np.tensordot(ac, bc, axes=(2, 1))  # (a,i,b,c,k,d)
        c = np.ascontiguousarray(c.transpose(0, 3, 1, 4, 2, 5))
        cores.append(c.reshape(Ra0 * Rb0, n, p, Ra1 * Rb1))
    return TTMatrix(cores)


def ttmat_to_tt(A: TTMatrix) -> TTVector:
    """View the operator as a TT vector over fused (row, col) modes."""
    return TTVector(
        [c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in A.cores]
    )


def tt_from_ttmat_layout(x: TTVector, row_sizes, col_sizes) -> TTMatrix:
    """Inverse of :func:`ttmat_to_tt` given the original mode splitting."""
    cores = []
    for c, n, m in zip(x.cores, row_sizes, col_sizes):
        cores.append(c.reshape(c.shape[0], n, m, c.shape[2]))
    return TTMatrix(cores)


def ttmat_round(A: TTMatrix, tol: float, max_rank: Optional[int] = None) -> TTMatrix:
    """Rank compression of an operator via its fused vector view."""
    v = tt_round(ttmat_to_tt(A), tol, max_rank=max_rank)
    return tt_from_ttmat_layout(v, A.row_sizes, A.col_sizes)
