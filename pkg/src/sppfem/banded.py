"""Direct solver for cyclic block-tridiagonal systems.

Nodes on a closed curve couple to their two neighbours, so the matrix is
block tridiagonal plus two corner blocks. Reordering nodes as
``0, N-1, 1, N-2, 2, ...`` puts every cyclic neighbour within two positions,
which turns the matrix into an ordinary band that LAPACK's banded LU
(with partial pivoting) can factor in O(N).
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, solve_banded


class SingularSystemError(LinAlgError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


def zigzag_order(N):
    """Node permutation ``[0, N-1, 1, N-2, ...]``."""
    order = np.empty(N, dtype=int)
    order[0::2] = np.arange((N + 1) // 2)
    order[1::2] = N - 1 - np.arange(N // 2)
    return order


def dof_permutation(N, block=3):
    """Permutation of interleaved unknowns induced by :func:`zigzag_order`."""
    nodes = zigzag_order(N)
    return (nodes[:, None] * block + np.arange(block)[None, :]).ravel()


def to_banded(A, perm):
    """Return ``(l, u, ab)`` for ``A[perm][:, perm]`` in LAPACK band storage."""
    A = sp.coo_matrix(A)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    r, c = inv[A.row], inv[A.col]
    l = int(max(0, np.max(r - c, initial=0)))
    u = int(max(0, np.max(c - r, initial=0)))
    ab = np.zeros((l + u + 1, A.shape[0]))
    np.add.at(ab, (u + r - c, c), A.data)
    return l, u, ab


def _condition(A):
    try:
        return float(np.linalg.cond(A.toarray() if sp.issparse(A) else A))
    except LinAlgError:
        return float("inf")


def solve_cyclic(A, b, block=3):
    """Solve ``A x = b`` where ``A`` couples interleaved node blocks cyclically."""
    n = A.shape[0]
    if n % block:
        raise ValueError(f"system size {n} is not a multiple of the block size {block}")
    perm = dof_permutation(n // block, block)
    l, u, ab = to_banded(A, perm)
    b = np.asarray(b, dtype=float)
    try:
        y = solve_banded((l, u), ab, b[perm], check_finite=False)
    except LinAlgError as exc:
        cond = _condition(A)
        raise SingularSystemError(f"singular linear system (condition number ~ {cond:.3e})", cond) from exc
    if not np.all(np.isfinite(y)):
        cond = _condition(A)
        raise SingularSystemError(f"linear solve produced non-finite values (condition number ~ {cond:.3e})", cond)
    x = np.empty_like(y)
    x[perm] = y
    return x
