import numpy as np
import pytest
import scipy.sparse as sp

from sppfem.banded import SingularSystemError, dof_permutation, solve_cyclic, to_banded, zigzag_order


def cyclic_block_matrix(N, rng, block=3):
    A = np.zeros((block * N, block * N))
    for i in range(N):
        for j in (i - 1, i, i + 1):
            j %= N
            A[block * i : block * i + block, block * j : block * j + block] += rng.normal(size=(block, block))
        A[block * i : block * i + block, block * i : block * i + block] += 4 * np.eye(block)
    return A


def test_zigzag():
    assert zigzag_order(5).tolist() == [0, 4, 1, 3, 2]
    assert zigzag_order(6).tolist() == [0, 5, 1, 4, 2, 3]
    assert sorted(dof_permutation(7).tolist()) == list(range(21))


@pytest.mark.parametrize("N", [3, 4, 5, 8, 17, 64])
def test_band_is_narrow(N):
    A = cyclic_block_matrix(N, np.random.default_rng(N))
    l, u, _ = to_banded(sp.coo_matrix(A), dof_permutation(N))
    assert l <= 8 and u <= 8


@pytest.mark.parametrize("N", [3, 4, 7, 16, 33, 200])
def test_matches_dense_solve(N):
    rng = np.random.default_rng(N)
    A = cyclic_block_matrix(N, rng)
    b = rng.normal(size=3 * N)
    x = solve_cyclic(sp.csr_matrix(A), b)
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-10)
    assert np.abs(A @ x - b).max() <= 1e-12 * np.abs(A).max() * max(1, np.abs(x).max())


def test_singular_reports_condition():
    A = cyclic_block_matrix(5, np.random.default_rng(0))
    A[:, 4] = 0.0
    with pytest.raises(SingularSystemError) as info:
        solve_cyclic(sp.csr_matrix(A), np.ones(15))
    assert info.value.condition > 1e12


def test_block_mismatch():
    with pytest.raises(ValueError):
        solve_cyclic(sp.eye(10), np.ones(10))
