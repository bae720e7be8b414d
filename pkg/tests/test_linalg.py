import numpy as np
import pytest
from scipy import sparse

from lvpp.linalg import (
    LinAlgError,
    SaddleSystem,
    SolveCounter,
    condense_and_solve,
    solve_full_block,
    solve_sparse,
    solve_spd,
)

RNG = np.random.default_rng(3)


def test_solve_spd_identity():
    b = RNG.uniform(-1, 1, 10)
    assert np.allclose(solve_spd(sparse.identity(10, format="csc"), b), b)


def test_solve_spd_two_by_two():
    A = sparse.csc_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    assert np.allclose(solve_spd(A, np.array([1.0, 1.0])), [1.0, 1.0])


def test_solve_spd_tridiagonal_parabola():
    # -u'' = 1 on (0,1), u(0)=u(1)=0: nodal values x(1-x)/2 are exact
    n = 100
    h = 1.0 / n
    main = np.full(n - 1, 2.0 / h)
    off = np.full(n - 2, -1.0 / h)
    A = sparse.diags([off, main, off], [-1, 0, 1]).tocsc()
    x = np.linspace(h, 1 - h, n - 1)
    u = solve_spd(A, np.full(n - 1, h))
    assert np.max(np.abs(u - 0.5 * x * (1 - x))) < 1e-10


def test_solve_spd_rejects_indefinite():
    A = sparse.csc_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(LinAlgError):
        solve_spd(A, np.array([1.0, 1.0]))


def _toy_system(nv=6, nw=2, seed=0):
    rng = np.random.default_rng(seed)
    M = rng.uniform(-1, 1, (nv, nv))
    A = sparse.csr_matrix(M @ M.T + nv * np.eye(nv))
    B = sparse.csr_matrix(rng.uniform(-1, 1, (nv, nw)))
    C = rng.uniform(0.5, 2.0, nw)
    return SaddleSystem(A=A, B=B, C=C, rhs_V=rng.uniform(-1, 1, nv), rhs_W=rng.uniform(-1, 1, nw))


def test_condensation_matches_dense_block_oracle():
    sys_ = _toy_system()
    u, delta = condense_and_solve(sys_)
    # dense oracle on the unreduced block matrix
    A = sys_.A.toarray()
    B = sys_.B.toarray()
    block = np.block([[A, B], [B.T, -np.diag(sys_.C)]])
    ref = np.linalg.solve(block, np.concatenate([sys_.rhs_V, sys_.rhs_W]))
    assert np.max(np.abs(u - ref[: len(u)])) < 1e-12
    assert np.max(np.abs(delta - ref[len(u):])) < 1e-12
    # second block equation holds by construction
    res = sys_.B.T @ u - sys_.C * delta - sys_.rhs_W
    assert np.max(np.abs(res)) < 1e-10
    # sparse full-block fallback agrees too
    u2, d2 = solve_full_block(sys_)
    assert np.allclose(u2, u, atol=1e-10) and np.allclose(d2, delta, atol=1e-10)


def test_condensation_decouples_when_B_zero():
    sys_ = _toy_system()
    sys_.B = sparse.csr_matrix(sys_.B.shape)
    u, delta = condense_and_solve(sys_)
    assert np.allclose(u, solve_spd(sys_.A.tocsc(), sys_.rhs_V))
    assert np.allclose(delta, -sys_.rhs_W / sys_.C)


def test_counter_and_positive_C_validation():
    counter = SolveCounter()
    sys_ = _toy_system()
    condense_and_solve(sys_, counter=counter)
    assert counter.count == 1
    condense_and_solve(sys_, counter=counter)
    assert counter.count == 2
    with pytest.raises(LinAlgError):
        SaddleSystem(A=sys_.A, B=sys_.B, C=np.array([1.0, 0.0]),
                     rhs_V=sys_.rhs_V, rhs_W=sys_.rhs_W)


def test_solver_determinism():
    sys_ = _toy_system(seed=5)
    u1, _ = condense_and_solve(sys_)
    u2, _ = condense_and_solve(sys_)
    assert np.array_equal(u1, u2)  # bitwise identical single-threaded


def test_solve_sparse_nonsymmetric():
    A = sparse.csc_matrix(np.array([[2.0, 1.0], [0.0, 3.0]]))
    x = solve_sparse(A, np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0])
