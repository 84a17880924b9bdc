import numpy as np
import pytest
import scipy.sparse as sp

from msam.sparse_cholesky import NotPositiveDefiniteError, SparseCholesky, cholesky_solve


def random_spd(n, density, rng):
    A = sp.random(2 * n, n, density=density, random_state=rng) + sp.eye(2 * n, n)
    return (A.T @ A).tocsc()


@pytest.mark.parametrize("ordering", ["natural", "rcm", "auto"])
def test_matches_dense_solve(ordering):
    rng = np.random.default_rng(0)
    for n in (1, 2, 7, 40):
        M = random_spd(n, 0.2, rng)
        b = rng.normal(size=n)
        x = cholesky_solve(M, b, ordering=ordering)
        np.testing.assert_allclose(x, np.linalg.solve(M.toarray(), b), rtol=1e-10, atol=1e-12)


def test_factor_reproduces_matrix():
    rng = np.random.default_rng(1)
    M = random_spd(30, 0.1, rng)
    ch = SparseCholesky(M).factorize(M)
    L = ch.L().toarray()
    Mp = M.toarray()[np.ix_(ch.perm, ch.perm)]
    np.testing.assert_allclose(L @ L.T, Mp, atol=1e-10)
    assert ch.nnz == np.count_nonzero(np.tril(np.ones_like(L)) * (L != 0)) or ch.nnz >= np.count_nonzero(L)


def test_refactorize_with_shift():
    rng = np.random.default_rng(2)
    M = random_spd(12, 0.3, rng)
    b = rng.normal(size=12)
    ch = SparseCholesky(M)
    for shift in (0.0, 0.5, 10.0):
        x = ch.factorize(M, shift=shift).solve(b)
        np.testing.assert_allclose(x, np.linalg.solve(M.toarray() + shift * np.eye(12), b), atol=1e-10)


def test_auto_picks_less_fill():
    # arrow matrix: natural order fills completely, reversed order does not
    n = 30
    M = sp.lil_matrix((n, n))
    M.setdiag(n + 1.0)
    M[0, :] = 1.0
    M[:, 0] = 1.0
    M[0, 0] = n + 1.0
    M = M.tocsc()
    nat = SparseCholesky(M, ordering="natural").nnz
    auto = SparseCholesky(M, ordering="auto").nnz
    assert auto <= nat


def test_not_positive_definite_reports_column():
    M = sp.diags([1.0, 2.0, 0.0, 3.0]).tocsc()
    M = M + sp.csc_matrix(([0.0], ([2], [2])), shape=(4, 4))
    with pytest.raises(NotPositiveDefiniteError) as err:
        SparseCholesky(M, ordering="natural").factorize(M)
    assert err.value.column == 2
    with pytest.raises(NotPositiveDefiniteError):
        cholesky_solve(sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 1.0]])), np.ones(2))


def test_pattern_mismatch_and_misuse():
    M = sp.csc_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    ch = SparseCholesky(M)
    with pytest.raises(RuntimeError):
        ch.solve(np.ones(2))
    with pytest.raises(ValueError):
        ch.factorize(sp.eye(2, format="csc"))
    with pytest.raises(ValueError):
        SparseCholesky(M, ordering="amd")
