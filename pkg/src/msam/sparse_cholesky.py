"""Sparse Cholesky factorization ``P N P' = L L'`` for symmetric positive definite N.

Symbolic analysis (elimination tree, column counts) is done once per
sparsity pattern; numeric factorization can then be repeated for any
matrix with the same pattern, e.g. for different damping values.
The kernels follow the up-looking algorithm of CSparse's ``cs_chol``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse.csgraph import reverse_cuthill_mckee

ORDERINGS = ("natural", "rcm", "auto")


@njit(cache=True)
def _etree(n, Cp, Ci):
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@njit(cache=True)
def _ereach(Cp, Ci, k, parent, s, w):
    n = len(parent)
    top = n
    w[k] = k
    for p in range(Cp[k], Cp[k + 1]):
        i = Ci[p]
        if i > k:
            continue
        length = 0
        while w[i] != k:
            s[length] = i
            length += 1
            w[i] = k
            i = parent[i]
        while length > 0:
            top -= 1
            length -= 1
            s[top] = s[length]
    return top


@njit(cache=True)
def _colcounts(n, Cp, Ci, parent):
    counts = np.ones(n, dtype=np.int64)
    s = np.empty(n, dtype=np.int64)
    w = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        top = _ereach(Cp, Ci, k, parent, s, w)
        for j in range(top, n):
            counts[s[j]] += 1
    return counts


@njit(cache=True)
def _chol_numeric(n, Cp, Ci, Cx, parent, Lp, Li, Lx, shift, pivot_tol):
    """Fill Li/Lx in place. Returns -1 on success or the failing column."""
    c = Lp[:n].copy()
    s = np.empty(n, dtype=np.int64)
    w = np.full(n, -1, dtype=np.int64)
    x = np.zeros(n)
    for k in range(n):
        top = _ereach(Cp, Ci, k, parent, s, w)
        x[k] = 0.0
        diag = 0.0
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            if i <= k:
                x[i] = Cx[p]
            if i == k:
                diag = Cx[p]
        d = x[k] + shift
        x[k] = 0.0
        for t in range(top, n):
            i = s[t]
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            for p in range(Lp[i] + 1, c[i]):
                x[Li[p]] -= Lx[p] * lki
            d -= lki * lki
            p = c[i]
            c[i] += 1
            Li[p] = k
            Lx[p] = lki
        if not d > pivot_tol * (abs(diag) + shift):
            return k
        p = c[k]
        c[k] += 1
        Li[p] = k
        Lx[p] = np.sqrt(d)
    return -1


@njit(cache=True)
def _lsolve(n, Lp, Li, Lx, x):
    for j in range(n):
        x[j] /= Lx[Lp[j]]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            x[Li[p]] -= Lx[p] * x[j]


@njit(cache=True)
def _ltsolve(n, Lp, Li, Lx, x):
    for j in range(n - 1, -1, -1):
        for p in range(Lp[j] + 1, Lp[j + 1]):
            x[j] -= Lx[p] * x[Li[p]]
        x[j] /= Lx[Lp[j]]


class NotPositiveDefiniteError(ArithmeticError):
    def __init__(self, column):
        super().__init__(f"matrix is not positive definite (pivot failed at column {column})")
        self.column = column


def _upper_csc(M):
    U = sp.triu(M, format="csc")
    U.sort_indices()
    return (
        U.indptr.astype(np.int64),
        U.indices.astype(np.int64),
        U.data.astype(np.float64),
    )


class SparseCholesky:
    """Reusable symbolic + numeric Cholesky of a symmetric sparse matrix.

    ``pivot_tol`` is relative to the original diagonal entry of each column;
    a pivot at or below it is reported as a loss of definiteness.
    """

    def __init__(self, pattern, ordering: str = "auto", pivot_tol: float = 1e-10):
        if ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}, got {ordering!r}")
        pattern = sp.csc_matrix(pattern)
        n = pattern.shape[0]
        if pattern.shape != (n, n):
            raise ValueError("matrix must be square")
        self.n = n
        self.pivot_tol = float(pivot_tol)
        candidates = {"natural": np.arange(n)}
        if ordering in ("rcm", "auto") and n:
            sym = (abs(pattern) + abs(pattern.T)).tocsr()
            candidates["rcm"] = np.asarray(reverse_cuthill_mckee(sym, symmetric_mode=True), dtype=np.int64)
        if ordering != "auto":
            candidates = {ordering: candidates[ordering]}
        best = None
        for name, perm in candidates.items():
            parent, counts, key = self._analyze(pattern, perm)
            if best is None or counts.sum() < best[3].sum():
                best = (name, perm, parent, counts, key)
        self.ordering, self.perm, self.parent, counts, self._pattern = best
        self.Lp = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.Lp[1:])
        self.Li = np.empty(self.Lp[-1], dtype=np.int64)
        self.Lx = np.empty(self.Lp[-1])
        self._factored = False

    @property
    def nnz(self) -> int:
        return int(self.Lp[-1])

    @staticmethod
    def _analyze(pattern, perm):
        C = pattern[perm][:, perm]
        Cp, Ci, _ = _upper_csc(C)
        parent = _etree(C.shape[0], Cp, Ci)
        return parent, _colcounts(C.shape[0], Cp, Ci, parent), (Cp, Ci)

    def factorize(self, M, shift: float = 0.0) -> SparseCholesky:
        """Numeric factorization of ``M + shift*I`` (pattern must match the analysed one).

        Raises :class:`NotPositiveDefiniteError` carrying the failing column in
        the original (unpermuted) numbering.
        """
        M = sp.csc_matrix(M)
        if M.shape != (self.n, self.n):
            raise ValueError(f"expected {self.n}x{self.n} matrix, got {M.shape}")
        C = M[self.perm][:, self.perm]
        Cp, Ci, Cx = _upper_csc(C)
        if not (np.array_equal(Cp, self._pattern[0]) and np.array_equal(Ci, self._pattern[1])):
            raise ValueError("sparsity pattern differs from the analysed one")
        status = _chol_numeric(
            self.n, Cp, Ci, Cx, self.parent, self.Lp, self.Li, self.Lx, float(shift), self.pivot_tol
        )
        if status >= 0:
            self._factored = False
            raise NotPositiveDefiniteError(int(self.perm[status]))
        self._factored = True
        return self

    def solve(self, b) -> np.ndarray:
        if not self._factored:
            raise RuntimeError("factorize() must succeed before solve()")
        b = np.asarray(b, dtype=float)
        x = b[self.perm].copy()
        _lsolve(self.n, self.Lp, self.Li, self.Lx, x)
        _ltsolve(self.n, self.Lp, self.Li, self.Lx, x)
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def L(self) -> sp.csc_matrix:
        """The factor in permuted numbering."""
        return sp.csc_matrix((self.Lx.copy(), self.Li.copy(), self.Lp.copy()), shape=(self.n, self.n))


def cholesky_solve(M, b, ordering: str = "auto", pivot_tol: float = 1e-10) -> np.ndarray:
    return SparseCholesky(M, ordering=ordering, pivot_tol=pivot_tol).factorize(M).solve(b)
