"""Sparse assembly and direct solves over real or complex scalars."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError


class SparsePattern:
    """Fixed CSR pattern for scattering batched element matrices.

    ``rows`` (E, nr) and ``cols`` (E, nc) are global dof ids per element.  The
    duplicate-summing map is computed once, so repeated assembly is a single
    ``bincount`` (commutative, order-independent accumulation).
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        self.shape = shape
        self.elem_shape = (rows.shape[1], cols.shape[1])
        r = np.broadcast_to(rows[:, :, None], rows.shape + (cols.shape[1],)).ravel()
        c = np.broadcast_to(cols[:, None, :], rows.shape + (cols.shape[1],)).ravel()
        key = r.astype(np.int64) * shape[1] + c
        ukey, self._inv = np.unique(key, return_inverse=True)
        self._inv = self._inv.ravel()
        self.nnz = ukey.size
        urow = ukey // shape[1]
        self.indices = (ukey % shape[1]).astype(np.int32)
        self.indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.add.at(self.indptr, urow + 1, 1)
        self.indptr = np.cumsum(self.indptr)

    def assemble(self, values) -> sp.csr_matrix:
        values = np.asarray(values).ravel()
        if np.iscomplexobj(values):
            data = (np.bincount(self._inv, values.real, self.nnz)
                    + 1j * np.bincount(self._inv, values.imag, self.nnz))
        else:
            data = np.bincount(self._inv, values, self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


def scatter_add(index, values, size):
    """Global vector from element contributions (E, n) with ids (E, n)."""
    index = np.asarray(index).ravel()
    values = np.asarray(values).ravel()
    if np.iscomplexobj(values):
        return (np.bincount(index, values.real, size)
                + 1j * np.bincount(index, values.imag, size))
    return np.bincount(index, values, size)


def apply_dirichlet_rows(A, fixed_mask):
    """Replace the rows flagged in ``fixed_mask`` by identity rows."""
    keep = sp.diags((~fixed_mask).astype(float))
    one = sp.diags(fixed_mask.astype(float))
    return (keep @ A + one).tocsr()


class Factorization:
    """LU factors of a square sparse matrix; solves real or complex right-hand sides."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise SolverError(f"matrix is not square: {A.shape}")
        self.shape = A.shape
        self.dtype = A.dtype
        try:
            self._lu = spla.splu(A, permc_spec="MMD_ATA")
        except RuntimeError as exc:  # "Factor is exactly singular"
            raise SolverError(f"sparse factorization failed: {exc} (n={A.shape[0]}, nnz={A.nnz})") from exc

    def solve(self, b, trans: str = "N"):
        b = np.asarray(b)
        if np.iscomplexobj(b) and not np.iscomplexobj(np.empty(0, self.dtype)):
            x = self._lu.solve(np.ascontiguousarray(b.real), trans=trans) + 1j * self._lu.solve(
                np.ascontiguousarray(b.imag), trans=trans)
        else:
            x = self._lu.solve(b.astype(np.result_type(b, self.dtype)), trans=trans)
        if not np.all(np.isfinite(x)):
            raise SolverError("sparse solve produced non-finite values (singular system?)")
        return x


def solve_sparse(A, b):
    """Direct solve of ``A x = b``; A and b may be real or complex."""
    return Factorization(A).solve(b)
