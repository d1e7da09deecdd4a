"""Renormalized geometric graph Laplacian.

With ``lam = 1`` the operator approximates the Laplace-Beltrami operator
whatever the sampling density.  Sign convention: ``L = (P - I) / (c eps)``
with ``P`` row-stochastic, so ``L`` is negative semidefinite in the
``D``-weighted inner product (the analyst's sign, not the PSD graph
Laplacian of spectral clustering).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# heat-kernel constant; independent of the manifold dimension
HEAT_KERNEL_C = 0.25


class IsolatedNodeError(ValueError):
    """A node has zero degree, so the random-walk normalization is undefined."""


@dataclass(frozen=True)
class LaplacianOperator:
    """Sparse ``(n, n)`` Laplacian together with what built it.

    ``degrees`` holds the diagonal of the renormalized degree matrix and
    ``kernel`` the renormalized symmetric kernel; both are needed to form
    the symmetric conjugate used by eigensolvers.
    """

    matrix: sp.csr_matrix
    epsilon: float
    lam: float
    kernel: sp.csr_matrix
    degrees: np.ndarray

    @property
    def c(self) -> float:
        return HEAT_KERNEL_C

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v):
        return apply(self, v)

    def transition(self) -> sp.csr_matrix:
        """Row-stochastic ``D~^-1 W~``."""
        return sp.diags(1.0 / self.degrees) @ self.kernel

    def symmetric_conjugate(self) -> sp.csr_matrix:
        """``D~^{-1/2} W~ D~^{-1/2}``, similar to the transition matrix."""
        s = 1.0 / np.sqrt(self.degrees)
        m = sp.diags(s) @ self.kernel @ sp.diags(s)
        return ((m + m.T) * 0.5).tocsr()


def build_laplacian(W, epsilon: float, lam: float = 1.0) -> LaplacianOperator:
    """Graph Laplacian ``(c eps)^-1 (D~^-1 W~ - I)`` from a weight matrix.

    Parameters
    ----------
    W : NeighborhoodGraph or sparse/dense (n, n) array
        Symmetric nonnegative weights, self loops included if wanted.
    epsilon : float
        Kernel bandwidth used to build ``W``.
    lam : float
        Density renormalization exponent in ``[0, 1]``:
        ``W~ = D^-lam W D^-lam`` with ``D = diag(W 1)``.

    Raises
    ------
    IsolatedNodeError
        If any node has zero degree (a larger ``epsilon`` usually helps).
    """
    if not epsilon > 0:
        raise ValueError(f"bandwidth epsilon must be positive, got {epsilon}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    mat = getattr(W, "matrix", W)
    mat = sp.csr_matrix(mat, dtype=float)
    if mat.shape[0] != mat.shape[1]:
        raise ValueError("weight matrix must be square")
    if mat.nnz and mat.data.min() < 0:
        raise ValueError("weights must be nonnegative")

    deg = np.asarray(mat.sum(axis=1)).ravel()
    _check_degrees(deg, epsilon)
    scale = deg ** (-lam)
    kernel = (sp.diags(scale) @ mat @ sp.diags(scale)).tocsr()
    deg_tilde = np.asarray(kernel.sum(axis=1)).ravel()
    _check_degrees(deg_tilde, epsilon)

    n = mat.shape[0]
    trans = sp.diags(1.0 / deg_tilde) @ kernel
    L = (trans - sp.identity(n, format="csr")) * (1.0 / (HEAT_KERNEL_C * epsilon))
    L = sp.csr_matrix(L)
    L.sort_indices()
    return LaplacianOperator(L, float(epsilon), float(lam), kernel, deg_tilde)


def _check_degrees(deg, epsilon):
    zero = np.nonzero(~(deg > 0))[0]
    if zero.size:
        raise IsolatedNodeError(
            f"node {int(zero[0])} has zero degree ({zero.size} isolated nodes); "
            f"try a larger epsilon than {epsilon}"
        )


def apply(Lop: LaplacianOperator, v):
    """Sparse product ``L v`` for a vector or an ``(n, m)`` block of columns."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != Lop.n:
        raise ValueError(f"expected leading dimension {Lop.n}, got {v.shape[0]}")
    return Lop.matrix @ v


def write_coo(Lop: LaplacianOperator, path) -> None:
    """Write nonzeros as ``i,j,value`` lines with 17 significant digits."""
    coo = Lop.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i},{j},{v:.17g}\n")
