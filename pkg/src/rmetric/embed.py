"""Embedding algorithms: spectral (Laplacian eigenmaps / diffusion maps) and Isomap."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import eigsh

from .laplacian import LaplacianOperator
from .neighbors import NeighborhoodGraph, knn_graph

# dense symmetric solver below this size, ARPACK above
DENSE_LIMIT = 3000


class DisconnectedGraphError(ValueError):
    pass


class EmbeddingDimensionError(ValueError):
    """Fewer usable eigen-directions than requested coordinates."""


@dataclass
class Embedding:
    """Coordinates ``f_n(P)`` as an ``(n, s)`` matrix plus provenance."""

    coords: np.ndarray
    algorithm: str
    params: dict = field(default_factory=dict)
    eigenvalues: Optional[np.ndarray] = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.coords.ndim != 2 or self.coords.shape[1] < 1:
            raise ValueError(f"coords must be (n, s) with s >= 1, got {self.coords.shape}")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("embedding coordinates must be finite")

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def s(self) -> int:
        return self.coords.shape[1]

    def provenance(self) -> dict:
        out = {"algorithm": self.algorithm, "params": self.params, "n": self.n, "s": self.s}
        if self.eigenvalues is not None:
            out["eigenvalues"] = [float(v) for v in self.eigenvalues]
        return out

    def save(self, csv_path, json_path=None) -> None:
        np.savetxt(csv_path, self.coords, delimiter=",", fmt="%.17g")
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.provenance(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, csv_path, json_path=None) -> "Embedding":
        coords = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        if json_path is None:
            return cls(coords, "unknown")
        meta = json.loads(Path(json_path).read_text())
        eig = meta.get("eigenvalues")
        return cls(coords, meta["algorithm"], meta.get("params", {}),
                   None if eig is None else np.asarray(eig))


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.size == 0:
        return vectors
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _require_connected(mat, what, remedy):
    ncomp, _ = csgraph.connected_components(mat, directed=False)
    if ncomp > 1:
        raise DisconnectedGraphError(f"{what} has {ncomp} connected components; {remedy}")


def spectral_embedding(
    Lop: LaplacianOperator, s: int, diffusion_time: Optional[float] = None
) -> Embedding:
    """Leading nontrivial eigenvectors of the random-walk operator.

    The symmetric conjugate ``D~^{-1/2} W~ D~^{-1/2}`` is diagonalized,
    eigenvectors are mapped back to the random-walk basis, the constant
    one is dropped, and each remaining column is scaled to unit norm and
    sign-fixed.  With ``diffusion_time=t`` column ``k`` is additionally
    multiplied by ``mu_k ** t`` (diffusion-map scaling).

    The returned ``eigenvalues`` are those of ``-L`` for the ``s + 1``
    kept eigenvectors, ascending, so the first is ``0``.
    """
    n = Lop.n
    if not 1 <= s < n:
        raise ValueError(f"need 1 <= s < n, got s={s}, n={n}")
    _require_connected(Lop.kernel, "the Laplacian graph", "try a larger epsilon")

    S = Lop.symmetric_conjugate()
    k = s + 1
    if n <= DENSE_LIMIT:
        mu, phi = scipy.linalg.eigh(S.toarray(), subset_by_index=[n - k, n - 1])
    else:
        v0 = np.sqrt(Lop.degrees)
        try:
            mu, phi = eigsh(S, k=k, which="LA", v0=v0 / np.linalg.norm(v0), tol=1e-12,
                            maxiter=max(5000, 20 * n))
        except Exception as exc:  # ArpackNoConvergence and friends
            raise RuntimeError(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(-mu, kind="stable")
    mu, phi = mu[order], phi[:, order]

    psi = phi / np.sqrt(Lop.degrees)[:, None]
    coords = psi[:, 1:]
    coords = coords / np.linalg.norm(coords, axis=0)
    if diffusion_time is not None:
        coords = coords * mu[1:] ** diffusion_time
    coords = fix_signs(coords)

    lap_eigs = (1.0 - mu) / (Lop.c * Lop.epsilon)
    params = {"epsilon": Lop.epsilon, "lam": Lop.lam, "s": s,
              "diffusion_time": diffusion_time}
    return Embedding(coords, "spectral", params, lap_eigs)


def all_pairs_shortest_paths(G) -> np.ndarray:
    """Exact Dijkstra distances between every pair of nodes.

    Edge weights are lengths.  Raises ``DisconnectedGraphError`` naming
    an unreachable pair.
    """
    mat = G.matrix if isinstance(G, NeighborhoodGraph) else sp.csr_matrix(G)
    if mat.nnz and mat.data.min() < 0:
        raise ValueError("edge lengths must be nonnegative")
    D = csgraph.dijkstra(mat, directed=False)
    if not np.all(np.isfinite(D)):
        i, j = np.argwhere(~np.isfinite(D))[0]
        raise DisconnectedGraphError(f"nodes {int(i)} and {int(j)} are not connected")
    return np.minimum(D, D.T)


def classical_mds(D, s: int, return_eigenvalues: bool = False):
    """Classical (Torgerson) scaling of a distance matrix.

    ``B = -1/2 J (D*D) J`` with ``J = I - 11'/n``; coordinates are the top
    ``s`` eigenvectors scaled by the square roots of their eigenvalues.
    All-zero ``D`` yields all-zero coordinates.

    Parameters
    ----------
    D : (n, n) array
        Symmetric with zero diagonal.
    s : int
        Output dimension.
    return_eigenvalues : bool
        Also return every eigenvalue of ``B``, descending.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12 * max(1.0, np.abs(D).max(initial=0))):
        raise ValueError("distance matrix must be symmetric")
    if np.any(np.diag(D) != 0):
        raise ValueError("distance matrix must have a zero diagonal")
    if s < 1:
        raise ValueError("s must be at least 1")

    D2 = D * D
    B = -0.5 * (D2 - D2.mean(axis=0)[None, :] - D2.mean(axis=1)[:, None] + D2.mean())
    B = 0.5 * (B + B.T)
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(-evals, kind="stable")
    evals, evecs = evals[order], evecs[:, order]

    scale = float(np.abs(evals).max()) if n else 0.0
    if scale == 0.0:
        coords = np.zeros((n, s))
    else:
        positive = int(np.sum(evals > 1e-12 * scale))
        if positive < s:
            raise EmbeddingDimensionError(
                f"only {positive} positive MDS eigenvalues; attainable dimension is {positive}, "
                f"requested {s}"
            )
        coords = fix_signs(evecs[:, :s]) * np.sqrt(evals[:s])
    if return_eigenvalues:
        return coords, evals
    return coords


def isomap(P, k: int, s: int) -> Embedding:
    """Isomap: kNN graph, Dijkstra geodesics, classical MDS.

    ``params["negative_mass"]`` records the fraction of eigenvalue mass of
    the MDS Gram matrix carried by negative eigenvalues, a gauge of how
    far the graph geodesics are from Euclidean.
    """
    G = knn_graph(P, k)
    _require_connected(G.matrix, f"the {k}-NN graph", "try a larger k")
    D = all_pairs_shortest_paths(G)
    coords, evals = classical_mds(D, s, return_eigenvalues=True)
    total = np.sum(np.abs(evals))
    neg = float(np.sum(np.abs(evals[evals < 0])) / total) if total > 0 else 0.0
    return Embedding(coords, "isomap", {"k": int(k), "s": int(s), "negative_mass": neg},
                     evals[:s].copy())
