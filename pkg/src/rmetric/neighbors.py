"""Neighborhood graphs over a point cloud.

Graphs are stored as symmetric ``scipy.sparse`` CSR matrices.  Pairwise
distances are exact (kd-tree range search, then distances recomputed
directly from coordinates), never approximate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

DEFAULT_CUTOFF = 9.0


@dataclass
class NeighborhoodGraph:
    """Sparse symmetric weighted graph over ``n`` points.

    Attributes:
        matrix: ``(n, n)`` CSR matrix of edge weights.
        kind: ``"heat_kernel"``, ``"knn"`` or ``"eps_ball"``.
        params: construction parameters, e.g. ``{"epsilon": .., "cutoff": ..}``.
        includes_self_loops: whether the diagonal carries weights.
    """

    matrix: sp.csr_matrix
    kind: str
    params: dict = field(default_factory=dict)
    includes_self_loops: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def edges(self):
        """Upper-triangle edge list ``(i, j, w)`` with ``i <= j``."""
        upper = sp.triu(self.matrix, format="coo")
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]

    def adjacency(self) -> sp.csr_matrix:
        """Boolean pattern without self loops."""
        a = (self.matrix != 0).astype(np.int8).tocsr()
        a.setdiag(0)
        a.eliminate_zeros()
        return a


def _as_points(P):
    pts = getattr(P, "points", P)
    return np.asarray(pts, dtype=float)


def _pairs_within(pts, sq_radius):
    """All ``i < j`` with ``|p_i - p_j|^2 <= sq_radius`` and those squared distances."""
    if pts.shape[0] < 2:
        return np.empty(0, int), np.empty(0, int), np.empty(0)
    tree = cKDTree(pts)
    # inflate the search radius slightly; the exact test below decides
    pairs = tree.query_pairs(np.sqrt(sq_radius) * (1 + 1e-9) + 1e-300, output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    d2 = np.sum((pts[i] - pts[j]) ** 2, axis=1)
    keep = d2 <= sq_radius
    return i[keep], j[keep], d2[keep]


def _symmetric(n, i, j, w, diag=None):
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    vals = np.concatenate([w, w])
    if diag is not None:
        idx = np.arange(n)
        rows = np.concatenate([rows, idx])
        cols = np.concatenate([cols, idx])
        vals = np.concatenate([vals, diag])
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def heat_kernel_graph(
    P, epsilon: float, cutoff: float = DEFAULT_CUTOFF, self_loops: bool = True
) -> NeighborhoodGraph:
    """Truncated heat-kernel graph ``w = exp(-|p_i - p_j|^2 / epsilon)``.

    An edge exists when ``|p_i - p_j|^2 <= cutoff * epsilon``.  The
    diagonal carries ``w(i, i) = 1`` unless ``self_loops`` is false.
    ``epsilon`` is in squared length units.
    """
    if not epsilon > 0:
        raise ValueError(f"bandwidth epsilon must be positive, got {epsilon}")
    if not cutoff > 0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    pts = _as_points(P)
    n = pts.shape[0]
    i, j, d2 = _pairs_within(pts, cutoff * epsilon)
    w = np.exp(-d2 / epsilon)
    mat = _symmetric(n, i, j, w, diag=np.ones(n) if self_loops else None)
    return NeighborhoodGraph(
        mat, "heat_kernel", {"epsilon": float(epsilon), "cutoff": float(cutoff)}, self_loops
    )


def eps_ball_graph(P, epsilon: float) -> NeighborhoodGraph:
    """Edges ``|p_i - p_j|^2 <= epsilon`` weighted by Euclidean length."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    pts = _as_points(P)
    i, j, d2 = _pairs_within(pts, epsilon)
    mat = _symmetric(pts.shape[0], i, j, np.sqrt(d2))
    return NeighborhoodGraph(mat, "eps_ball", {"epsilon": float(epsilon)})


def knn_graph(P, k: int, chunk: int = 128) -> NeighborhoodGraph:
    """Symmetrized k-nearest-neighbor graph weighted by Euclidean length.

    ``i ~ j`` if either is among the other's ``k`` nearest neighbors.
    Distance ties go to the smaller index.  Distances are brute force,
    processed ``chunk`` rows at a time.
    """
    pts = _as_points(P)
    n = pts.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    nbrs = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        block = pts[start : start + chunk]
        d2 = np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        d2[np.arange(block.shape[0]), np.arange(start, start + block.shape[0])] = np.inf
        # stable sort: equal distances keep ascending index order
        nbrs[start : start + block.shape[0]] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    key = np.unique(lo * n + hi)
    i, j = key // n, key % n
    w = np.sqrt(np.sum((pts[i] - pts[j]) ** 2, axis=1))
    mat = _symmetric(n, i, j, w)
    return NeighborhoodGraph(mat, "knn", {"k": int(k)})


def connected_components(G) -> list:
    """Maximal connected node sets, each sorted, ordered by smallest member."""
    mat = G.matrix if isinstance(G, NeighborhoodGraph) else sp.csr_matrix(G)
    if mat.shape[0] == 0:
        return []
    _, labels = csgraph.connected_components(mat, directed=False)
    comps = {}
    for node, lab in enumerate(labels):
        comps.setdefault(lab, []).append(node)
    return sorted((np.array(v) for v in comps.values()), key=lambda a: a[0])


def write_graph(G: NeighborhoodGraph, stem) -> None:
    """Write ``<stem>.csv`` (i, j, w upper triangle) and ``<stem>.json`` header."""
    stem = Path(stem)
    i, j, w = G.edges()
    with open(stem.with_suffix(".csv"), "w") as fh:
        for a, b, c in zip(i, j, w):
            fh.write(f"{a},{b},{c:.17g}\n")
    header = {"n": G.n, "kind": G.kind, "params": G.params,
              "includes_self_loops": G.includes_self_loops}
    stem.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))


def read_graph(stem) -> NeighborhoodGraph:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    raw = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", ndmin=2)
    n = header["n"]
    if raw.size == 0:
        mat = sp.csr_matrix((n, n))
    else:
        i, j, w = raw[:, 0].astype(int), raw[:, 1].astype(int), raw[:, 2]
        off = i != j
        mat = _symmetric(n, i[off], j[off], w[off])
        if np.any(~off):
            mat = mat + sp.csr_matrix((w[~off], (i[~off], j[~off])), shape=(n, n))
    return NeighborhoodGraph(mat.tocsr(), header["kind"], header["params"],
                             header["includes_self_loops"])
