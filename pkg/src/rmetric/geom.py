"""Geometry in embedding coordinates, corrected by the embedding metric.

Geodesic distances along a neighborhood graph, tangent-plane charts,
Voronoi area estimates, locally isometric views and Procrustes
dissimilarity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import ConvexHull, Voronoi
from scipy.spatial import QhullError

from .embed import Embedding
from .laplacian import LaplacianOperator
from .metric import DEFAULT_FLOOR, MetricField, RankDeficientError, dual_metric


def _coords(F):
    return np.asarray(getattr(F, "coords", F), dtype=float)


def _h(metric):
    return metric.h if isinstance(metric, MetricField) else np.asarray(metric, dtype=float)


def _edge_lengths(F, h, i, j):
    v = F[i] - F[j]
    qi = np.einsum("ea,eab,eb->e", v, h[i], v)
    qj = np.einsum("ea,eab,eb->e", v, h[j], v)
    # PSD forms can round to tiny negatives
    return 0.5 * np.sqrt(np.maximum(qi, 0.0)) + 0.5 * np.sqrt(np.maximum(qj, 0.0))


def metric_edge_length(metric, F, i: int, j: int) -> float:
    """Length of the segment ``f(q_i) -> f(q_j)`` averaging the metric at both ends.

    ``1/2 sqrt(v' h(q_i) v) + 1/2 sqrt(v' h(q_j) v)`` with ``v = f(q_i) - f(q_j)``.
    """
    X = _coords(F)
    h = _h(metric)
    return float(_edge_lengths(X, h, np.array([i]), np.array([j]))[0])


@dataclass
class GeodesicResult:
    """Three estimates of the distance between ``source`` and ``target``.

    ``naive`` is the straight chord in embedding coordinates, ``graph``
    the shortest path with Euclidean edge lengths and ``metric`` the
    shortest path with metric edge lengths.
    """

    source: int
    target: int
    naive: float
    graph: float
    metric: float
    path: list = field(default_factory=list)
    graph_path: list = field(default_factory=list)

    def as_dict(self, truth: Optional[float] = None) -> dict:
        out = {
            "source": self.source,
            "target": self.target,
            "naive": self.naive,
            "graph": self.graph,
            "metric": self.metric,
            "path": [int(v) for v in self.path],
            "graph_path": [int(v) for v in self.graph_path],
        }
        if truth is not None:
            out["truth"] = float(truth)
            for key in ("naive", "graph", "metric"):
                out[f"{key}_relative_error"] = (
                    abs(out[key] - truth) / truth if truth else abs(out[key])
                )
        return out


def _shortest(n, i, j, w, source, target):
    mat = sp.csr_matrix((w, (i, j)), shape=(n, n))
    dist, pred = csgraph.dijkstra(mat, directed=False, indices=source, return_predecessors=True)
    if not np.isfinite(dist[target]):
        raise ValueError(f"point {target} is unreachable from {source} in the graph")
    path = [int(target)]
    while path[-1] != source:
        path.append(int(pred[path[-1]]))
    return float(dist[target]), path[::-1]


def geodesic_distance(G, metric, F, source: int, target: int) -> GeodesicResult:
    """Naive, graph and metric-corrected distances between two points.

    Only the edge pattern of ``G`` is used (self loops ignored); edge
    costs are recomputed from the embedding coordinates.
    """
    X = _coords(F)
    h = _h(metric)
    n = X.shape[0]
    for idx in (source, target):
        if not 0 <= idx < n:
            raise IndexError(f"point index {idx} out of range for {n} points")
    naive = float(np.linalg.norm(X[source] - X[target]))
    if source == target:
        return GeodesicResult(source, target, 0.0, 0.0, 0.0, [source], [source])

    mat = getattr(G, "matrix", G)
    upper = sp.triu(sp.csr_matrix(mat), k=1).tocoo()
    i, j = upper.row, upper.col
    w_graph = np.linalg.norm(X[i] - X[j], axis=1)
    w_metric = _edge_lengths(X, h, i, j)
    # zero-length edges would vanish from the sparse matrix
    tiny = np.finfo(float).tiny
    d_graph, graph_path = _shortest(n, i, j, np.maximum(w_graph, tiny), source, target)
    d_metric, path = _shortest(n, i, j, np.maximum(w_metric, tiny), source, target)
    return GeodesicResult(source, target, naive, d_graph, d_metric, path, graph_path)


@dataclass
class Chart:
    """Tangent-plane coordinates around ``center``.

    ``coords[k]`` are the chart coordinates of ``members[k]``:
    ``basis' (f(q) - f(center))``.
    """

    center: int
    members: np.ndarray
    coords: np.ndarray
    basis: np.ndarray
    origin: np.ndarray

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def project(self, F) -> np.ndarray:
        """Chart coordinates of every row of ``F`` (not only the members)."""
        return (_coords(F) - self.origin) @ self.basis

    def local_index(self, points) -> np.ndarray:
        """Positions of global indices ``points`` inside ``members``."""
        points = np.asarray(points, dtype=int)
        lookup = {int(m): k for k, m in enumerate(self.members)}
        try:
            return np.array([lookup[int(q)] for q in points], dtype=int)
        except KeyError as exc:
            raise ValueError(f"point {exc.args[0]} is not a chart member") from None


def tangent_chart(F, metric: MetricField, p: int, radius=None, k=None, members=None) -> Chart:
    """Project a neighborhood of ``f(p)`` onto the tangent plane at ``p``.

    The tangent plane is spanned by the top ``d`` eigenvectors of
    ``h(p)``.  The neighborhood is given explicitly by ``members``, or as
    the ``k`` nearest points, or all points within ``radius``, both
    measured in embedding coordinates.  ``p`` is always a member.
    """
    X = _coords(F)
    d = metric.d
    if not metric.eigenvalues[p, d - 1] > 0:
        raise RankDeficientError(f"h({p}) has rank below {d}")
    if members is None:
        dist = np.linalg.norm(X - X[p], axis=1)
        if k is not None:
            members = np.argsort(dist, kind="stable")[:k]
        elif radius is not None:
            members = np.nonzero(dist <= radius)[0]
        else:
            raise ValueError("give one of radius, k or members")
    members = np.unique(np.concatenate([[p], np.asarray(members, dtype=int)]))
    if members.size < d + 1:
        raise ValueError(f"chart needs at least {d + 1} points, got {members.size}")
    basis = metric.tangent_basis(p).copy()
    origin = X[p].copy()
    coords = (X[members] - origin) @ basis
    coords[members == p] = 0.0
    return Chart(int(p), members, coords, basis, origin)


def chart_metric(Lop: LaplacianOperator, chart: Chart, F, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Metric of the chart coordinates at every chart member, ``(|U|, d, d)``.

    The chart projection is applied to all points so the Laplacian sees
    a complete coordinate function; only member rows are returned.  The
    ``d x d`` dual metric is inverted in full.
    """
    x_all = chart.project(F)
    dual = dual_metric(Lop, x_all).values[chart.members]
    lam, U = np.linalg.eigh(dual)
    bad = ~(lam[:, 0] > floor * np.maximum(lam[:, -1], 0.0)) | ~(lam[:, -1] > 0)
    if np.any(bad):
        q = int(chart.members[np.nonzero(bad)[0][0]])
        raise RankDeficientError(f"singular chart dual metric at point {q}")
    h = np.einsum("nik,nk,njk->nij", U, 1.0 / lam, U)
    return 0.5 * (h + np.swapaxes(h, 1, 2))


def _polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_convex(poly, clip):
    """Sutherland-Hodgman: ``poly`` clipped by the CCW convex polygon ``clip``."""
    out = poly
    m = len(clip)
    for e in range(m):
        if len(out) == 0:
            break
        a, b = clip[e], clip[(e + 1) % m]
        edge = b - a
        inp, out = out, []
        side = edge[0] * (inp[:, 1] - a[1]) - edge[1] * (inp[:, 0] - a[0])
        for k in range(len(inp)):
            cur, prev = inp[k], inp[k - 1]
            sc, sp_ = side[k], side[k - 1]
            if sc >= 0:
                if sp_ < 0:
                    out.append(prev + (cur - prev) * (sp_ / (sp_ - sc)))
                out.append(cur)
            elif sp_ >= 0:
                out.append(prev + (cur - prev) * (sp_ / (sp_ - sc)))
        out = np.array(out) if out else np.empty((0, 2))
    return out


def voronoi_cell_areas(xy):
    """Voronoi cell areas of 2-D points, cells clipped to the convex hull.

    Returns ``(areas, boundary)`` where ``boundary[k]`` flags cells that
    reach the hull and were clipped.  The clipped areas partition the
    hull.
    """
    xy = np.asarray(xy, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError("Voronoi areas are implemented for d = 2 only")
    n = xy.shape[0]
    try:
        hull = ConvexHull(xy)
    except (QhullError, ValueError) as exc:
        raise ValueError(f"degenerate (collinear or too few) chart points: {exc}") from None
    clip = xy[hull.vertices]  # counter-clockwise for 2-D hulls

    center = xy.mean(axis=0)
    span = np.ptp(xy, axis=0).max()
    far = center + 10.0 * span * np.array(
        [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, 1], [1, -1], [-1, -1]], dtype=float
    )
    vor = Voronoi(np.vstack([xy, far]))

    areas = np.empty(n)
    boundary = np.zeros(n, dtype=bool)
    for k in range(n):
        region = vor.regions[vor.point_region[k]]
        verts = vor.vertices[region]
        ang = np.arctan2(verts[:, 1] - xy[k, 1], verts[:, 0] - xy[k, 0])
        verts = verts[np.argsort(ang)]
        raw = _polygon_area(verts)
        clipped = _clip_convex(verts, clip)
        areas[k] = _polygon_area(clipped) if len(clipped) >= 3 else 0.0
        boundary[k] = areas[k] < raw * (1 - 1e-12)
    return areas, boundary


def _volume(chart, weights, W):
    if chart.d != 2:
        raise ValueError(f"volume estimation is implemented for d = 2, chart has d = {chart.d}")
    W = np.asarray(W, dtype=int).ravel()
    if W.size == 0:
        return 0.0
    local = chart.local_index(W)
    areas, boundary = voronoi_cell_areas(chart.coords)
    if np.any(boundary[local]):
        warnings.warn(
            f"{int(boundary[local].sum())} cells of W touch the chart boundary; "
            "their areas are clipped to the convex hull",
            stacklevel=3,
        )
    return float(np.sum(weights[local] * areas[local]))


def voronoi_volume(chart: Chart, h_chart, W) -> float:
    """Area of ``W`` as ``sum_p sqrt(det h(p)) * cell_area(p)`` over chart Voronoi cells.

    ``h_chart`` is the ``(|U|, 2, 2)`` output of :func:`chart_metric`;
    ``W`` lists global point indices, all chart members.
    """
    h_chart = np.asarray(h_chart, dtype=float)
    vol = np.sqrt(np.maximum(np.linalg.det(h_chart), 0.0))
    return _volume(chart, vol, W)


def naive_volume(chart: Chart, W) -> float:
    """Euclidean Voronoi area of ``W`` in chart coordinates."""
    return _volume(chart, np.ones(chart.members.size), W)


def _sqrt_factor(metric: MetricField, p: int):
    d = metric.d
    mu = metric.eigenvalues[p, :d]
    if not mu[-1] > 0:
        raise RankDeficientError(f"h({p}) has rank below {d}")
    return metric.eigenvectors[p, :, :d], np.sqrt(mu)


def locally_isometric_transform(F, metric: MetricField, p: int, drop: bool = False) -> Embedding:
    """Linearly recoordinatize so that the metric at ``p`` becomes the identity.

    Every coordinate vector is multiplied by the symmetric square root of
    ``h(p)`` on its range, and by the identity on the complement.  With
    ``drop=True`` only the ``d`` tangent coordinates are kept.
    """
    X = _coords(F)
    if not 0 <= p < X.shape[0]:
        raise IndexError(f"anchor {p} out of range for {X.shape[0]} points")
    Ud, root = _sqrt_factor(metric, p)
    tangent = (X @ Ud) * root
    if drop:
        out = tangent
    else:
        # A = Ud diag(root) Ud' + (I - Ud Ud')
        out = X + (tangent - X @ Ud) @ Ud.T
    params = {"anchor": int(p), "drop": bool(drop)}
    if isinstance(F, Embedding):
        params["source"] = F.algorithm
    return Embedding(out, "locally_isometric", params)


def procrustes_dissimilarity(X, Y) -> float:
    """Residual of the best similarity fit of ``Y`` onto ``X``, normalized.

    ``min_{R, c, t} sum |x_i - (c R y_i + t)|^2 / sum |x_i - mean(x)|^2``
    over orthogonal ``R`` (reflections allowed), ``c >= 0`` and
    translations ``t``.  The value lies in ``[0, 1]``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape or X.ndim != 2:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    if X.shape[0] < 2:
        raise ValueError("need at least two points")
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    sx = np.sum(Xc * Xc)
    if sx <= 0:
        raise ValueError("reference configuration X has zero variance")
    sy = np.sum(Yc * Yc)
    if sy <= 0:
        return 1.0
    sv = np.linalg.svd(Xc.T @ Yc, compute_uv=False)
    return float(min(max(1.0 - sv.sum() ** 2 / (sx * sy), 0.0), 1.0))


def tangent_projection(points, d: int) -> np.ndarray:
    """Centered points projected onto their top ``d`` principal directions."""
    Q = np.asarray(points, dtype=float)
    Q = Q - Q.mean(axis=0)
    if Q.shape[0] < 2:
        raise ValueError("need at least two points")
    _, _, Vt = np.linalg.svd(Q, full_matrices=False)
    if Vt.shape[0] < d:
        raise ValueError(f"cannot project {Q.shape} onto {d} directions")
    return Q @ Vt[:d].T


def _pad(A, width):
    return np.hstack([A, np.zeros((A.shape[0], width - A.shape[1]))]) if A.shape[1] < width else A


@dataclass
class IsometricView:
    """Locally isometric view around ``anchor`` and how well it matches the data.

    ``before`` and ``after`` are Procrustes dissimilarities between the
    original neighborhood, projected on its tangent plane, and the same
    neighborhood in the embedding before and after the transform.
    """

    anchor: int
    neighborhood: np.ndarray
    transformed: Embedding
    reference: np.ndarray
    before: float
    after: float

    def as_dict(self) -> dict:
        return {
            "anchor": self.anchor,
            "neighborhood": [int(q) for q in self.neighborhood],
            "procrustes_before": self.before,
            "procrustes_after": self.after,
        }


def isometric_view(P, F, metric: MetricField, p: int, neighborhood) -> IsometricView:
    """Transform ``F`` to be isometric at ``p`` and score the neighborhood.

    The reference is the original neighborhood of ``p`` projected on its
    ``d`` principal directions.  When the embedding is wider than ``d``
    the reference is zero-padded, the usual Procrustes convention for
    configurations of unequal width.
    """
    pts = np.asarray(getattr(P, "points", P), dtype=float)
    X = _coords(F)
    if pts.shape[0] != X.shape[0]:
        raise ValueError(f"{pts.shape[0]} data points but {X.shape[0]} embedded points")
    if not 0 <= p < X.shape[0]:
        raise IndexError(f"anchor {p} out of range for {X.shape[0]} points")
    nb = np.union1d(np.asarray(neighborhood, dtype=int), [p])
    if nb.size < metric.d + 1:
        raise ValueError(f"neighborhood needs at least {metric.d + 1} points, got {nb.size}")
    ref = _pad(tangent_projection(pts[nb], metric.d), X.shape[1])
    moved = locally_isometric_transform(F, metric, p)
    before = procrustes_dissimilarity(ref, X[nb])
    after = procrustes_dissimilarity(ref, moved.coords[nb])
    return IsometricView(int(p), nb, moved, ref, before, after)
