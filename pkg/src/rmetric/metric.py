"""Embedding metric estimation.

The dual metric at every point comes from applying the graph Laplacian
to products of embedding coordinates::

    h~^{ij} = 1/2 [ L(f^i f^j) - f^i L(f^j) - f^j L(f^i) ]

and the embedding metric is its rank-``d`` pseudoinverse.  Only the
upper triangle ``i <= j`` is computed, so every ``h~(p)`` is exactly
symmetric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .embed import Embedding, isomap, spectral_embedding
from .laplacian import LaplacianOperator, build_laplacian
from .neighbors import NeighborhoodGraph, heat_kernel_graph, DEFAULT_CUTOFF

DEFAULT_FLOOR = 1e-12


class RankDeficientError(ValueError):
    """The dual metric has fewer than ``d`` eigenvalues above the floor."""


@dataclass
class DualMetricField:
    """Per-point symmetric ``(s, s)`` dual metric, stored as ``(n, s, s)``."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def s(self) -> int:
        return self.values.shape[1]

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues per point, descending, ``(n, s)``."""
        return np.linalg.eigvalsh(self.values)[:, ::-1]

    def negative_mass(self) -> np.ndarray:
        """Per-point share of absolute eigenvalue mass that is negative."""
        ev = self.eigenvalues()
        total = np.abs(ev).sum(axis=1)
        neg = np.abs(np.minimum(ev, 0.0)).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, neg / total, 0.0)


@dataclass
class MetricField:
    """Per-point embedding metric ``h(p)`` of rank ``d``.

    Attributes:
        eigenvalues: ``(n, s)``, descending; the last ``s - d`` are exactly 0.
        eigenvectors: ``(n, s, s)``, column ``k`` pairs with eigenvalue ``k``.
        d: intrinsic dimension.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    d: int

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def s(self) -> int:
        return self.eigenvalues.shape[1]

    @property
    def h(self) -> np.ndarray:
        """Assembled ``U diag(mu) U'`` per point, ``(n, s, s)``."""
        U = self.eigenvectors
        m = np.einsum("nik,nk,njk->nij", U, self.eigenvalues, U)
        return 0.5 * (m + np.swapaxes(m, 1, 2))

    def tangent_basis(self, p: int) -> np.ndarray:
        """``(s, d)`` orthonormal basis of the tangent space at point ``p``."""
        return self.eigenvectors[p, :, : self.d]

    @classmethod
    def from_matrices(cls, h: np.ndarray, d: int) -> "MetricField":
        """Wrap given ``(n, s, s)`` PSD matrices; the top ``d`` eigenpairs are kept."""
        h = np.asarray(h, dtype=float)
        if h.ndim == 2:
            h = h[None]
        ev, U = np.linalg.eigh(0.5 * (h + np.swapaxes(h, 1, 2)))
        ev, U = ev[:, ::-1].copy(), U[:, :, ::-1].copy()
        ev[:, d:] = 0.0
        return cls(ev, U, d)

    def write_jsonl(self, path) -> None:
        """One JSON record per point; matrices flattened row-major."""
        hs = self.h
        with open(path, "w") as fh:
            for i in range(self.n):
                rec = {
                    "index": i,
                    "d": self.d,
                    "eigenvalues": [float(v) for v in self.eigenvalues[i]],
                    "eigenvectors": [float(v) for v in self.eigenvectors[i].ravel()],
                    "h": [float(v) for v in hs[i].ravel()],
                }
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "MetricField":
        recs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        if not recs:
            raise ValueError(f"{path}: empty metric file")
        recs.sort(key=lambda r: r["index"])
        s = len(recs[0]["eigenvalues"])
        ev = np.array([r["eigenvalues"] for r in recs], dtype=float)
        U = np.array([r["eigenvectors"] for r in recs], dtype=float).reshape(-1, s, s)
        return cls(ev, U, int(recs[0]["d"]))


def _coords(F):
    return np.asarray(getattr(F, "coords", F), dtype=float)


def dual_metric(Lop: LaplacianOperator, F) -> DualMetricField:
    """Dual metric ``h~(p)`` at every point from the Laplacian and coordinates.

    ``F`` is an :class:`Embedding` or an ``(n, s)`` array row-aligned with
    the Laplacian.
    """
    X = _coords(F)
    if X.ndim == 1:
        X = X[:, None]
    n, s = X.shape
    if n != Lop.n:
        raise ValueError(f"embedding has {n} rows but the Laplacian is {Lop.n} x {Lop.n}")
    if s < 1:
        raise ValueError("need at least one coordinate")

    iu, ju = np.triu_indices(s)
    products = X[:, iu] * X[:, ju]
    L_prod = Lop.matrix @ products
    LX = Lop.matrix @ X
    cols = 0.5 * (L_prod - X[:, iu] * LX[:, ju] - X[:, ju] * LX[:, iu])

    values = np.empty((n, s, s))
    values[:, iu, ju] = cols
    values[:, ju, iu] = cols
    return DualMetricField(values)


def _pinv_stack(hd: np.ndarray, d: int, floor: float):
    """Rank-``d`` pseudoinverse of a stack of symmetric matrices."""
    s = hd.shape[-1]
    if not 1 <= d <= s:
        raise ValueError(f"need 1 <= d <= s, got d={d}, s={s}")
    lam, U = np.linalg.eigh(hd)
    lam, U = lam[:, ::-1], U[:, :, ::-1]
    top = lam[:, :d]
    bad = ~(top[:, -1] > floor * np.maximum(top[:, 0], 0.0)) | ~(top[:, 0] > 0)
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise RankDeficientError(
            f"metric rank deficient below requested d={d} at point {i}: "
            f"dual-metric eigenvalues {lam[i].tolist()} (floor {floor:g} relative); "
            f"check d or the bandwidth"
        )
    # eigenvalues of h are the reciprocals, so the order reverses
    mu = np.zeros_like(lam)
    mu[:, :d] = 1.0 / top[:, ::-1]
    vecs = np.concatenate([U[:, :, :d][:, :, ::-1], U[:, :, d:]], axis=2)
    return mu, np.ascontiguousarray(vecs)


def pseudo_inverse(h_dual, d: int, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Rank-``d`` pseudoinverse of one symmetric ``(s, s)`` dual metric.

    Keeps the ``d`` algebraically largest eigenvalues, inverts them and
    zeros the rest.  Raises :class:`RankDeficientError` when the ``d``-th
    largest eigenvalue is not above ``floor`` times the largest.
    """
    hd = np.asarray(h_dual, dtype=float)
    if hd.ndim != 2 or hd.shape[0] != hd.shape[1]:
        raise ValueError("expected a square matrix")
    mu, U = _pinv_stack(0.5 * (hd + hd.T)[None], d, floor)
    return MetricField(mu, U, d).h[0]


def metric_from_dual(dual: DualMetricField, d: int, floor: float = DEFAULT_FLOOR) -> MetricField:
    """Pointwise rank-``d`` pseudoinverse of a whole dual-metric field."""
    mu, U = _pinv_stack(dual.values, d, floor)
    return MetricField(mu, U, d)


class LearnMetricResult(NamedTuple):
    embedding: Embedding
    metric: MetricField
    dual: DualMetricField
    laplacian: LaplacianOperator
    graph: NeighborhoodGraph


def identity_embedder(P, Lop, s, **_):
    """Pass the raw coordinates through unchanged (requires ``s == r``)."""
    pts = np.asarray(getattr(P, "points", P), dtype=float)
    if pts.shape[1] != s:
        raise ValueError(f"identity embedding needs s == r, got s={s}, r={pts.shape[1]}")
    return Embedding(pts.copy(), "identity", {"s": s})


def _spectral_embedder(P, Lop, s, diffusion_time=None, **_):
    return spectral_embedding(Lop, s, diffusion_time=diffusion_time)


def _isomap_embedder(P, Lop, s, k=10, **_):
    return isomap(P, k, s)


EMBEDDERS = {
    "spectral": _spectral_embedder,
    "isomap": _isomap_embedder,
    "identity": identity_embedder,
}


def learn_metric(
    P,
    epsilon: float,
    s: int,
    d: int,
    embedder: Union[str, Callable] = "spectral",
    lam: float = 1.0,
    cutoff: float = DEFAULT_CUTOFF,
    floor: float = DEFAULT_FLOOR,
    self_loops: bool = True,
    **embedder_kw,
) -> LearnMetricResult:
    """Embed ``P`` and estimate the embedding metric of that embedding.

    Heat-kernel graph, renormalized Laplacian, embedding, dual metric,
    rank-``d`` pseudoinverse; all outputs are row-aligned with ``P``.

    ``embedder`` is ``"spectral"``, ``"isomap"``, ``"identity"`` or a
    callable ``(P, laplacian, s, **kw) -> Embedding``.  Extra keyword
    arguments (``k``, ``diffusion_time``) go to the embedder.
    """
    if not 1 <= d <= s:
        raise ValueError(f"need 1 <= d <= s, got d={d}, s={s}")
    G = heat_kernel_graph(P, epsilon, cutoff, self_loops)
    Lop = build_laplacian(G, epsilon, lam)
    fn = EMBEDDERS[embedder] if isinstance(embedder, str) else embedder
    emb = fn(P, Lop, s, **embedder_kw)
    if emb.coords.shape != (Lop.n, s):
        raise ValueError(f"embedder returned shape {emb.coords.shape}, expected {(Lop.n, s)}")
    dual = dual_metric(Lop, emb)
    metric = metric_from_dual(dual, d, floor)
    return LearnMetricResult(emb, metric, dual, Lop, G)


@dataclass
class DistortionStats:
    """Per-point distortion of an embedding metric and global summaries.

    ``deviation`` is ``max_k |mu_k - 1|`` over the ``d`` nonzero
    eigenvalues; ``anisotropy`` is ``mu_1 / mu_d``.  Both are 0 and 1
    respectively for a locally isometric embedding.
    """

    eigenvalues: np.ndarray
    anisotropy: np.ndarray
    deviation: np.ndarray
    histogram: tuple

    def summary(self) -> dict:
        def agg(a):
            return {"mean": float(np.mean(a)), "median": float(np.median(a)),
                    "max": float(np.max(a)), "min": float(np.min(a))}

        counts, edges = self.histogram
        return {
            "n": int(self.anisotropy.shape[0]),
            "anisotropy": agg(self.anisotropy),
            "deviation": agg(self.deviation),
            "log_anisotropy_histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
        }


def distortion_stats(M: MetricField, bins: int = 20) -> DistortionStats:
    mu = M.eigenvalues[:, : M.d]
    with np.errstate(divide="ignore"):
        aniso = mu[:, 0] / mu[:, -1]
    dev = np.max(np.abs(mu - 1.0), axis=1)
    hist = np.histogram(np.log10(aniso), bins=bins)
    return DistortionStats(mu.copy(), aniso, dev, hist)
