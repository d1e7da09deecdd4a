"""Synthetic manifolds with known geometry, plus CSV point-cloud I/O.

Every sampler takes an explicit integer seed and builds its own
``numpy.random.Generator``, so identical arguments reproduce identical
clouds bit for bit.  Samplers attach the generating parameters as
``labels`` so experiments can select regions and compute ground truth.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate

MANIFOLDS = ("swiss_roll_hole", "half_sphere", "hourglass", "flat_strip")


@dataclass
class PointCloud:
    """``n`` points in ``R^r``, optionally with per-point labels.

    ``labels`` is either ``(n,)`` or ``(n, k)``; the samplers store their
    generating parameters there (e.g. ``(t, y)`` for the swiss roll).
    """

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    label_names: tuple = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.nonzero(~np.all(np.isfinite(pts), axis=1))[0][0])
            raise ValueError(f"non-finite coordinate in row {bad}")
        self.points = pts
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=float)
            if self.labels.shape[0] != pts.shape[0]:
                raise ValueError("labels must have one entry per point")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def r(self) -> int:
        return self.points.shape[1]


@dataclass
class ManifoldSpec:
    """A named test manifold, its shape parameters and a seed.

    Unknown keys in ``params`` are rejected by the sampler; missing keys
    take the sampler's defaults.
    """

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MANIFOLDS:
            raise ValueError(
                f"unknown manifold {self.kind!r}; valid names: {', '.join(MANIFOLDS)}"
            )

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "params": self.params, "seed": self.seed},
            sort_keys=True,
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ManifoldSpec":
        raw = json.loads(text)
        return cls(raw["kind"], dict(raw.get("params", {})), int(raw.get("seed", 0)))


def sample(spec: ManifoldSpec, n: int) -> PointCloud:
    """Dispatch to the sampler named by ``spec.kind``."""
    samplers = {
        "swiss_roll_hole": sample_swiss_roll_hole,
        "half_sphere": sample_half_sphere,
        "hourglass": sample_hourglass,
        "flat_strip": sample_flat_strip,
    }
    try:
        return samplers[spec.kind](n, seed=spec.seed, **spec.params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {spec.kind}: {exc}") from None


def _check_n(n):
    if n < 0:
        raise ValueError(f"sample size must be non-negative, got {n}")


def sample_swiss_roll_hole(
    n: int,
    seed: int = 0,
    t_range=(1.5 * math.pi, 4.5 * math.pi),
    y_range=(0.0, 21.0),
    hole=None,
) -> PointCloud:
    """Swiss roll ``(t cos t, y, t sin t)`` with a rectangular hole.

    ``(t, y)`` is uniform on ``t_range x y_range`` minus the hole.  The
    hole is ``((t0, t1), (y0, y1))`` and defaults to the centred rectangle
    covering the middle third of each range.  Pass ``hole=()`` for a
    plain swiss roll.
    """
    _check_n(n)
    t_lo, t_hi = map(float, t_range)
    y_lo, y_hi = map(float, y_range)
    if not (t_lo < t_hi and y_lo < y_hi):
        raise ValueError("empty parameter rectangle")
    if hole is None:
        dt, dy = (t_hi - t_lo) / 3, (y_hi - y_lo) / 3
        hole = ((t_lo + dt, t_hi - dt), (y_lo + dy, y_hi - dy))
    if len(hole):
        (h_t0, h_t1), (h_y0, h_y1) = hole
        if not (t_lo < h_t0 < h_t1 < t_hi and y_lo < h_y0 < h_y1 < y_hi):
            raise ValueError(
                f"hole {hole} must lie strictly inside the parameter rectangle "
                f"{(t_lo, t_hi)} x {(y_lo, y_hi)}"
            )

    rng = np.random.default_rng(seed)
    params = np.empty((0, 2))
    while params.shape[0] < n:
        batch = rng.uniform((t_lo, y_lo), (t_hi, y_hi), size=(max(2 * n, 16), 2))
        if len(hole):
            inside = (
                (batch[:, 0] > h_t0)
                & (batch[:, 0] < h_t1)
                & (batch[:, 1] > h_y0)
                & (batch[:, 1] < h_y1)
            )
            batch = batch[~inside]
        params = np.vstack([params, batch])
    t, y = params[:n, 0], params[:n, 1]
    pts = np.column_stack([t * np.cos(t), y, t * np.sin(t)])
    return PointCloud(pts, params[:n].copy(), ("t", "y"))


def sample_half_sphere(n: int, seed: int = 0) -> PointCloud:
    """Area-uniform sample of the unit upper hemisphere ``{|p| = 1, z >= 0}``.

    Labels are ``(polar angle, azimuth)``.
    """
    _check_n(n)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, 3))
    norms = np.linalg.norm(g, axis=1)
    # a zero draw has probability zero; guard anyway
    norms[norms == 0] = 1.0
    pts = g / norms[:, None]
    pts[:, 2] = np.abs(pts[:, 2])
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    polar = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
    azim = np.arctan2(pts[:, 1], pts[:, 0])
    return PointCloud(pts, np.column_stack([polar, azim]), ("polar", "azimuth"))


HALF_SPHERE_TARGETS = np.array(
    [[math.sqrt(0.5), 0.0, math.sqrt(0.5)], [-math.sqrt(0.5), 0.0, math.sqrt(0.5)]]
)
HALF_SPHERE_TARGET_DISTANCE = math.pi / 2


def half_sphere_endpoints(cloud: PointCloud, snap: bool = True):
    """Pick two points at geodesic distance pi/2 on a half-sphere sample.

    The samples nearest to ``(+-sqrt(1/2), 0, sqrt(1/2))`` are chosen.
    With ``snap`` they are moved onto those targets exactly, so the true
    distance is exactly pi/2; otherwise the true distance between the
    chosen samples is returned.

    Returns ``(cloud, (i, j), truth, displacement)`` where
    ``displacement`` holds how far each chosen sample was from its target.
    """
    pts = cloud.points.copy()
    idx, disp = [], []
    for target in HALF_SPHERE_TARGETS:
        dist = np.linalg.norm(pts - target, axis=1)
        if idx:
            dist[idx] = np.inf
        k = int(np.argmin(dist))
        idx.append(k)
        disp.append(float(dist[k]))
    i, j = idx
    if snap:
        pts[[i, j]] = HALF_SPHERE_TARGETS
        truth = HALF_SPHERE_TARGET_DISTANCE
    else:
        truth = float(np.arccos(np.clip(pts[i] @ pts[j], -1.0, 1.0)))
    labels = cloud.labels
    if snap and labels is not None:
        labels = labels.copy()
        for k, target in zip(idx, HALF_SPHERE_TARGETS):
            labels[k] = (math.acos(target[2]), math.atan2(target[1], target[0]))
    return PointCloud(pts, labels, cloud.label_names), (i, j), truth, np.array(disp)


def hourglass_profile(z, c0: float = 1.0, c1: float = 0.75):
    """Radius ``rho(z) = c0 + c1 z^2`` and its derivative."""
    z = np.asarray(z, dtype=float)
    return c0 + c1 * z * z, 2.0 * c1 * z


def _hourglass_density(z, c0, c1):
    rho, drho = hourglass_profile(z, c0, c1)
    return rho * np.sqrt(1.0 + drho * drho)


def hourglass_area(z0, z1, theta0=0.0, theta1=2 * math.pi, c0=1.0, c1=0.75) -> float:
    """Surface area of the hourglass patch ``z0<=z<=z1, theta0<=theta<=theta1``.

    Computed by adaptive quadrature of ``rho sqrt(1 + rho'^2)`` in ``z``.
    """
    val, _ = integrate.quad(_hourglass_density, z0, z1, args=(c0, c1), epsabs=1e-13)
    return float((theta1 - theta0) * val)


def sample_hourglass(
    n: int, seed: int = 0, c0: float = 1.0, c1: float = 0.75, z_range=(-1.0, 1.0)
) -> PointCloud:
    """Area-uniform sample of the surface of revolution of ``rho(z) = c0 + c1 z^2``.

    ``z`` is drawn by rejection against ``rho(z) sqrt(1 + rho'(z)^2)`` and
    the angle uniformly.  Labels are ``(z, theta)`` with theta in
    ``[-pi, pi)``.
    """
    _check_n(n)
    z_lo, z_hi = map(float, z_range)
    if not z_lo < z_hi:
        raise ValueError("empty height interval")
    # rho is quadratic in z: its extremes are at the endpoints or at z = 0
    probe = np.concatenate([[z_lo, z_hi, min(max(0.0, z_lo), z_hi)], np.linspace(z_lo, z_hi, 2001)])
    if hourglass_profile(probe, c0, c1)[0].min() <= 0:
        raise ValueError("hourglass profile radius must be strictly positive on the height interval")
    # 1% headroom over the gridded maximum keeps the rejection envelope valid
    dens_max = 1.01 * float(_hourglass_density(probe, c0, c1).max())

    rng = np.random.default_rng(seed)
    zs = np.empty(0)
    while zs.size < n:
        m = max(2 * n, 16)
        cand = rng.uniform(z_lo, z_hi, m)
        keep = rng.uniform(0.0, dens_max, m) < _hourglass_density(cand, c0, c1)
        zs = np.concatenate([zs, cand[keep]])
    z = zs[:n]
    theta = rng.uniform(-math.pi, math.pi, n)
    rho, _ = hourglass_profile(z, c0, c1)
    pts = np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])
    return PointCloud(pts, np.column_stack([z, theta]), ("z", "theta"))


def sample_flat_strip(
    n: int, seed: int = 0, width: float = 1.0, length: float = 1.0, r: int = 2
) -> PointCloud:
    """Uniform sample of ``[0, length] x [0, width]`` in the first two of ``r`` coordinates."""
    _check_n(n)
    if width <= 0 or length <= 0:
        raise ValueError("strip width and length must be positive")
    if r < 2:
        raise ValueError("ambient dimension must be at least 2")
    rng = np.random.default_rng(seed)
    uv = rng.uniform((0.0, 0.0), (length, width), size=(n, 2))
    pts = np.zeros((n, r))
    pts[:, :2] = uv
    return PointCloud(pts, uv.copy(), ("u", "v"))


def write_csv(cloud: PointCloud, path, header: bool = False) -> None:
    """Write one point per row with 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header:
            fh.write(",".join(f"c{j}" for j in range(cloud.r)) + "\n")
        np.savetxt(fh, cloud.points, delimiter=",", fmt="%.17g")


def read_csv(path, header: Optional[bool] = None) -> PointCloud:
    """Read a rectangular numeric CSV.

    With ``header=None`` a first row whose cells are not all numeric is
    treated as a header; its cells become ``label_names``.  Ragged rows,
    non-numeric cells and NaN/inf values raise ``ValueError`` naming the
    offending data row (0-based).
    """
    rows = []
    with Path(path).open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if header is None and rows:
        try:
            [float(c) for c in rows[0]]
            header = False
        except ValueError:
            header = True
    names = ()
    if header and rows:
        names = tuple(c.strip() for c in rows[0])
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows; ambient dimension is undefined")

    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {i} has {len(row)} columns, expected {width}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise ValueError(f"{path}: non-numeric cell in row {i}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"{path}: non-finite value in row {i}")
        data[i] = vals
    return PointCloud(data, None, names)
