"""Command-line front end: ``rmetric <command> ...``.

Commands share a run directory with fixed file names:

    generate   points.csv, labels.csv, spec.json [, endpoints.json]
    metric     embedding.csv, embedding.json, metric.jsonl, report.json
    geodesic   geodesic.json
    volume     volume.json
    isovis     isovis.csv, isovis.json

Each command also writes ``config.<command>.json`` with its full
configuration.  Outputs are staged and moved into place only when the
command succeeds, so a failing command leaves nothing behind.  Set
``RMETRIC_THREADS`` to cap BLAS/LAPACK threads.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
import warnings
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.sparse import csgraph
import scipy.sparse as sp

from . import datasets
from .datasets import ManifoldSpec, PointCloud
from .embed import Embedding
from .geom import (
    _edge_lengths,
    chart_metric,
    geodesic_distance,
    isometric_view,
    naive_volume,
    tangent_chart,
    voronoi_volume,
)
from .laplacian import build_laplacian
from .metric import MetricField, distortion_stats, learn_metric
from .neighbors import DEFAULT_CUTOFF, heat_kernel_graph, knn_graph

SCHEMA_VERSION = 1
EMBEDDER_CHOICES = ("spectral", "isomap", "identity")


class CLIError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a command needs, validated up front and saved as JSON."""

    command: str
    out: str
    input: Optional[str] = None
    dataset: Optional[dict] = None
    n: Optional[int] = None
    seed: Optional[int] = None
    epsilon: Optional[float] = None
    tau: float = DEFAULT_CUTOFF
    lam: float = 1.0
    k: Optional[int] = None
    s: Optional[int] = None
    d: Optional[int] = None
    embedder: Optional[str] = None
    self_loops: bool = True
    diffusion_time: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.epsilon is not None and not self.epsilon > 0:
            raise CLIError(f"--epsilon must be positive, got {self.epsilon}")
        if not self.tau > 0:
            raise CLIError(f"--tau must be positive, got {self.tau}")
        if not 0.0 <= self.lam <= 1.0:
            raise CLIError(f"--lambda must lie in [0, 1], got {self.lam}")
        if self.k is not None and self.k < 1:
            raise CLIError(f"--k must be at least 1, got {self.k}")
        if self.s is not None and self.s < 1:
            raise CLIError(f"--s must be at least 1, got {self.s}")
        if self.d is not None and self.s is not None and not 1 <= self.d <= self.s:
            raise CLIError(f"need 1 <= d <= s, got d={self.d}, s={self.s}")
        if self.n is not None and self.n < 1:
            raise CLIError(f"--n must be positive, got {self.n}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


class _Staged:
    """Collect outputs in a hidden directory; publish them only on success."""

    def __init__(self, out: Path):
        self.out = out
        self.created = False
        self.tmp = None

    def __enter__(self):
        if not self.out.exists():
            self.out.mkdir(parents=True)
            self.created = True
        elif not self.out.is_dir():
            raise CLIError(f"{self.out} exists and is not a directory")
        self.tmp = Path(tempfile.mkdtemp(prefix=".rmetric-", dir=self.out))
        return self

    def path(self, name: str) -> Path:
        return self.tmp / name

    def write_json(self, name: str, obj) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for f in sorted(self.tmp.iterdir()):
                os.replace(f, self.out / f.name)
        shutil.rmtree(self.tmp, ignore_errors=True)
        if exc_type is not None and self.created and not any(self.out.iterdir()):
            self.out.rmdir()
        return False


def _thread_limit():
    raw = os.environ.get("RMETRIC_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise CLIError(f"RMETRIC_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise CLIError(f"RMETRIC_THREADS must be at least 1, got {n}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _report(kind: str, body: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, **body}


def _read_config(run: Path, command: str) -> dict:
    path = run / f"config.{command}.json"
    if not path.exists():
        raise CLIError(f"{run} has no {path.name}; run `rmetric {command}` first")
    return json.loads(path.read_text())


def _load_points(run: Path) -> PointCloud:
    path = run / "points.csv"
    if not path.exists():
        raise CLIError(f"{run} has no points.csv")
    cloud = datasets.read_csv(path)
    labels_path = run / "labels.csv"
    if labels_path.exists():
        labels = datasets.read_csv(labels_path, header=True)
        cloud = PointCloud(cloud.points, labels.points, labels.label_names)
    return cloud


def _load_metric_run(run: Path):
    cfg = _read_config(run, "metric")
    cloud = _load_points(run)
    emb = Embedding.load(run / "embedding.csv", run / "embedding.json")
    metric = MetricField.read_jsonl(run / "metric.jsonl")
    if emb.n != cloud.n or metric.n != cloud.n:
        raise CLIError(f"{run}: points, embedding and metric disagree on the number of rows")
    return cfg, cloud, emb, metric


def _heat_graph(cloud, cfg):
    return heat_kernel_graph(cloud, cfg["epsilon"], cfg["tau"], cfg.get("self_loops", True))


def _check_index(i, n, what):
    if not 0 <= i < n:
        raise CLIError(f"{what} {i} out of range for {n} points")


def _parse_param(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise CLIError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        raise CLIError(f"--param {key}: value {value!r} is not valid JSON") from None


# commands


def cmd_generate(args) -> dict:
    if (args.manifold is None) == (args.spec is None):
        raise CLIError("give exactly one of --manifold and --spec")
    try:
        if args.spec is not None:
            spec = ManifoldSpec.from_json(Path(args.spec).read_text())
            if args.param or args.seed is not None:
                raise CLIError("--param and --seed cannot be combined with --spec")
        else:
            params = dict(_parse_param(p) for p in args.param or [])
            spec = ManifoldSpec(args.manifold, params, 0 if args.seed is None else args.seed)
    except (ValueError, KeyError) as exc:
        raise CLIError(f"bad manifold spec: {exc}") from None
    cfg = RunConfig("generate", str(args.out), dataset=json.loads(spec.to_json()),
                    n=args.n, seed=spec.seed,
                    extra={"endpoints": args.endpoints, "header": args.header})
    cfg.validate()
    if args.endpoints and spec.kind != "half_sphere":
        raise CLIError("--endpoints is only defined for the half_sphere manifold")
    cloud = datasets.sample(spec, args.n)
    with _Staged(Path(args.out)) as st:
        report = {"n": cloud.n, "r": cloud.r, "spec": json.loads(spec.to_json())}
        if args.endpoints:
            cloud, (i, j), truth, disp = datasets.half_sphere_endpoints(cloud, snap=True)
            ends = {"source": i, "target": j, "truth": truth,
                    "displacement": disp.tolist(), "snapped": True}
            st.write_json("endpoints.json", _report("endpoints", ends))
            report["endpoints"] = ends
        datasets.write_csv(cloud, st.path("points.csv"), header=args.header)
        if cloud.labels is not None:
            lab = PointCloud(cloud.labels.reshape(cloud.n, -1), None, ())
            names = cloud.label_names or tuple(f"label{k}" for k in range(lab.r))
            np.savetxt(st.path("labels.csv"), lab.points, delimiter=",", fmt="%.17g",
                       header=",".join(names), comments="")
        st.path("spec.json").write_text(spec.to_json() + "\n")
        st.path("config.generate.json").write_text(cfg.to_json() + "\n")
    return report


def cmd_metric(args) -> dict:
    src = Path(args.input)
    if src.is_dir():
        cloud = _load_points(src)
        out = Path(args.out) if args.out else src
    elif src.exists():
        cloud = datasets.read_csv(src)
        if not args.out:
            raise CLIError("--out is required when the input is a CSV file")
        out = Path(args.out)
    else:
        raise CLIError(f"input {src} does not exist")
    cfg = RunConfig("metric", str(out), input=str(src), epsilon=args.epsilon, tau=args.tau,
                    lam=args.lam, k=args.k, s=args.s, d=args.d, embedder=args.embedder,
                    self_loops=not args.no_self_loops, diffusion_time=args.diffusion_time)
    cfg.validate()
    kw = {}
    if args.embedder == "isomap":
        kw["k"] = args.k if args.k is not None else 10
    if args.embedder == "spectral" and args.diffusion_time is not None:
        kw["diffusion_time"] = args.diffusion_time
    res = learn_metric(cloud, args.epsilon, args.s, args.d, embedder=args.embedder,
                       lam=args.lam, cutoff=args.tau, self_loops=cfg.self_loops, **kw)
    stats = distortion_stats(res.metric)
    neg = res.dual.negative_mass()
    report = _report("metric", {
        "n": cloud.n, "s": args.s, "d": args.d,
        "embedding": res.embedding.provenance(),
        "graph": {"edges": int((res.graph.matrix.nnz - cloud.n * cfg.self_loops) // 2)},
        "distortion": stats.summary(),
        "dual_negative_mass": {"mean": float(neg.mean()), "max": float(neg.max())},
    })
    with _Staged(out) as st:
        if out.resolve() != (src.resolve() if src.is_dir() else None):
            datasets.write_csv(cloud, st.path("points.csv"))
            if src.is_dir():
                for name in ("labels.csv", "spec.json", "endpoints.json", "config.generate.json"):
                    if (src / name).exists():
                        shutil.copyfile(src / name, st.path(name))
        res.embedding.save(st.path("embedding.csv"), st.path("embedding.json"))
        res.metric.write_jsonl(st.path("metric.jsonl"))
        st.write_json("report.json", report)
        st.path("config.metric.json").write_text(cfg.to_json() + "\n")
    return report


def cmd_geodesic(args) -> dict:
    run = Path(args.run)
    mcfg, cloud, emb, metric = _load_metric_run(run)
    source, target, truth = args.source, args.target, args.truth
    ends_path = run / "endpoints.json"
    if source is None or target is None:
        if not ends_path.exists():
            raise CLIError("give --source and --target (no endpoints.json in the run)")
        ends = json.loads(ends_path.read_text())
        source = ends["source"] if source is None else source
        target = ends["target"] if target is None else target
        if truth is None:
            truth = ends.get("truth")
    _check_index(source, cloud.n, "source")
    _check_index(target, cloud.n, "target")
    cfg = RunConfig("geodesic", str(run), input=str(run), k=args.k,
                    extra={"source": source, "target": target, "truth": truth})
    cfg.validate()
    G = knn_graph(cloud, args.k)
    result = geodesic_distance(G, metric, emb, source, target)
    body = result.as_dict(truth)
    body.update({"embedder": mcfg["embedder"], "path_graph": {"kind": "knn", "k": args.k}})
    report = _report("geodesic", body)
    with _Staged(run) as st:
        st.write_json("geodesic.json", report)
        st.path("config.geodesic.json").write_text(cfg.to_json() + "\n")
    return report


def _parse_box(text, names):
    parts = text.split(":")
    if len(parts) != 3:
        raise CLIError(f"--label-box expects name:lo:hi, got {text!r}")
    name, lo, hi = parts
    if name not in names:
        raise CLIError(f"unknown label {name!r}; available: {', '.join(names) or 'none'}")
    try:
        return names.index(name), float(lo), float(hi)
    except ValueError:
        raise CLIError(f"--label-box bounds must be numbers, got {text!r}") from None


def _metric_ball(G, metric, F, center, radius):
    """Points within metric-corrected graph distance ``radius`` of ``center``."""
    upper = sp.triu(G.matrix, k=1).tocoo()
    w = _edge_lengths(F, metric.h, upper.row, upper.col)
    mat = sp.csr_matrix((np.maximum(w, np.finfo(float).tiny), (upper.row, upper.col)),
                        shape=G.matrix.shape)
    dist = csgraph.dijkstra(mat, directed=False, indices=center, limit=radius)
    return np.nonzero(dist <= radius)[0]


def cmd_volume(args) -> dict:
    run = Path(args.run)
    mcfg, cloud, emb, metric = _load_metric_run(run)
    if metric.d != 2:
        raise CLIError(f"volume estimation needs d = 2, the run has d = {metric.d}")
    if (args.center is None) == (not args.label_box):
        raise CLIError("give either --center with --radius, or one or more --label-box")
    G = _heat_graph(cloud, mcfg)
    if args.center is not None:
        if args.radius is None:
            raise CLIError("--center needs --radius")
        _check_index(args.center, cloud.n, "center")
        W = _metric_ball(G, metric, emb.coords, args.center, args.radius)
        center = args.center
        region = {"type": "ball", "center": center, "radius": args.radius}
    else:
        if cloud.labels is None:
            raise CLIError("--label-box needs labels.csv in the run directory")
        labels = cloud.labels.reshape(cloud.n, -1)
        boxes = [_parse_box(b, list(cloud.label_names)) for b in args.label_box]
        mask = np.ones(cloud.n, dtype=bool)
        for col, lo, hi in boxes:
            mask &= (labels[:, col] >= lo) & (labels[:, col] <= hi)
        W = np.nonzero(mask)[0]
        # center: the member closest to the box midpoint, in box-normalized units
        center = None
        if W.size:
            z = np.zeros(W.size)
            for col, lo, hi in boxes:
                z += ((labels[W, col] - 0.5 * (lo + hi)) / max(hi - lo, 1e-300)) ** 2
            center = int(W[np.argmin(z)])
        region = {"type": "label_box", "boxes": args.label_box, "center": center}
    cfg = RunConfig("volume", str(run), input=str(run), extra={"region": region, "truth": args.truth})
    cfg.validate()

    body = {"region": region, "size": int(W.size), "embedder": mcfg["embedder"]}
    if W.size == 0:
        warnings.warn("the region is empty; its volume is 0")
        body.update({"naive": 0.0, "metric": 0.0, "boundary_cells": 0})
    else:
        mask = np.zeros(cloud.n)
        mask[W] = 1.0
        # chart = W plus one ring of graph neighbors, so W's cells are closed
        members = np.nonzero((G.adjacency() @ mask) + mask > 0)[0]
        chart = tangent_chart(emb, metric, center, members=members)
        Lop = build_laplacian(G, mcfg["epsilon"], mcfg["lam"])
        hc = chart_metric(Lop, chart, emb)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            body["naive"] = naive_volume(chart, W)
            body["metric"] = voronoi_volume(chart, hc, W)
        body["boundary_warnings"] = sorted({str(w.message) for w in caught})
    if args.truth is not None:
        body["truth"] = args.truth
        for key in ("naive", "metric"):
            body[f"{key}_relative_error"] = abs(body[key] - args.truth) / args.truth
    report = _report("volume", body)
    with _Staged(run) as st:
        st.write_json("volume.json", report)
        st.path("config.volume.json").write_text(cfg.to_json() + "\n")
    return report


def cmd_isovis(args) -> dict:
    run = Path(args.run)
    mcfg, cloud, emb, metric = _load_metric_run(run)
    _check_index(args.anchor, cloud.n, "anchor")
    cfg = RunConfig("isovis", str(run), input=str(run), extra={"anchor": args.anchor})
    cfg.validate()
    G = _heat_graph(cloud, mcfg)
    nb = G.matrix[args.anchor].indices
    view = isometric_view(cloud, emb, metric, args.anchor, nb)
    report = _report("isovis", {**view.as_dict(), "embedder": mcfg["embedder"]})
    with _Staged(run) as st:
        np.savetxt(st.path("isovis.csv"), view.transformed.coords, delimiter=",", fmt="%.17g")
        st.write_json("isovis.json", report)
        st.path("config.isovis.json").write_text(cfg.to_json() + "\n")
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmetric", description="Embedding metric estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a test manifold")
    g.add_argument("--manifold", help=f"one of: {', '.join(datasets.MANIFOLDS)}")
    g.add_argument("--spec", help="JSON manifold spec file instead of --manifold/--param/--seed")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=None, help="default 0")
    g.add_argument("--param", action="append", metavar="KEY=JSON",
                   help="shape parameter, e.g. --param 'y_range=[0, 21]'")
    g.add_argument("--header", action="store_true", help="write column names c0..c{r-1}")
    g.add_argument("--endpoints", action="store_true",
                   help="half_sphere: snap two points to geodesic distance pi/2")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("metric", help="embed and estimate the embedding metric")
    m.add_argument("input", help="run directory with points.csv, or a CSV file")
    m.add_argument("--epsilon", type=float, required=True)
    m.add_argument("--tau", type=float, default=DEFAULT_CUTOFF, help="cutoff: d^2 <= tau * epsilon")
    m.add_argument("--lambda", dest="lam", type=float, default=1.0)
    m.add_argument("--s", type=int, required=True)
    m.add_argument("--d", type=int, required=True)
    m.add_argument("--embedder", choices=EMBEDDER_CHOICES, default="spectral")
    m.add_argument("--k", type=int, default=None, help="isomap neighbors (default 10)")
    m.add_argument("--diffusion-time", type=float, default=None)
    m.add_argument("--no-self-loops", action="store_true")
    m.add_argument("--out", default=None, help="run directory (default: the input directory)")
    m.set_defaults(func=cmd_metric)

    q = sub.add_parser("geodesic", help="naive, graph and metric distances between two points")
    q.add_argument("run")
    q.add_argument("--source", type=int)
    q.add_argument("--target", type=int)
    q.add_argument("--truth", type=float)
    q.add_argument("--k", type=int, default=20, help="neighbors of the path graph")
    q.set_defaults(func=cmd_geodesic)

    v = sub.add_parser("volume", help="area of a region from Voronoi cells and the metric")
    v.add_argument("run")
    v.add_argument("--center", type=int)
    v.add_argument("--radius", type=float, help="metric geodesic radius around --center")
    v.add_argument("--label-box", action="append", metavar="NAME:LO:HI")
    v.add_argument("--truth", type=float)
    v.set_defaults(func=cmd_volume)

    i = sub.add_parser("isovis", help="locally isometric coordinates around an anchor")
    i.add_argument("run")
    i.add_argument("--anchor", type=int, required=True)
    i.set_defaults(func=cmd_isovis)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit():
            report = args.func(args)
    except (CLIError, ValueError, IndexError, RuntimeError, OSError) as exc:
        print(f"rmetric {args.command}: error: {exc}", file=sys.stderr)
        return 1
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
