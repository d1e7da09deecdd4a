"""Riemannian metric estimation for manifold embeddings.

Typical use::

    from rmetric import sample_half_sphere, learn_metric
    cloud = sample_half_sphere(2000, seed=0)
    res = learn_metric(cloud, epsilon=0.03, s=3, d=2)
    res.metric.h          # (n, 3, 3) embedding metric, rank 2
"""

from .datasets import (
    MANIFOLDS,
    ManifoldSpec,
    PointCloud,
    half_sphere_endpoints,
    hourglass_area,
    read_csv,
    sample,
    sample_flat_strip,
    sample_half_sphere,
    sample_hourglass,
    sample_swiss_roll_hole,
    write_csv,
)
from .embed import (
    DisconnectedGraphError,
    Embedding,
    EmbeddingDimensionError,
    all_pairs_shortest_paths,
    classical_mds,
    isomap,
    spectral_embedding,
)
from .geom import (
    Chart,
    GeodesicResult,
    IsometricView,
    chart_metric,
    geodesic_distance,
    isometric_view,
    locally_isometric_transform,
    metric_edge_length,
    naive_volume,
    procrustes_dissimilarity,
    tangent_chart,
    voronoi_cell_areas,
    voronoi_volume,
)
from .laplacian import IsolatedNodeError, LaplacianOperator, build_laplacian
from .metric import (
    DualMetricField,
    MetricField,
    RankDeficientError,
    distortion_stats,
    dual_metric,
    learn_metric,
    metric_from_dual,
    pseudo_inverse,
)
from .neighbors import (
    NeighborhoodGraph,
    connected_components,
    eps_ball_graph,
    heat_kernel_graph,
    knn_graph,
)

__version__ = "0.1.0"
