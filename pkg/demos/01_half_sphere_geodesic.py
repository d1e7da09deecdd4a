# %% [markdown]
# # Distances on a half sphere, measured in an embedding
#
# Diffusion-map coordinates squeeze the sphere into a tiny region, so chord
# and graph distances in those coordinates mean little.  Measuring each
# path segment with the estimated embedding metric recovers the geodesic
# distance of the original surface.

# %%
import numpy as np

from rmetric import geodesic_distance, half_sphere_endpoints, knn_graph, learn_metric, sample_half_sphere

EPSILON = 0.03

P, (i, j), truth, _ = half_sphere_endpoints(sample_half_sphere(2000, seed=0))
print(f"endpoints {i} and {j}, true geodesic distance {truth:.4f}")

# %%
# the path graph is shared by every embedding, only the edge costs change
G = knn_graph(P, 20)

runs = {
    "original": learn_metric(P, EPSILON, 3, 2, embedder="identity"),
    "diffusion map": learn_metric(P, EPSILON, 3, 2),
    "isomap": learn_metric(P, EPSILON, 2, 2, embedder="isomap", k=10),
}

print(f"{'embedding':>14} {'chord':>8} {'graph':>8} {'metric':>8} {'rel err':>8}")
for name, res in runs.items():
    r = geodesic_distance(G, res.metric, res.embedding, i, j)
    print(f"{name:>14} {r.naive:8.4f} {r.graph:8.4f} {r.metric:8.4f} {abs(r.metric - truth) / truth:8.4f}")

# %% [markdown]
# The diffusion-map chord and graph distances come out around 0.05 to 0.09,
# while the metric-corrected path length lands within a few percent of pi/2.
