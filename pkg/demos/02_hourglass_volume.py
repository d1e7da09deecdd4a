# %% [markdown]
# # Area of a patch on an hourglass surface
#
# The surface has radius 1 + 0.75 z^2.  The patch is |z| <= 0.6,
# |theta| <= 1.2; its true area comes from quadrature.  The patch is
# projected onto the tangent plane at its center, the metric is recomputed
# in that chart, and Voronoi cells are weighted by sqrt(det h).

# %%
import warnings

import numpy as np

from rmetric import (
    chart_metric,
    hourglass_area,
    learn_metric,
    naive_volume,
    sample_hourglass,
    tangent_chart,
    voronoi_volume,
)

truth = hourglass_area(-0.6, 0.6, -1.2, 1.2)
P = sample_hourglass(1000, seed=0)
z, theta = P.labels.T
W = np.nonzero((np.abs(z) <= 0.6) & (np.abs(theta) <= 1.2))[0]
center = int(W[np.argmin((z[W] / 0.6) ** 2 + (theta[W] / 1.2) ** 2)])
print(f"{W.size} points in the patch, true area {truth:.4f}")

# %%
def patch_area(res):
    # chart = the patch plus one ring of graph neighbors, so patch cells are closed
    mask = np.zeros(P.n)
    mask[W] = 1.0
    members = np.nonzero(res.graph.adjacency() @ mask + mask > 0)[0]
    chart = tangent_chart(res.embedding, res.metric, center, members=members)
    h = chart_metric(res.laplacian, chart, res.embedding)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return voronoi_volume(chart, h, W), naive_volume(chart, W)


for name, kw in [("original", {"embedder": "identity"}),
                 ("diffusion map", {}),
                 ("isomap", {"embedder": "isomap", "k": 10})]:
    V, N = patch_area(learn_metric(P, 0.06, 3, 2, **kw))
    print(f"{name:>14}: metric {V:.4f} ({abs(V - truth) / truth:.1%}), naive {N:.4g}")
