# %% [markdown]
# # Locally isometric views of a swiss roll with a hole
#
# Rescaling an embedding by the square root of its metric at an anchor
# point makes the neighborhood of that point look as it does in the data.
# Procrustes dissimilarity against the data neighborhood, flattened onto
# its principal plane, measures the improvement.

# %%
import numpy as np

from rmetric import isometric_view, learn_metric, sample_swiss_roll_hole

P = sample_swiss_roll_hole(1000, seed=1, t_range=(1.5 * np.pi, 3 * np.pi))
t, y = P.labels.T
anchor = int(np.argmin(np.hypot(t - 1.75 * np.pi, y - 10.5)))

for name, kw in [("isomap", {"embedder": "isomap", "k": 8}), ("diffusion map", {})]:
    res = learn_metric(P, 1.5, 2, 2, **kw)
    nb = res.graph.matrix[anchor].indices
    view = isometric_view(P, res.embedding, res.metric, anchor, nb)
    print(f"{name:>14}: {nb.size} neighbors, D before {view.before:.3f}, after {view.after:.3f}")

# %% [markdown]
# `view.transformed.coords` holds the rescaled embedding for plotting.
