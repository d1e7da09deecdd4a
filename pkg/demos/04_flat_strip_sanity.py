# %% [markdown]
# # Sanity check: a flat square seen through the identity map
#
# When the embedding is the data itself, the metric should be the identity
# away from the boundary, and get closer to it as the sample grows.

# %%
import numpy as np

from rmetric import distortion_stats, learn_metric, sample_flat_strip

EPSILON = 0.005
margin = 3 * np.sqrt(EPSILON)

for n in (2000, 4000, 8000):
    P = sample_flat_strip(n, seed=0)
    res = learn_metric(P, EPSILON, 2, 2, embedder="identity")
    inner = np.all((P.points > margin) & (P.points < 1 - margin), axis=1)
    err = np.linalg.norm(res.metric.h[inner] - np.eye(2), axis=(1, 2)).mean()
    dev = distortion_stats(res.metric).deviation
    print(f"n={n:5d}: interior mean |h - I| = {err:.3f}, "
          f"median deviation interior {np.median(dev[inner]):.3f}, boundary {np.median(dev[~inner]):.3f}")
