"""Style the rendered 2D feature map instead of every 3D sample.

Styling is affine per point, and the bias is scaled by the ray's total weight,
so transforming the volume-rendered map gives the same answer as transforming
each sample and then rendering. This demo checks that on one random ray and
then sweeps many random instances.

Run: python demos/02_deferred_style.py
"""

import numpy as np

from stylefield import DstParams, FeatureMap, apply_dst, apply_pointwise_style, compute_style_stats, compute_weights
from stylefield.verify_harness import check_equivalence

rng = np.random.default_rng(7)
n, reduced, channels = 32, 8, 16

weights, w_r = compute_weights(rng.exponential(2.0, n), np.full(n, 0.05))
points = rng.normal(size=(n, reduced))  # transformed point features along the ray
stats = compute_style_stats(rng.normal(size=(12, 12, reduced)) * rng.uniform(0.5, 2.0, reduced) + 0.3)
conv = DstParams(rng.normal(size=(channels, reduced)) / np.sqrt(reduced))

rendered = FeatureMap((weights @ points).reshape(1, 1, reduced), np.array([[w_r]]))
deferred = apply_dst(rendered, stats, conv).data[0, 0]
pointwise = apply_pointwise_style(points, weights, stats, conv)
print(f"ray weight {w_r:.4f}; deferred vs pointwise max diff {np.max(np.abs(deferred - pointwise)):.2e}")

report = check_equivalence(200, seed=1)
print(report.line())
