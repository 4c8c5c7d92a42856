"""Why normalization statistics must come from the whole volume.

With batch statistics, a point's transformed feature depends on whatever
other points happened to share its batch, so the same surface point renders
differently from different views. Running (volume-wide) statistics remove
that dependence exactly.

Run: python demos/03_batch_statistics.py
"""

import numpy as np

from stylefield import AttentionParams, VolumeAdaptiveIN, apply_sict, calibrate, sphere_scene

rng = np.random.default_rng(0)
scene = sphere_scene(channels=16)
params = AttentionParams(*(rng.normal(0, 0.25, (8, 16)) for _ in range(3)))

state = calibrate(VolumeAdaptiveIN.fresh(16), scene, [-1, -1, -1], [1, 1, 1], num_points=20000)
vanilla = VolumeAdaptiveIN(state.running_mean, state.running_var, mode="vanilla")

probe = scene.feature(np.array([[0.1, 0.2, 0.3]]))
near_batch = scene.feature(rng.uniform(-0.3, 0.3, (256, 3)))
far_batch = scene.feature(rng.uniform(-1.0, 1.0, (256, 3)))

for name, s in (("volume statistics", state), ("batch statistics", vanilla)):
    a = apply_sict(np.vstack([probe, near_batch]), s, params)[0]
    b = apply_sict(np.vstack([probe, far_batch]), s, params)[0]
    print(f"{name:18s}: same point, two batches, max diff {np.max(np.abs(a - b)):.3e}")
