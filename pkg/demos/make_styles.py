"""Write the two procedural style images used by demos/sphere.json.

Run: python demos/make_styles.py
"""

from pathlib import Path

import numpy as np

from stylefield import write_ppm

here = Path(__file__).parent
yy, xx = np.mgrid[0:64, 0:64]
stripes = np.stack([0.5 + 0.5 * np.sin(xx / 2.5), 0.25 + 0.2 * np.sin(yy / 9.0), 0.6 + 0.3 * np.cos(xx / 5.0)], axis=-1)
checks = ((xx // 8 + yy // 8) % 2).astype(float)
checks = np.stack([0.9 * checks, 0.4 + 0.2 * checks, 1.0 - 0.8 * checks], axis=-1)
write_ppm(here / "stripes.ppm", stripes)
write_ppm(here / "checks.ppm", checks)
print("wrote stripes.ppm and checks.ppm")
