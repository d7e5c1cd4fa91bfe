"""Regenerate ``basin.asc``: a synthetic enclosed sea with a central ridge.

Deterministic (no randomness); run from this directory.
"""

import numpy as np

from cableplan.terrain import write_esri_ascii

ROWS, COLS, CELL = 36, 44, 2500.0


def basin() -> np.ndarray:
    r, c = np.mgrid[0:ROWS, 0:COLS].astype(float)
    u = (c - (COLS - 1) / 2) / (COLS / 2 - 1.5)
    v = (r - (ROWS - 1) / 2) / (ROWS / 2 - 1.5)
    rho = np.hypot(u, v * (1 + 0.15 * np.sin(3 * u)))
    depth = -2500.0 * np.clip(1 - rho**2, 0, None)
    ridge = 1200.0 * np.exp(-(((u - 0.1) / 0.12) ** 2)) * np.exp(-((v / 0.7) ** 2))
    z = depth + ridge * (rho < 1)
    z[rho >= 1] = 50.0 + 400.0 * (rho[rho >= 1] - 1)  # land
    return np.round(z, 1)


if __name__ == "__main__":
    write_esri_ascii("basin.asc", basin(), CELL, origin=(0.0, 0.0))
