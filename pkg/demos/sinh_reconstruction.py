"""Reconstruct the conductivity of the sinh field from its current alone.

Compares the reconstructed sigma with the closed form along a line and runs
the residual check on a small grid.
"""

import numpy as np

from isorealize import catalog
from isorealize.realizer import ReconstructedW, verify_residuals


def main():
    entry = catalog.get("sinh")
    w = ReconstructedW(entry.field, entry.anchor)
    line = np.column_stack([np.linspace(0.2, 2.0, 7), np.full(7, 0.3), np.zeros(7)])
    sigma = np.exp(w(line))
    exact = entry.closed_form_sigma(line)
    print("     x    sigma (reconstructed)   sigma (closed form)")
    for p, s, e in zip(line, sigma, exact):
        print(f"{p[0]:6.2f}  {s:22.12f}  {e:20.12f}")
    rep = verify_residuals(entry.field, w, entry.region, grid_n=5)
    print(f"max |curl(j / sigma)| on a 5^3 grid: {rep.max_residual:.2e}")


if __name__ == "__main__":
    main()
