"""Planar construction: hitting times of the zero level and the 2-D residual."""

import numpy as np

from isorealize.errors import FlowBlowup
from isorealize.planar import PlanarPotential, gradient_flow, hitting_time, planar_residual


def main():
    pot = PlanarPotential.from_expression("x^2 + 2*y^2 - 1")
    for start in [(0.3, 0.2), (1.2, 0.9), (0.5, 1.4)]:
        rec = hitting_time(pot, start)
        print(f"start {start}: tau = {rec.tau:+.6f}, w_v = {rec.w_v:+.6f}, "
              f"endpoint = ({rec.endpoint[0]:.6f}, {rec.endpoint[1]:.6f})")
    rep = planar_residual(pot, (0.3, 1.0, 0.3, 1.0), grid_n=9)
    print(f"max |div(exp(-w_v) grad v)| on a 9^2 grid: {rep.max_residual:.2e}")
    try:
        gradient_flow(PlanarPotential.from_expression("cosh(x) - y"), (1.0, 5.0), 1.0)
    except FlowBlowup as exc:
        print(f"v = cosh x - y: gradient flow from (1, 5) blows up near t = {exc.time:.6f}")
    print(f"closed form -ln tanh(1/2) = {-np.log(np.tanh(0.5)):.6f}")


if __name__ == "__main__":
    main()
