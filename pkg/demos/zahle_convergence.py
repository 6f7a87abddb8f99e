"""Fractional integral of a Weierstrass path against itself.

Prints the fractional value, the left Riemann-Stieltjes sum and the
chain-rule value w(1)^2/2 - w(0)^2/2 on grids of 2^10 .. 2^16 nodes, plus
the spread of the value over three orders eta.
"""
import numpy as np

from fracspde.core import UniformGrid
from fracspde.noise import weierstrass_path
from fracspde.stieltjes import (IntegralConfig, riemann_stieltjes_left, zahle_integral,
                                zahle_integral_eta_sweep)

print(f"{'n':>7} {'fractional':>14} {'left sum':>14} {'chain rule':>14} {'eta spread':>11}")
for level in range(10, 17, 2):
    w = weierstrass_path(UniformGrid(0.0, 1.0, 2 ** level), 0.7, 0.3)
    val = zahle_integral(w, w, IntegralConfig(eta=0.5))
    rs = riemann_stieltjes_left(w, w)
    half = 0.5 * (w.values[-1] ** 2 - w.values[0] ** 2)
    _, spread = zahle_integral_eta_sweep(w, w, (0.35, 0.5, 0.65))
    print(f"{2 ** level:>7} {val:>14.10f} {rs:>14.10f} {half:>14.10f} {spread:>11.2e}")
