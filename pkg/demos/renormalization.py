"""Renormalization bounds for planar GN_k.

Banana boxes give a good-box probability that beats the site threshold
once the tiling is fine enough. The subsquare construction gives explicit
(n, lambda, m, k) for which adjacent good squares are always joined.
"""

import numpy as np

from gnperc.geometry import BoxRegion, sample_poisson
from gnperc.renorm import (alpha_bound_2d, corridor_check, good_box_prob, grid_site_percolation,
                           n_tilde, optimal_delta, site_threshold, subsquare_good_scan,
                           theorem7_parameters)

pc = site_threshold()
print(f"site threshold bound {pc:.6f}, optimal delta {optimal_delta():.4f}")
print(f"n_tilde={n_tilde(pc)}  alpha bound {alpha_bound_2d(pc):.4f}")
for n in range(1, 7):
    print(f"  n={n}  good box prob {good_box_prob(1 / 3, n):.6f}")

p = theorem7_parameters(0.5)
print(f"alpha=0.5: n={p.n} lambda={p.density:.0f} m={p.m:.0f} k={p.k}")

# one realization on a 6 x 6 grid of unit squares
pts = sample_poisson(2, p.density, BoxRegion.cube(6, 2), 4)
grid = subsquare_good_scan(pts, p.n, p.m)
print(f"good fraction {grid.good.mean():.3f}, crossing {grid_site_percolation(grid.good).crossing}")
rep = corridor_check(pts, p.n, p.k, 0.5, lower=(2.0, 2.0))
print(f"corridor connected={rep.connected} points={rep.n_points} empty={rep.empty_boxes}")
print("per-subsquare cap", p.per_subsquare_cap, "good cells", int(np.sum(grid.good)))
