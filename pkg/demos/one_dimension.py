"""One-dimensional GN_1: no infinite cluster, however large alpha is.

Long empty stretches (m-gaps) appear at rate about T e^{-m}. With
positive probability such a gap is not bridged from the right, which
forces all clusters to be finite. This script estimates that probability
and shows the largest cluster shrinking as the window grows.
"""

import numpy as np

from gnperc.clusters import label_clusters
from gnperc.geometry import BoxRegion, sample_poisson
from gnperc.gnmodel import AlphaSpec, gn_graph
from gnperc.oned import estimate_p_unbridged, gamma_tail_constant

alpha = 2.0

# chance a gap of length beta^2 = alpha^2 is not bridged from the right
est = estimate_p_unbridged(alpha, k=1, m=alpha**2, trials=300, T=5000, seed=1)
print(f"p({alpha**2:g}) = {est.p_hat:.3f}  95% CI ({est.lower:.3f}, {est.upper:.3f})")
print(f"Gamma tail constant for beta={alpha}, k=2: {gamma_tail_constant(alpha, 2):.4f}")

# largest cluster as a fraction of the window
for T in (1e3, 1e4, 1e5):
    fr = []
    for s in range(10):
        pts = sample_poisson(1, 1.0, BoxRegion.cube(T, 1), s)
        g, _ = gn_graph(pts, AlphaSpec.gn_k(1, alpha))
        fr.append(label_clusters(g).largest_fraction)
    print(f"T={T:>8.0f}  median largest fraction {np.median(fr):.5f}")
