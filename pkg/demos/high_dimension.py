"""High-dimensional spatial branching and its planar projection.

Balls of radius about one overlap less and less as d grows, so a
branching process whose children land in a slightly inflated ball behaves
like a tree. Projecting onto two coordinates gives a planar walk whose
steps can be chained over an oriented lattice.
"""

from gnperc.sbp import SBPConfig, box_reach_curve, calibrate_delta1, overlap_ratio, run_sbp

for d in (2, 5, 10, 20, 50):
    est = overlap_ratio(d, 0.0, 1.0, 1.0, 1.0, 100_000, seed=d)
    print(f"d={d:3d}  overlap of unit balls at distance 1: {est.p_hat:.5f}")

for d in (10, 50, 100, 500):
    print(f"d={d:4d}  delta1 for c1=2, c2=10: {calibrate_delta1(d, 2.0, 10):.5f}")

rz = run_sbp(SBPConfig.from_c1(100, 4.0, 10, generations=6, seed=1))
print("generation sizes", rz.sizes)

for c1, est in box_reach_curve([1.0, 2.0, 4.0], 100, 10, M=2.0, N0=4, trials=100, seed=2):
    print(f"c1={c1:g}  box reach {est.p_hat:.2f}")
