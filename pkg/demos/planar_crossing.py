"""Planar GN_1: crossing probability of a square and a rough critical alpha.

Common random numbers make every realization monotone in alpha, so the
estimated curve is monotone and bisection on it is well behaved.
"""

from gnperc.gnmodel import AlphaSpec
from gnperc.mc import ExperimentSpec, bisect_critical, crossing_curve

spec = ExperimentSpec(AlphaSpec.gn_k(1, 1.0), dim=2, L=15, trials=60, base_seed=3)

print("alpha  p_hat  95% CI")
for a, est in crossing_curve([0.8, 1.2, 1.5, 2.0, 3.0], spec):
    print(f"{a:5.2f}  {est.p_hat:.3f}  ({est.lower:.3f}, {est.upper:.3f})")

res = bisect_critical(spec, bracket=(0.5, 6.0), tol=0.1, trials_per_probe=60)
print(f"finite-size alpha_hat = {res.alpha_hat:.3f} at L={res.L:g}")

# a second neighbour can only add edges
spec2 = ExperimentSpec(AlphaSpec.gn_k(2, 1.0), dim=2, L=15, trials=60, base_seed=3)
print("GN_2 at alpha=1:", [f"{e.p_hat:.2f}" for _, e in crossing_curve([1.0], spec2)])
