"""Closed-form measures of a one-cut Erlang model and a small discrete chain.

Run: python3 demos/measures.py
"""

import numpy as np

from cutpointph import ContinuousCutpointModel, DiscreteCutpointModel
from cutpointph import continuous as C
from cutpointph import discrete as D

model = ContinuousCutpointModel.erlang(4, [2.8582, 1.4421], [0.82])
print("continuous one-cut Erlang-4, rates 2.8582 -> 1.4421 at 0.82")
print(f"  mean {C.mean(model):.6f}  variance {C.variance(model):.6f}")
print(f"  median {C.quantile(model, 0.5):.6f}  Laplace(1) {C.laplace_transform(model, 1.0):.6f}")

# the density jumps at the cut-point when the exit rates change; cdf does not
a = model.cutpoints[0]
right = np.nextafter(a, np.inf)
print(f"  pdf at 0.82- {C.pdf(model, a):.4f}, at 0.82+ {C.pdf(model, right):.4f}")
print(f"  cdf at 0.82- {C.cdf(model, a):.12f}, at 0.82+ {C.cdf(model, right):.12f}")

x = np.linspace(0.25, 4.0, 6)
print("\n     x       pdf       cdf    hazard")
for xi, f, F, h in zip(x, C.pdf(model, x), C.cdf(model, x), C.hazard(model, x)):
    print(f"  {xi:5.2f}  {f:8.5f}  {F:8.5f}  {h:8.5f}")

P1 = np.array([[0.6, 0.3], [0.0, 0.7]])
P2 = np.array([[0.2, 0.5], [0.1, 0.3]])
dmod = DiscreteCutpointModel([1.0, 0.0], [P1, P2], [5])
k = np.arange(1, 11)
print("\ndiscrete two-phase chain switching after step 5")
print(f"  mean {D.mean_discrete(dmod):.6f}  variance {D.variance_discrete(dmod):.6f}  pgf(0.9) {D.pgf(dmod, 0.9):.6f}")
print("  pmf(1..10):", np.array2string(D.pmf(dmod, k), precision=4))
