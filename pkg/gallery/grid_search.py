# coding: utf-8

# # Letting the doses move: grid search
#
# Instead of seven fixed doses we allow any dose on a grid over [80, 200].
# Lift-one handles hundreds of candidates, since it touches one weight at a
# time and drops the rest.

# %%

import numpy as np

from optdesign import DesignApprox, efficiency, grid_search
from optdesign.datasets import flies

ex = flies()
model, theta = ex.model, ex.theta

results = {}
for step in (20, 5, 1):
    res = grid_search(model, theta, [(80, 200, step)])
    results[step] = res
    sup = res.support
    print(f"step {step:2d}:", sup.points.ravel().tolist(), np.round(sup.weights, 4).tolist(),
          f"log det {res.logdet:.6f}")

# %% [markdown]
# On finer grids the weight near 120 and near 157 splits over two adjacent
# doses. That is the grid's way of approximating a single dose in between.
# The split itself is poorly determined: moving weight from one neighbour to
# the other barely changes the determinant.

# %%

fine = results[1].design
for x in (122.0, 123.0):
    print(x, "weight", round(float(fine.weights[fine.points.ravel() == x][0]), 4))

# %% [markdown]
# Merging each pair into one dose gives a three-point design that loses very
# little.

# %%

three = DesignApprox([80.0, 123.0, 157.0], [0.3163, 0.3422, 0.3415])
print("three-point efficiency:", round(efficiency(model, theta, three, fine), 5))
