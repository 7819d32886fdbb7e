# coding: utf-8

# # Choosing radiation doses for a house-fly emergence experiment
#
# Pupae are irradiated and each fly ends in one of three states: it died
# before the pupa opened, it died while emerging, or it emerged. A
# continuation-ratio logit model with a quadratic dose effect for the first
# ratio and a linear one for the second fits these data well.
#
# We ask how to spread flies over seven candidate doses so that the fitted
# parameters are as precise as possible, in the D-optimal sense.

# %%

import numpy as np

from optdesign import DesignApprox, DesignExact, analyze_rank, efficiency, exchange, lift_one
from optdesign.datasets import flies

ex = flies()
model, theta, doses = ex.model, ex.theta, ex.points
print(model.link.value, "link, p =", model.p)
print("doses:", doses.ravel())

# %% [markdown]
# ## How many doses do we need at least?
#
# The first ratio has three coefficients, so any nonsingular design needs at
# least three distinct doses.

# %%

report = analyze_rank(model, doses)
print("k_min =", report.k_min, " positive definite on all 7:", report.pd)

# %% [markdown]
# ## Approximate design
#
# Lift-one updates one weight at a time along the exact profile of the
# determinant. It stops when the equivalence check says no single dose can be
# lifted profitably.

# %%

res = lift_one(model, theta, doses)
for x, w in zip(doses.ravel(), res.design.weights):
    print(f"{x:5.0f}  {w:.4f}")
print("converged:", res.converged, " max slack:", f"{res.report.max_slack:.1e}")

# %% [markdown]
# Only four of the seven doses carry weight. Compared with spreading flies
# evenly, the optimal allocation needs about 17% fewer flies for the same
# precision.

# %%

uniform = DesignApprox.uniform(doses)
print("efficiency of the uniform design:", round(efficiency(model, theta, uniform, res.design), 3))

# %% [markdown]
# ## Exact design for 3500 flies
#
# Flies come in whole numbers. The exchange algorithm moves flies between
# pairs of doses while the determinant increases.

# %%

exact = exchange(model, theta, doses, 3500)
print(dict(zip(doses.ravel().astype(int).tolist(), exact.design.counts.tolist())))
print("efficiency vs approximate optimum:",
      round(efficiency(model, theta, exact.design, res.design), 6))

# %% [markdown]
# Rounding the approximate weights would have been nearly as good, but the
# exchange result is guaranteed to be stable under every single-fly move.

# %%

rounded = DesignExact(doses, np.round(res.design.weights * 3500).astype(int))
print("rounded allocation:", rounded.counts.tolist(), "n =", rounded.n)
