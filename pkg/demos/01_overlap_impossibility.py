# %% [markdown]
# # One point, two roles
#
# A single feature point carries half the mass as an ID sample and half as
# an OOD sample.  We enumerate both possible labelings and compare each
# hypothesis's alpha-curve with the best achievable risk at every alpha.

# %%
import numpy as np

from oodpac.conditions import check_linear
from oodpac.domains import two_atom_domain
from oodpac.hypotheses import all_tables
from oodpac.risk import inf_risk, risk_profiles

dom = two_atom_domain(overlap=True)
space = all_tables(np.array([[0.0]]), 1)
alphas = np.linspace(0, 1, 11)

# %% [markdown]
# The infimum bends into a tent shape, `min(alpha, 1 - alpha)`.

# %%
inf_curve = np.array([inf_risk(space, dom, a).value for a in alphas])
print("alpha :", np.round(alphas, 2))
print("inf   :", np.round(inf_curve, 3))

# %% [markdown]
# Every hypothesis's curve is a straight line between its ID risk and its
# OOD risk.  A line cannot follow the tent, so each one misses by 0.5 somewhere.

# %%
r_in, r_out = risk_profiles(space, dom)
for h, ri, ro in zip(space, r_in, r_out):
    curve = (1 - alphas) * ri + alphas * ro
    print(f"labels {h.labels.tolist()}: worst excess {np.max(curve - inf_curve):.2f}")

# %%
rep = check_linear(space, dom)
print(f"linear condition holds: {rep.holds}, worst at alpha={rep.violating_alpha}, gap {rep.max_deviation}")
