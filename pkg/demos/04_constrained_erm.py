# %% [markdown]
# # ERM with unlabelled base-measure points
#
# The ID sample pins the labels on ID atoms.  Points drawn from the base
# measure are pushed towards the OOD label whenever that costs no ID error.

# %%
import numpy as np

from oodpac.experiments import demo_constrained_erm, realizable_density_instance

dom, spec = realizable_density_instance(x_size=20, n_id=10, k=2, bound_b=2.0)
print("inside the density-bounded family:", spec.contains(dom))

# %%
rep = demo_constrained_erm(spec, dom, seeds=range(5), n=1000, m=1000)
print(f"realizable: {rep.realizable}; worst alpha-risk over seeds and alphas: {rep.max_alpha_risk:.4f}")
print("per-seed ID risk :", np.round(rep.result.r_in, 4))
print("per-seed OOD risk:", np.round(rep.result.r_out, 4))

# %% [markdown]
# When an ID atom and an OOD atom share a point, no zero-risk table exists
# and the rule reports it instead of returning a hypothesis.

# %%
print(rep.overlap_message)
