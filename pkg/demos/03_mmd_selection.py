# %% [markdown]
# # Picking the right ID distribution by MMD
#
# Three candidate ID distributions live on well separated clusters.  Each
# comes with its own zero-risk labeler.  Given a fresh ID sample, we pick the
# anchor closest in MMD and run the labeler paired with it.

# %%
from oodpac.experiments import demo_finite_id_space

rep = demo_finite_id_space(m_distributions=3, trials=200, n_list=(20, 100, 500))
print(f"closest pair of clusters: {rep.min_support_distance:.2f}")

# %%
for n, miss, risk in zip(rep.n_list, rep.misselection, rep.end_to_end_sup_risk):
    print(f"n={n:4d}  misselection {miss:.3f}  mean worst alpha-risk {risk:.4f}")
