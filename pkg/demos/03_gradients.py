# %% [markdown]
# # Checking the autograd kernel
#
# Everything trains on a small numpy reverse-mode kernel.  Before trusting it we
# compare every gradient with central finite differences (h = 1e-5) in 64-bit.

# %%
from kaslift.gradcheck import grouped, model_check, op_suite

ops = op_suite(seed=0)
for name, err in ops.items():
    print(f"{name:<14} max rel err {err:.2e}")

# %% [markdown]
# The whole tiny model (T=3, J=5, d=8, two layers, two heads) through the
# position + velocity loss, a few sampled entries per parameter tensor:

# %%
errs = grouped(model_check(seed=0))
for group, err in sorted(errs.items()):
    print(f"{group:<22} {err:.2e}")
print("worst:", max(errs.values()))
