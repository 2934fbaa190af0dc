# %% [markdown]
# # Bones and limbs
#
# The lifter never sees raw joints alone.  Each 2D frame is also turned into
# per-bone (length, direction) features and then into limb features by small
# per-channel MLPs.  This walk-through builds both from one synthetic clip.

# %%
import numpy as np

from kaslift.kinematics import BoneSet, default_limb_table, extract_bones, fuse_limbs, init_composers, reconstruct_joints
from kaslift.optim import ParameterStore
from kaslift.skeleton import H36M
from kaslift.synth import make_pair, template_by_name

pair = make_pair(template_by_name("throw"), frames=27, seed=0)
print("2D clip:", pair.pose2d.data.shape, "action:", pair.action)

# %% [markdown]
# Bone features live on the child joint.  Slot 0 (the pelvis has no parent)
# carries the "ultra-bone": the plain mean of all real bones.

# %%
bones = extract_bones(pair.pose2d, H36M)
for j in (1, 2, 3, 14):
    print(f"{H36M.names[j]:>12}: length {bones.lengths[0, j]:.4f}  dir {np.round(bones.directions[0, j], 3)}")
print("ultra-bone length", bones.lengths[0, 0], "== mean", bones.lengths[0, 1:].mean())

# %% [markdown]
# Bones are lossless up to the root position: walking the tree rebuilds the frame.

# %%
frame = BoneSet(bones.lengths[0], bones.directions[0])
rebuilt = reconstruct_joints(frame, pair.pose2d.data[0, 0, :2], H36M)
print("max rebuild error", np.abs(rebuilt - pair.pose2d.data[0, :, :2]).max())

# %% [markdown]
# Limbs group bones (legs, arms, torso and cross-body chains).  Each limb has
# three tiny MLPs, one per channel, which collapse its bones to one token.

# %%
table = default_limb_table(H36M)
store = ParameterStore()
init_composers(store, table, np.random.default_rng(0), hid=16)
limbs = fuse_limbs(bones, table, store.scope("limbfus"))
print("limb tokens:", limbs.shape)
for name, idx in list(zip(table.names, table.bones))[:6]:
    print(f"  {name:<24} bones {idx}")
