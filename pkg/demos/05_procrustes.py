# %% [markdown]
# # MPJPE and P-MPJPE
#
# P-MPJPE first aligns each predicted frame to the ground truth with the best
# rotation, translation and uniform scale, so it only scores the pose shape.

# %%
import numpy as np

from kaslift.metrics import mpjpe, p_mpjpe, procrustes_transform
from kaslift.synth import generate_clip, template_by_name

gt = generate_clip(template_by_name("kick"), frames=27, seed=2).data

theta = np.radians(30)
R = np.array([[np.cos(theta), 0, np.sin(theta)], [0, 1, 0], [-np.sin(theta), 0, np.cos(theta)]])
moved = 1.1 * gt @ R.T + np.array([50.0, 0.0, -20.0])
print("rotated/scaled copy: MPJPE %.1f mm, P-MPJPE %.2e mm" % (mpjpe(moved, gt), p_mpjpe(moved, gt)))

# %%
noisy = gt + np.random.default_rng(0).normal(scale=15, size=gt.shape)
print("noisy copy:          MPJPE %.1f mm, P-MPJPE %.1f mm" % (mpjpe(noisy, gt), p_mpjpe(noisy, gt)))
print("rigid only (no scale): P-MPJPE %.1f mm" % p_mpjpe(noisy, gt, scale=False))

# %% [markdown]
# Mirror images are not reachable: the rotation is forced to det = +1.

# %%
mirrored = gt[0] * np.array([-1, 1, 1])
s, Rm, t = procrustes_transform(mirrored, gt[0])
print("det(R) =", round(float(np.linalg.det(Rm)), 12), " residual P-MPJPE %.1f mm" % p_mpjpe(mirrored[None], gt[:1]))
