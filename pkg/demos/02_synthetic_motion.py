# %% [markdown]
# # Synthetic sports motion
#
# Real sports datasets are out of reach here, so training data comes from a
# forward-kinematics generator: sinusoidal joint angles on a 17-joint tree,
# a root trajectory, and a pinhole camera with detector-like pixel noise.

# %%
import numpy as np

from kaslift.skeleton import H36M
from kaslift.synth import Camera, default_templates, generate_clip, make_suite, project_to_2d

for tpl in default_templates():
    clip = generate_clip(tpl, frames=27, seed=1)
    span = clip.data.max(axis=(0, 1)) - clip.data.min(axis=(0, 1))
    print(f"{tpl.name:>6}: extent x/y/z (mm) {np.round(span).astype(int)}")

# %% [markdown]
# Bone lengths are fixed by construction, which makes a handy sanity check.

# %%
clip = generate_clip(default_templates()[0], frames=27, seed=3)
kids = list(range(1, 17))
lengths = np.linalg.norm(clip.data[:, kids] - clip.data[:, [H36M.parent[j] for j in kids]], axis=-1)
print("bone length drift across frames:", np.abs(lengths - lengths[0]).max())

# %% [markdown]
# Projection: focal 1000 px, principal point at the image centre, subject 5 m
# away.  Noisier detections get lower confidence.

# %%
cam = Camera()
clean = project_to_2d(clip, cam, noise_std=0.0)
noisy = project_to_2d(clip, cam, noise_std=4.0, seed=0)
print("clean confidence:", clean.data[..., 2].min())
print("noisy confidence: mean %.3f, min %.3f" % (noisy.data[..., 2].mean(), noisy.data[..., 2].min()))
print("normalized x range:", clean.data[..., 0].min().round(3), clean.data[..., 0].max().round(3))

# %%
suite = make_suite(20, frames=27, seed=0)
print(len(suite), "training clips;", sorted({p.action for p in suite}))
