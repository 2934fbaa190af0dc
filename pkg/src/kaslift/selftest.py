"""Quick built-in oracle checks across all modules, used by ``kaslift selftest``."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from . import autograd as ag
from . import container
from .kinematics import BoneSet, extract_bones, reconstruct_joints
from .layers import gcn_spatial, init_gcn, topk_similarity_adjacency
from .metrics import mpjpe, p_mpjpe
from .optim import ParameterStore, lr_schedule
from .skeleton import H36M, Pose2DClip, Pose3DClip, horizontal_flip
from .synth import default_templates, generate_clip, project_to_2d
from .training import loss_pose, loss_velocity


def _rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    return q if np.linalg.det(q) > 0 else -q


def check_container(rng):
    t = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=4)}
    blob = container.encode(t)
    return container.encode(container.decode(blob)) == blob, f"{len(blob)} bytes"


def check_bones(rng):
    z = rng.uniform(-1, 1, (17, 2))
    data = np.concatenate([z, np.ones((17, 1))], axis=-1)[None]
    b = extract_bones(data, H36M)
    rec = reconstruct_joints(BoneSet(b.lengths[0], b.directions[0]), z[0], H36M)
    err = float(np.max(np.abs(rec - z)))
    ultra = b.lengths[0, 0] == np.mean(b.lengths[0, 1:])
    return err < 1e-9 and ultra, f"roundtrip error {err:.1e}"


def check_flip(rng):
    c2 = Pose2DClip(np.concatenate([rng.uniform(-1, 1, (2, 17, 2)), np.ones((2, 17, 1))], axis=-1))
    c3 = Pose3DClip(rng.normal(size=(2, 17, 3)))
    twice = horizontal_flip(*horizontal_flip(c2, c3, H36M), H36M)
    same = np.array_equal(twice[0].data, c2.data) and np.array_equal(twice[1].data, c3.data)
    return same, "flip is an involution"


def check_softmax(rng):
    s = ag.softmax(ag.Tensor(rng.normal(scale=10, size=(50, 7)))).data
    err = float(np.max(np.abs(s.sum(-1) - 1)))
    return err < 1e-9, f"row-sum error {err:.1e}"


def check_gcn(rng):
    store = ParameterStore()
    init_gcn(store, "g", rng, 6)
    h = rng.normal(size=(1, 17, 6))
    perm = rng.permutation(17)
    A = H36M.adjacency()
    a = gcn_spatial(ag.Tensor(h), A, store.scope("g")).data
    b = gcn_spatial(ag.Tensor(h[:, perm]), A[np.ix_(perm, perm)], store.scope("g")).data
    err = float(np.max(np.abs(b - a[:, perm])))
    return err < 1e-9, f"permutation error {err:.1e}"


def check_topk(rng):
    f = rng.normal(size=(6, 4))
    A = topk_similarity_adjacency(f, 2)
    sym = np.array_equal(A, A.T)
    deg_ok = bool(np.all(A.sum(1) >= 2))
    return sym and deg_ok, "symmetric, every frame keeps >= k neighbours"


def check_metrics(rng):
    g = rng.normal(scale=200, size=(3, 17, 3))
    R = _rotation(rng)
    p = 1.7 * g @ R.T + 40.0
    val = p_mpjpe(p, g)
    off = mpjpe(g + np.array([3.0, 4.0, 0.0]), g)
    return val < 1e-9 and abs(off - 5) < 1e-12, f"aligned error {val:.1e}"


def check_losses(rng):
    g = rng.normal(size=(4, 17, 3))
    v = float(loss_velocity(g + 5.0, g).data)
    p = float(loss_pose(np.zeros((1, 1, 3)) + [3, 4, 0], np.zeros((1, 1, 3))).data)
    return v < 1e-9 and p == 5.0, "3-4-5 pose loss, offset-free velocity loss"


def check_schedule(rng):
    a, b = lr_schedule(0), lr_schedule(10)
    return a == 5e-6 and b == 5e-4, f"lr(0)={a:g}, lr(10)={b:g}"


def check_synth(rng):
    tpl = default_templates()[int(rng.integers(len(default_templates())))]
    clip = generate_clip(tpl, 9, int(rng.integers(1 << 31)))
    kids = list(range(1, 17))
    lens = np.linalg.norm(clip.data[:, kids] - clip.data[:, [H36M.parent[j] for j in kids]], axis=-1)
    drift = float(np.max(np.abs(lens - lens[0])))
    conf = project_to_2d(clip).data[..., 2]
    return drift < 1e-9 and bool(np.all(conf == 1)), f"{tpl.name}: bone drift {drift:.1e}"


CHECKS: list[tuple[str, Callable]] = [
    ("container roundtrip", check_container),
    ("bone extraction", check_bones),
    ("horizontal flip", check_flip),
    ("softmax rows", check_softmax),
    ("spatial gcn equivariance", check_gcn),
    ("temporal top-k graph", check_topk),
    ("procrustes", check_metrics),
    ("losses", check_losses),
    ("lr schedule", check_schedule),
    ("synthetic motion", check_synth),
]


def run_all(seed: int = 0) -> list[tuple[str, bool, str]]:
    out = []
    for i, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, i])
        try:
            ok, detail = fn(rng)
        except Exception as e:  # report, don't crash the whole run
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.append((name, bool(ok), detail))
    return out
