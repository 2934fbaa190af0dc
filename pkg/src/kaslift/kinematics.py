"""Bone decomposition of 2D skeletons and limb fusion.

Bone ``i`` (for non-root joint ``i``) runs from ``parent(i)`` to ``i``.
Slot 0 of every bone array (the root's slot) holds the ultra-bone: the
plain mean of all real bone lengths and direction vectors.  Bone features
are ordered ``(len, dir_x, dir_y)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .layers import xavier
from .optim import ParameterStore
from .skeleton import Pose2DClip, SkeletonTopology

DEFAULT_EPS = 1e-8


class DegenerateBoneError(ValueError):
    pass


@dataclass(frozen=True)
class BoneSet:
    """Per-frame bones: ``lengths`` (T, J) and ``directions`` (T, J, 2); slot 0 is the ultra-bone."""

    lengths: np.ndarray
    directions: np.ndarray

    @property
    def features(self) -> np.ndarray:
        """X_bone, shape (T, J, 3) ordered (len, dir_x, dir_y)."""
        return np.concatenate([self.lengths[..., None], self.directions], axis=-1)


def extract_bones(clip2d: Pose2DClip | np.ndarray, topo: SkeletonTopology,
                  eps: float = DEFAULT_EPS) -> BoneSet:
    """Bone lengths and unit directions relative to each joint's parent.

    Accepts a clip or any ``(..., J, >=2)`` array of joint coordinates;
    coincident joints (length < eps) get a zero direction.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    data = clip2d.data if isinstance(clip2d, Pose2DClip) else np.asarray(clip2d, dtype=np.float64)
    if data.shape[-2] != topo.joint_count:
        raise ValueError(f"input has {data.shape[-2]} joints, topology has {topo.joint_count}")
    z = data[..., :2]
    bad = ~np.isfinite(z)
    if bad.any():
        where = np.argwhere(bad.any(axis=-1))[0]
        *frame, joint = where
        raise ValueError(f"non-finite coordinate at frame {tuple(int(f) for f in frame)}, joint {int(joint)}")
    J = topo.joint_count
    children = [j for j in range(J) if j != topo.root]
    parents = [topo.parent[j] for j in children]
    vec = z[..., children, :] - z[..., parents, :]
    lens = np.sqrt((vec * vec).sum(axis=-1))
    ok = lens >= eps
    dirs = np.where(ok[..., None], vec / np.where(ok, lens, 1.0)[..., None], 0.0)
    lengths = np.empty(z.shape[:-1])
    directions = np.empty(z.shape)
    lengths[..., children] = lens
    directions[..., children, :] = dirs
    lengths[..., topo.root] = lens.mean(axis=-1)
    directions[..., topo.root, :] = dirs.mean(axis=-2)
    return BoneSet(lengths, directions)


def reconstruct_joints(bones: BoneSet, root_position, topo: SkeletonTopology,
                       eps: float = DEFAULT_EPS) -> np.ndarray:
    """Inverse of :func:`extract_bones` for one frame: walk the tree adding ``len * dir``.

    ``bones`` holds a single frame (lengths ``(J,)``, directions ``(J, 2)``).
    Zero-length bones are accepted only if every bone is zero (the
    all-collapsed skeleton); any other degenerate bone is rejected.
    """
    lengths = np.asarray(bones.lengths, dtype=np.float64)
    dirs = np.asarray(bones.directions, dtype=np.float64)
    real = [j for j in range(topo.joint_count) if j != topo.root]
    short = [j for j in real if lengths[j] < eps]
    if short and len(short) != len(real):
        raise DegenerateBoneError(f"degenerate bones (length < {eps}) at joints {short}")
    out = np.zeros((topo.joint_count, 2))
    out[topo.root] = np.asarray(root_position, dtype=np.float64)
    for j in topo.walk_order():
        if j != topo.root:
            out[j] = out[topo.parent[j]] + lengths[j] * dirs[j]
    return out


@dataclass(frozen=True)
class LimbTable:
    names: tuple[str, ...]
    bones: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.names) != len(self.bones):
            raise ValueError("limb names and bone lists differ in length")
        J = len(self.bones)
        for name, b in zip(self.names, self.bones):
            if not b:
                raise ValueError(f"limb {name!r} has no bones")
            if any(not 0 <= i < J for i in b):
                raise ValueError(f"limb {name!r}: bone index out of range [0, {J - 1}]: {b}")

    def __len__(self) -> int:
        return len(self.bones)

    @property
    def limb_count(self) -> int:
        return len(self.bones)

    def arity(self, i: int) -> int:
        return len(self.bones[i])


_DEFAULT_LIMBS = (
    ("right_leg", (1, 2, 3)),
    ("left_leg", (4, 5, 6)),
    ("right_arm", (14, 15, 16)),
    ("left_arm", (11, 12, 13)),
    ("torso", (7, 8, 9, 10)),
    ("right_lower_leg", (2, 3)),
    ("left_lower_leg", (5, 6)),
    ("right_forearm", (15, 16)),
    ("left_forearm", (12, 13)),
    ("l_shoulder_to_r_hip", (11, 8, 7, 1)),
    ("r_shoulder_to_l_hip", (14, 8, 7, 4)),
    ("right_arm_to_left_leg", (14, 15, 16, 4, 5, 6)),
    ("left_arm_to_right_leg", (11, 12, 13, 1, 2, 3)),
    ("shoulder_girdle", (11, 14)),
    ("hip_girdle", (1, 4)),
    ("head_neck", (9, 10)),
    ("ultra", (0,)),
)


def default_limb_table(topo: SkeletonTopology) -> LimbTable:
    """The fixed 17-limb table for the default skeleton (bone ``j`` ends at joint ``j``)."""
    if not topo.is_default():
        raise ValueError("default_limb_table only covers the default 17-joint skeleton; "
                         "supply a custom table instead")
    return LimbTable(tuple(n for n, _ in _DEFAULT_LIMBS), tuple(b for _, b in _DEFAULT_LIMBS))


def toy_limb_table() -> LimbTable:
    """Five-limb table matching ``skeleton.TOY5``."""
    return LimbTable(("right", "left", "torso", "cross", "ultra"),
                     ((1,), (2,), (3, 4), (1, 2), (0,)))


def parse_limb_table(text: str, joint_count: int | None = None) -> LimbTable:
    """Parse ``name: b1,b2,...`` lines (blank lines ignored)."""
    names, bones = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if ":" not in line:
            raise ValueError(f"limb table line {lineno}: expected 'name: b1,b2,...', got {line!r}")
        name, rest = line.split(":", 1)
        try:
            idx = tuple(int(tok) for tok in rest.split(","))
        except ValueError:
            raise ValueError(f"limb table line {lineno}: bad bone index list {rest.strip()!r}") from None
        names.append(name.strip())
        bones.append(idx)
    if joint_count is not None and len(names) != joint_count:
        raise ValueError(f"limb table has {len(names)} lines, expected exactly {joint_count}")
    return LimbTable(tuple(names), tuple(bones))


def load_limb_table(path: str | Path, joint_count: int | None = None) -> LimbTable:
    return parse_limb_table(Path(path).read_text(encoding="utf-8"), joint_count)


def format_limb_table(table: LimbTable) -> str:
    return "".join(f"{n}: {','.join(map(str, b))}\n" for n, b in zip(table.names, table.bones))


# Limb composers: per limb, one two-layer perceptron per channel
# (x-direction, y-direction, length), stacked on a leading axis of size 3.
#   w1 (3, m, hid)  b1 (3, 1, hid)  w2 (3, hid, 1)  b2 (3, 1, 1)

def init_composers(store: ParameterStore, table: LimbTable, rng: np.random.Generator,
                   hid: int = 16, prefix: str = "limbfus"):
    for i in range(table.limb_count):
        m = table.arity(i)
        store.add(f"{prefix}.{i}.w1", xavier(rng, m, hid, (3, m, hid)))
        store.add(f"{prefix}.{i}.b1", np.zeros((3, 1, hid)))
        store.add(f"{prefix}.{i}.w2", xavier(rng, hid, 1, (3, hid, 1)))
        store.add(f"{prefix}.{i}.b2", np.zeros((3, 1, 1)))


def fuse_limbs(bone_features: np.ndarray | BoneSet, table: LimbTable,
               params: dict[str, Tensor]) -> Tensor:
    """X_limb ``(..., J, 3)`` ordered (x-dir, y-dir, len) from bone features ``(..., J, 3)``.

    ``params`` maps ``"{i}.w1"`` etc. to composer tensors for every limb.
    """
    feats = bone_features.features if isinstance(bone_features, BoneSet) else np.asarray(bone_features)
    lead = feats.shape[:-2]
    flat = feats.reshape(-1, feats.shape[-2], 3)
    # (len, dir_x, dir_y) -> channel order (dir_x, dir_y, len)
    chan = flat[..., [1, 2, 0]]
    outs = []
    for i, bones in enumerate(table.bones):
        w1 = params[f"{i}.w1"]
        if w1.shape[1] != len(bones):
            raise ValueError(f"limb {i} ({table.names[i]!r}) has {len(bones)} bones "
                             f"but composer expects {w1.shape[1]}")
        x = Tensor(np.transpose(chan[:, list(bones), :], (2, 0, 1)))   # (3, N, m)
        h = ag.relu(ag.add(ag.matmul(x, w1), params[f"{i}.b1"]))
        outs.append(ag.add(ag.matmul(h, params[f"{i}.w2"]), params[f"{i}.b2"]))  # (3, N, 1)
    stacked = ag.concat(outs, axis=-1)                       # (3, N, L)
    return ag.reshape(ag.transpose(stacked, (1, 2, 0)), lead + (table.limb_count, 3))
