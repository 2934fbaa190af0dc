"""Skeleton topology, pose clips, root centering and flip augmentation.

Default joint order (Human3.6M style, 17 joints)::

    0 pelvis     1 R-hip       2 R-knee      3 R-ankle
    4 L-hip      5 L-knee      6 L-ankle     7 spine
    8 thorax     9 neck       10 head       11 L-shoulder
   12 L-elbow   13 L-wrist    14 R-shoulder 15 R-elbow   16 R-wrist
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container


@dataclass(frozen=True)
class SkeletonTopology:
    parent: tuple[int, ...]
    mirror: tuple[int, ...]
    names: tuple[str, ...]
    root: int = 0

    def __post_init__(self):
        J = len(self.parent)
        if len(self.mirror) != J or len(self.names) != J:
            raise ValueError(
                f"parent/mirror/names lengths differ: {J}, {len(self.mirror)}, {len(self.names)}"
            )
        if not 0 <= self.root < J or self.parent[self.root] != self.root:
            raise ValueError(f"root {self.root} must map to itself in the parent map")
        for j in range(J):
            if not (0 <= self.parent[j] < J and 0 <= self.mirror[j] < J):
                raise ValueError(f"joint {j}: parent/mirror index out of range")
            k, steps = j, 0
            while k != self.root:
                k = self.parent[k]
                steps += 1
                if steps >= J:
                    raise ValueError(f"joint {j} does not reach the root (cycle in parent map)")
            if self.mirror[self.mirror[j]] != j:
                raise ValueError(f"mirror map is not an involution at joint {j}")
        if self.mirror[self.root] != self.root:
            raise ValueError("mirror(root) must be root")

    @property
    def joint_count(self) -> int:
        return len(self.parent)

    def edges(self) -> list[tuple[int, int]]:
        """(parent, child) pairs for every non-root joint, ordered by child."""
        return [(self.parent[j], j) for j in range(self.joint_count) if j != self.root]

    def adjacency(self) -> np.ndarray:
        """Undirected 0/1 bone adjacency without self-loops."""
        A = np.zeros((self.joint_count, self.joint_count))
        for p, c in self.edges():
            A[p, c] = A[c, p] = 1.0
        return A

    def depth(self, j: int) -> int:
        d = 0
        while j != self.root:
            j = self.parent[j]
            d += 1
        return d

    def walk_order(self) -> list[int]:
        """Joints sorted so every parent precedes its children."""
        return sorted(range(self.joint_count), key=self.depth)

    def is_default(self) -> bool:
        return self == H36M


H36M = SkeletonTopology(
    parent=(0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15),
    mirror=(0, 4, 5, 6, 1, 2, 3, 7, 8, 9, 10, 14, 15, 16, 11, 12, 13),
    names=(
        "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
        "spine", "thorax", "neck", "head",
        "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
    ),
)

# Five-joint toy skeleton used by tiny-config gradient checks.
TOY5 = SkeletonTopology(
    parent=(0, 0, 0, 0, 3),
    mirror=(0, 2, 1, 3, 4),
    names=("pelvis", "r_hip", "l_hip", "spine", "head"),
)


def default_topology() -> SkeletonTopology:
    return H36M


def _check(data: np.ndarray, kind: str, topo: SkeletonTopology | None = None) -> np.ndarray:
    data = np.array(data, dtype=np.float64)
    if data.ndim != 3 or data.shape[2] != 3 or data.shape[0] < 1:
        raise ValueError(f"{kind} must have shape (T>=1, J, 3), got {data.shape}")
    if topo is not None and data.shape[1] != topo.joint_count:
        raise ValueError(
            f"{kind} has {data.shape[1]} joints but topology has {topo.joint_count} "
            f"(shape {data.shape})"
        )
    data.setflags(write=False)
    return data


@dataclass(frozen=True)
class Pose2DClip:
    """2D joints with detector confidence: (T, J, 3) = (x, y, conf), x/y in [-1, 1]."""

    data: np.ndarray
    action: str = ""

    def __post_init__(self):
        data = _check(self.data, "Pose2DClip")
        conf = data[..., 2]
        if np.any(conf < 0) or np.any(conf > 1):
            raise ValueError("confidence channel must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def joints(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Pose3DClip:
    """3D joints in millimetres, shape (T, J, 3)."""

    data: np.ndarray
    action: str = ""

    def __post_init__(self):
        object.__setattr__(self, "data", _check(self.data, "Pose3DClip"))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def joints(self) -> int:
        return self.data.shape[1]


def center_on_root(clip: Pose3DClip, topo: SkeletonTopology) -> Pose3DClip:
    data = _check(clip.data, "Pose3DClip", topo)
    return Pose3DClip(data - data[:, topo.root:topo.root + 1, :], clip.action)


def flip_array(data: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Negate x and swap left/right joint rows; works on any (..., J, C>=1) array."""
    out = np.array(data, dtype=np.float64)[..., list(topo.mirror), :]
    out[..., 0] = -out[..., 0]
    return out


def horizontal_flip(
    clip2d: Pose2DClip, clip3d: Pose3DClip, topo: SkeletonTopology
) -> tuple[Pose2DClip, Pose3DClip]:
    d2 = _check(clip2d.data, "Pose2DClip", topo)
    d3 = _check(clip3d.data, "Pose3DClip", topo)
    if d2.shape[0] != d3.shape[0]:
        raise ValueError(f"frame counts differ: 2D {d2.shape} vs 3D {d3.shape}")
    # confidence is only permuted; flip_array negates channel 0 alone
    return Pose2DClip(flip_array(d2, topo), clip2d.action), Pose3DClip(flip_array(d3, topo), clip3d.action)


@dataclass(frozen=True)
class ClipPair:
    pose2d: Pose2DClip
    pose3d: Pose3DClip
    action: str = field(default="")


def save_clip(path: str | Path, pose2d: Pose2DClip | None, pose3d: Pose3DClip | None,
              action: str = "") -> None:
    """Write a clip file. The action label is stored as a rank-1 tensor of UTF-8 byte codes."""
    tensors: dict[str, np.ndarray] = {}
    if pose2d is not None:
        tensors["pose2d"] = pose2d.data
    if pose3d is not None:
        tensors["pose3d"] = pose3d.data
    tensors["action"] = np.frombuffer(action.encode("utf-8"), dtype=np.uint8).astype(np.float32)
    container.write(path, tensors)


def load_clip(path: str | Path) -> ClipPair:
    t = container.read(path)
    action = bytes(t["action"].astype(np.uint8).tolist()).decode("utf-8") if "action" in t else ""
    if "pose2d" not in t and "pose3d" not in t:
        raise ValueError(f"{path}: clip file holds neither 'pose2d' nor 'pose3d'")
    p2 = Pose2DClip(t["pose2d"].astype(np.float64), action) if "pose2d" in t else None
    p3 = Pose3DClip(t["pose3d"].astype(np.float64), action) if "pose3d" in t else None
    return ClipPair(p2, p3, action)
