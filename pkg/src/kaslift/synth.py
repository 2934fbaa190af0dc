"""Synthetic sports-like motion: forward kinematics over the 17-joint tree and pinhole projection.

Coordinates are camera-aligned millimetres with x right, y down and z
away from the camera, so an upright skeleton has its head at negative y.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .skeleton import H36M, ClipPair, Pose2DClip, Pose3DClip, SkeletonTopology, center_on_root

# Rest-pose offset of each joint from its parent (mm); lengths are the bone lengths.
REST_OFFSETS = np.array([
    [0, 0, 0],          # pelvis
    [-130, 0, 0],       # r_hip
    [0, 450, 0],        # r_knee
    [0, 440, 0],        # r_ankle
    [130, 0, 0],        # l_hip
    [0, 450, 0],        # l_knee
    [0, 440, 0],        # l_ankle
    [0, -230, 0],       # spine
    [0, -250, 0],       # thorax
    [0, -110, 0],       # neck
    [0, -115, 0],       # head
    [150, 10, 0],       # l_shoulder
    [40, 275, 0],       # l_elbow
    [20, 250, 0],       # l_wrist
    [-150, 10, 0],      # r_shoulder
    [-40, 275, 0],      # r_elbow
    [-20, 250, 0],      # r_wrist
], dtype=np.float64)


@dataclass(frozen=True)
class MotionTemplate:
    """Sinusoidal joint-angle motion.  Angle arrays are (J, 3): rotations about x, y, z.

    ``root_velocity`` is mm per clip; ``root_bob`` is a vertical oscillation
    (amplitude mm, cycles per clip).
    """

    name: str
    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray
    offsets: np.ndarray = REST_OFFSETS
    root_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    root_bob: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("amplitude", "frequency", "phase", "offsets"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != REST_OFFSETS.shape:
                raise ValueError(f"{name} must have shape {REST_OFFSETS.shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.frequency < 0):
            raise ValueError("frequencies must be >= 0")

    @property
    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.offsets, axis=-1)


def _template(name, angles: dict[int, tuple[tuple[float, float, float], float, float]],
              freq: float, **kw) -> MotionTemplate:
    amp = np.zeros((17, 3))
    frq = np.full((17, 3), freq)
    ph = np.zeros((17, 3))
    for j, (a, phase, f) in angles.items():
        amp[j] = a
        ph[j] = phase
        if f is not None:
            frq[j] = f
    return MotionTemplate(name, amp, frq, ph, **kw)


def default_templates() -> list[MotionTemplate]:
    pi = np.pi
    return [
        _template("run", {
            1: ((0.7, 0, 0), 0, None), 4: ((0.7, 0, 0), pi, None),
            2: ((0.6, 0, 0), pi / 2, None), 5: ((0.6, 0, 0), 3 * pi / 2, None),
            14: ((0.6, 0, 0.1), pi, None), 11: ((0.6, 0, 0.1), 0, None),
            15: ((0.5, 0, 0), pi, None), 12: ((0.5, 0, 0), 0, None),
            7: ((0.1, 0.15, 0), 0, None),
        }, 2.0, root_velocity=(600.0, 0.0, 0.0), root_bob=(30.0, 4.0)),
        _template("jump", {
            1: ((0.6, 0, 0), 0, None), 4: ((0.6, 0, 0), 0, None),
            2: ((0.8, 0, 0), pi, None), 5: ((0.8, 0, 0), pi, None),
            14: ((1.2, 0, 0.3), 0, None), 11: ((1.2, 0, 0.3), 0, None),
            7: ((0.3, 0, 0), 0, None),
        }, 1.0, root_bob=(250.0, 1.0)),
        _template("throw", {
            14: ((1.4, 0.6, 0.4), 0, None), 15: ((1.0, 0, 0), pi / 2, None),
            11: ((0.5, 0, 0.2), pi, None),
            7: ((0.1, 0.5, 0), 0, None), 8: ((0.1, 0.3, 0), 0, None),
            1: ((0.3, 0, 0), pi, None), 4: ((0.3, 0, 0), 0, None),
        }, 1.0, root_velocity=(150.0, 0.0, 0.0)),
        _template("kick", {
            1: ((1.2, 0, 0.2), 0, None), 2: ((0.9, 0, 0), pi / 2, None),
            4: ((0.2, 0, 0), pi, None), 5: ((0.2, 0, 0), pi, None),
            11: ((0.5, 0, 0.4), pi, None), 14: ((0.5, 0, 0.4), 0, None),
            7: ((0.2, 0.2, 0), pi, None),
        }, 1.0, root_velocity=(200.0, 0.0, 0.0)),
        _template("swing", {
            7: ((0.1, 0.7, 0), 0, None), 8: ((0, 0.4, 0), 0, None),
            14: ((0.9, 0.5, 0.3), 0, None), 11: ((0.9, 0.5, 0.3), 0, None),
            15: ((0.4, 0, 0), pi / 2, None), 12: ((0.4, 0, 0), pi / 2, None),
            2: ((0.2, 0, 0), 0, None), 5: ((0.2, 0, 0), pi, None),
        }, 1.0),
    ]


def template_by_name(name: str) -> MotionTemplate:
    for t in default_templates():
        if t.name == name:
            return t
    raise KeyError(f"unknown motion template {name!r}")


def _rot(angles: np.ndarray) -> np.ndarray:
    """Rotation matrices R = Rz @ Ry @ Rx for angle arrays (..., 3)."""
    ax, ay, az = angles[..., 0], angles[..., 1], angles[..., 2]
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    R = np.empty(angles.shape[:-1] + (3, 3))
    R[..., 0, 0] = cz * cy
    R[..., 0, 1] = cz * sy * sx - sz * cx
    R[..., 0, 2] = cz * sy * cx + sz * sx
    R[..., 1, 0] = sz * cy
    R[..., 1, 1] = sz * sy * sx + cz * cx
    R[..., 1, 2] = sz * sy * cx - cz * sx
    R[..., 2, 0] = -sy
    R[..., 2, 1] = cy * sx
    R[..., 2, 2] = cy * cx
    return R


def forward_kinematics(local_angles: np.ndarray, offsets: np.ndarray,
                       topo: SkeletonTopology = H36M) -> np.ndarray:
    """Joint positions (T, J, 3) from per-joint local Euler angles (T, J, 3); root at the origin."""
    T, J = local_angles.shape[:2]
    local = _rot(local_angles)
    glob = np.empty((T, J, 3, 3))
    pos = np.zeros((T, J, 3))
    for j in topo.walk_order():
        if j == topo.root:
            glob[:, j] = local[:, j]
            continue
        p = topo.parent[j]
        pos[:, j] = pos[:, p] + glob[:, p] @ offsets[j]
        glob[:, j] = glob[:, p] @ local[:, j]
    return pos


def jitter(template: MotionTemplate, rng: np.random.Generator) -> MotionTemplate:
    """Per-clip variation: amplitude, phase, frequency and bone-length perturbations."""
    J = template.amplitude.shape[0]
    return replace(
        template,
        amplitude=template.amplitude * rng.uniform(0.8, 1.2, (J, 3)),
        phase=template.phase + rng.uniform(-0.3, 0.3, (J, 3)),
        frequency=template.frequency * rng.uniform(0.9, 1.1),
        offsets=template.offsets * rng.uniform(0.95, 1.05),
    )


def generate_world_clip(template: MotionTemplate, frames: int, seed: int) -> np.ndarray:
    """Un-centred joint positions (T, J, 3) including the root trajectory and a random heading."""
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    rng = np.random.default_rng(seed)
    tpl = jitter(template, rng)
    heading = rng.uniform(-np.pi / 3, np.pi / 3)
    t = np.arange(frames) / frames
    angles = tpl.amplitude * np.sin(2 * np.pi * tpl.frequency * t[:, None, None] + tpl.phase)
    angles[:, 0, 1] += heading
    pos = forward_kinematics(angles, tpl.offsets)
    vel = np.asarray(tpl.root_velocity)
    c, s = np.cos(heading), np.sin(heading)
    vel = np.array([c * vel[0] + s * vel[2], vel[1], -s * vel[0] + c * vel[2]])
    amp, f = tpl.root_bob
    root = t[:, None] * vel - np.abs(amp * np.sin(np.pi * f * t))[:, None] * np.array([0.0, 1.0, 0.0])
    return pos + root[:, None, :]


def generate_clip(template: MotionTemplate, frames: int, seed: int) -> Pose3DClip:
    """Root-centred synthetic clip; deterministic in (template, frames, seed)."""
    return center_on_root(Pose3DClip(generate_world_clip(template, frames, seed), template.name), H36M)


@dataclass(frozen=True)
class Camera:
    focal: float = 1000.0        # px
    cx: float = 500.0
    cy: float = 500.0
    distance: float = 5000.0     # mm from camera to the world origin along z
    width: float = 1000.0        # px, used for [-1, 1] normalization

    def project(self, points: np.ndarray) -> np.ndarray:
        """Pixel coordinates (..., 2) of camera-frame points (..., 3) shifted by ``distance``."""
        z = points[..., 2] + self.distance
        return np.stack([self.focal * points[..., 0] / z + self.cx,
                         self.focal * points[..., 1] / z + self.cy], axis=-1)

    def normalize(self, pixels: np.ndarray) -> np.ndarray:
        """Scale pixels by the image width into [-1, 1] (x) with the same factor for y."""
        out = pixels * (2.0 / self.width)
        out[..., 0] -= 1.0
        out[..., 1] -= 2.0 * self.cy / self.width
        return out


def project_to_2d(clip: Pose3DClip | np.ndarray, camera: Camera = Camera(), noise_std: float = 0.0,
                  seed: int = 0, conf_scale: float = 5.0, action: str | None = None) -> Pose2DClip:
    """Pinhole projection with Gaussian pixel noise and a noise-derived confidence."""
    pts = clip.data if isinstance(clip, Pose3DClip) else np.asarray(clip, dtype=np.float64)
    z = pts[..., 2] + camera.distance
    behind = np.argwhere(z <= 0)
    if len(behind):
        f, j = behind[0]
        raise ValueError(f"joint {int(j)} at frame {int(f)} is behind the camera")
    pix = camera.project(pts)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_std, pix.shape) if noise_std > 0 else np.zeros_like(pix)
    conf = np.clip(np.exp(-np.linalg.norm(noise, axis=-1) / conf_scale), 0.0, 1.0)
    xy = camera.normalize(pix + noise)
    label = action if action is not None else getattr(clip, "action", "")
    return Pose2DClip(np.concatenate([xy, conf[..., None]], axis=-1), label)


def make_pair(template: MotionTemplate, frames: int, seed: int, camera: Camera = Camera(),
              noise_std: float = 0.0) -> ClipPair:
    world = generate_world_clip(template, frames, seed)
    p2 = project_to_2d(world, camera, noise_std, seed=seed + 7919, action=template.name)
    p3 = center_on_root(Pose3DClip(world, template.name), H36M)
    return ClipPair(p2, p3, template.name)


def make_suite(clips_per_template: int, frames: int = 27, seed: int = 0, noise_std: float = 2.0,
               templates: list[MotionTemplate] | None = None, camera: Camera = Camera()) -> list[ClipPair]:
    """Clips for every template; clip seeds are derived from ``seed`` so suites do not overlap."""
    templates = templates or default_templates()
    out = []
    for ti, tpl in enumerate(templates):
        for k in range(clips_per_template):
            clip_seed = seed * 1_000_003 + ti * 10_007 + k
            out.append(make_pair(tpl, frames, clip_seed, camera, noise_std))
    return out
