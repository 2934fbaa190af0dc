"""Kinematics-aware 2D-to-3D human pose lifting with a numpy autograd kernel."""

from .config import ModelConfig, TrainConfig, load_config, parse_config
from .kinematics import BoneSet, LimbTable, default_limb_table, extract_bones, fuse_limbs, reconstruct_joints
from .metrics import mpjpe, p_mpjpe, procrustes_align, report
from .model import forward_batch, init_params, load_checkpoint, model_forward, parameter_count, save_checkpoint
from .skeleton import H36M, ClipPair, Pose2DClip, Pose3DClip, SkeletonTopology, load_clip, save_clip
from .synth import generate_clip, make_suite, project_to_2d
from .training import fit, loss_pose, loss_velocity, total_loss

__version__ = "0.1.0"

__all__ = [
    "H36M", "BoneSet", "ClipPair", "LimbTable", "ModelConfig", "Pose2DClip", "Pose3DClip",
    "SkeletonTopology", "TrainConfig", "default_limb_table", "extract_bones", "fit", "forward_batch",
    "fuse_limbs", "generate_clip", "init_params", "load_checkpoint", "load_clip", "load_config",
    "loss_pose", "loss_velocity", "make_suite", "model_forward", "mpjpe", "p_mpjpe", "parameter_count",
    "parse_config", "procrustes_align", "project_to_2d", "reconstruct_joints", "report", "save_checkpoint",
    "save_clip", "total_loss",
]
