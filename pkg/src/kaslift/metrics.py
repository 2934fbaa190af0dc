"""MPJPE, Procrustes-aligned MPJPE and per-action reports."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .skeleton import Pose3DClip


class UnalignableFrameError(ValueError):
    pass


def _arr(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Pose3DClip) else x, dtype=np.float64)


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p, g = _arr(pred), _arr(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    return p, g


def mpjpe(pred, gt) -> float:
    """Mean per-joint Euclidean distance (same units as the inputs, mm for clips)."""
    p, g = _pair(pred, gt)
    return float(np.linalg.norm(p - g, axis=-1).mean())


def procrustes_transform(pred_frame, gt_frame, scale: bool = True, rank_tol: float = 1e-9):
    """Similarity transform (s, R, t) taking ``pred_frame`` (J, 3) onto ``gt_frame``.

    Rotation from the SVD of the cross-covariance with the sign of the
    weakest direction flipped when needed so that det(R) = +1.
    """
    p, g = _pair(pred_frame, gt_frame)
    mu_p, mu_g = p.mean(axis=0), g.mean(axis=0)
    p0, g0 = p - mu_p, g - mu_g
    for name, pts in (("pred", p0), ("gt", g0)):
        sv = np.linalg.svd(pts, compute_uv=False)
        if sv[0] == 0 or sv[1] <= rank_tol * sv[0]:
            raise UnalignableFrameError(f"{name} points have rank < 2; rotation is not determined")
    U, S, Vt = np.linalg.svd(g0.T @ p0)
    D = np.ones(3)
    D[-1] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = (U * D) @ Vt
    s = float((S * D).sum() / (p0 * p0).sum()) if scale else 1.0
    t = mu_g - s * R @ mu_p
    return s, R, t


def procrustes_align(pred_frame, gt_frame, scale: bool = True) -> np.ndarray:
    p = _arr(pred_frame)
    s, R, t = procrustes_transform(p, gt_frame, scale)
    return s * p @ R.T + t


@dataclass(frozen=True)
class PMPJPEResult:
    value: float
    excluded_frames: int


def p_mpjpe(pred, gt, scale: bool = True, return_excluded: bool = False):
    """MPJPE after per-frame Procrustes alignment, averaged over alignable frames."""
    p, g = _pair(pred, gt)
    p = p.reshape((-1,) + p.shape[-2:])
    g = g.reshape((-1,) + g.shape[-2:])
    errs, excluded = [], 0
    for pf, gf in zip(p, g):
        try:
            aligned = procrustes_align(pf, gf, scale)
        except UnalignableFrameError:
            excluded += 1
            continue
        errs.append(np.linalg.norm(aligned - gf, axis=-1).mean())
    if not errs:
        raise UnalignableFrameError(f"all {excluded} frames are degenerate")
    value = float(np.mean(errs))
    return PMPJPEResult(value, excluded) if return_excluded else value


@dataclass(frozen=True)
class ClipMetrics:
    mpjpe: float
    p_mpjpe: float


@dataclass
class Report:
    """Per-action and overall metric means; overall is the clip-weighted mean."""

    rows: list[tuple[str, int, float, float]]
    overall: tuple[int, float, float]

    def to_text(self) -> str:
        header = ("action", "clips", "MPJPE(mm)", "P-MPJPE(mm)")
        body = [(a, str(n), f"{m:.2f}", f"{pm:.2f}") for a, n, m, pm in self.rows]
        body.append(("overall", str(self.overall[0]), f"{self.overall[1]:.2f}", f"{self.overall[2]:.2f}"))
        widths = [max(len(r[i]) for r in [header, *body]) for i in range(4)]
        fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
        lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["action,clips,mpjpe_mm,p_mpjpe_mm"]
        lines += [f"{a},{n},{m!r},{pm!r}" for a, n, m, pm in self.rows]
        lines.append(f"overall,{self.overall[0]},{self.overall[1]!r},{self.overall[2]!r}")
        return "\n".join(lines) + "\n"


def report(per_clip: Sequence[ClipMetrics], action_labels: Sequence[str],
           expected_actions: Sequence[str] | None = None) -> Report:
    if len(per_clip) != len(action_labels):
        raise ValueError(f"{len(per_clip)} clip metrics but {len(action_labels)} action labels")
    if not per_clip:
        raise ValueError("no clips to report")
    if expected_actions is not None and set(action_labels) != set(expected_actions):
        raise ValueError(f"action labels {sorted(set(action_labels))} do not match "
                         f"expected {sorted(set(expected_actions))}")
    groups: dict[str, list[ClipMetrics]] = defaultdict(list)
    for m, a in zip(per_clip, action_labels):
        groups[a].append(m)
    rows = [(a, len(ms), float(np.mean([m.mpjpe for m in ms])), float(np.mean([m.p_mpjpe for m in ms])))
            for a, ms in sorted(groups.items())]
    overall = (len(per_clip), float(np.mean([m.mpjpe for m in per_clip])),
               float(np.mean([m.p_mpjpe for m in per_clip])))
    return Report(rows, overall)
