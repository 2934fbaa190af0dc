import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kaslift.metrics import (ClipMetrics, PMPJPEResult, UnalignableFrameError, mpjpe, p_mpjpe,
                             procrustes_align, procrustes_transform, report)
from kaslift.skeleton import Pose3DClip


def rotation(axis, angle):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    return q if np.linalg.det(q) > 0 else -q


def pose(rng, J=17):
    return rng.normal(scale=200, size=(J, 3))


def test_mpjpe_trivial():
    g = pose(np.random.default_rng(0))
    assert mpjpe(g, g) == 0.0
    assert mpjpe(g + [3, 4, 0], g) == pytest.approx(5.0, abs=1e-12)


def test_mpjpe_scalar_oracle():
    rng = np.random.default_rng(1)
    p, g = rng.normal(size=(4, 17, 3)), rng.normal(size=(4, 17, 3))
    total = 0.0
    for t in range(4):
        for j in range(17):
            total += math.sqrt(sum((p[t, j, c] - g[t, j, c]) ** 2 for c in range(3)))
    assert abs(mpjpe(Pose3DClip(p), Pose3DClip(g)) - total / 68) <= 1e-12


def test_mpjpe_shape_mismatch():
    with pytest.raises(ValueError):
        mpjpe(np.zeros((2, 17, 3)), np.zeros((2, 16, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_similarity_copies_align_exactly(seed):
    rng = np.random.default_rng(seed)
    g = pose(rng)
    R, t = random_rotation(rng), rng.normal(scale=500, size=3)
    rigid = g @ R.T + t
    assert np.max(np.abs(procrustes_align(rigid, g) - g)) < 1e-9
    assert np.max(np.abs(procrustes_align(2 * g, g) - g)) < 1e-9
    scaled = 0.7 * g @ R.T + t
    assert p_mpjpe(scaled[None], g[None]) < 1e-9
    assert p_mpjpe(g[None], g[None]) < 1e-9


def test_rigid_mode_keeps_scale():
    g = pose(np.random.default_rng(3))
    s, R, _ = procrustes_transform(2 * g, g, scale=False)
    assert s == 1.0
    assert p_mpjpe((2 * g)[None], g[None], scale=False) > 1.0


def grid_rotations(step_deg=15):
    """Axis-angle grid: axes on a 15 degree spherical grid, angles in 15 degree steps."""
    step = math.radians(step_deg)
    axes = [(0.0, 0.0, 1.0)]
    for th in np.arange(step, math.pi, step):
        for ph in np.arange(0, 2 * math.pi, step):
            axes.append((math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)))
    mats = [np.eye(3)]
    for ax in axes:
        for ang in np.arange(step, math.pi + 1e-9, step):
            mats.append(rotation(ax, ang))
    return np.array(mats)


@pytest.mark.parametrize("seed", range(2))
def test_grid_search_never_beats_procrustes(seed):
    rng = np.random.default_rng(seed)
    g = pose(rng, J=6)
    p = g @ random_rotation(rng).T * 1.3 + rng.normal(scale=60, size=g.shape)
    ours = np.sum((procrustes_align(p, g) - g) ** 2)
    p0, g0 = p - p.mean(0), g - g.mean(0)
    rots = grid_rotations()
    scales = np.arange(0.5, 2.0 + 1e-9, 0.05)
    rotated = np.einsum("rij,nj->rni", rots, p0)
    best = min(np.sum((s * rotated - g0) ** 2, axis=(1, 2)).min() for s in scales)
    assert ours <= best + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_p_mpjpe_bounded_by_mpjpe(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(scale=200, size=(2, 17, 3))
    p = rng.normal(scale=200, size=(2, 17, 3))
    g -= g[:, :1]
    p -= p[:, :1]
    assert p_mpjpe(p, g) <= mpjpe(p, g) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_pre_rotation_invariance_and_proper_rotation(seed):
    rng = np.random.default_rng(seed)
    p, g = pose(rng), pose(rng)
    Q = random_rotation(rng)
    assert np.max(np.abs(procrustes_align(p @ Q.T, g) - procrustes_align(p, g))) < 1e-9
    _, R, _ = procrustes_transform(p, g)
    assert abs(np.linalg.det(R) - 1) < 1e-9


def test_reflection_is_not_used():
    g = pose(np.random.default_rng(5))
    mirrored = g * np.array([-1, 1, 1])
    _, R, _ = procrustes_transform(mirrored, g)
    assert abs(np.linalg.det(R) - 1) < 1e-9
    assert p_mpjpe(mirrored[None], g[None]) > 1.0


def test_degenerate_frames_are_excluded_and_counted():
    rng = np.random.default_rng(6)
    g = rng.normal(size=(3, 17, 3))
    p = g.copy()
    p[1] = 0.0                                        # collapsed
    p[2] = np.outer(np.arange(17), [1.0, 2.0, 3.0])   # collinear
    res = p_mpjpe(p, g, return_excluded=True)
    assert isinstance(res, PMPJPEResult)
    assert res.excluded_frames == 2
    assert res.value < 1e-9
    with pytest.raises(UnalignableFrameError):
        p_mpjpe(np.zeros((2, 17, 3)), g[:2])
    with pytest.raises(UnalignableFrameError):
        procrustes_align(p[2], g[2])


def test_report_trivial_cases():
    r = report([ClipMetrics(12.0, 8.0)], ["run"])
    assert r.overall == (1, 12.0, 8.0)
    r = report([ClipMetrics(10.0, 1.0), ClipMetrics(20.0, 3.0)], ["a", "b"])
    assert r.overall[1] == 15.0 and r.overall[2] == 2.0


def test_report_group_by_oracle():
    rng = np.random.default_rng(7)
    labels = [str(x) for x in rng.choice(list("abcd"), 40)]
    ms = [ClipMetrics(float(a), float(b)) for a, b in rng.uniform(0, 100, (40, 2))]
    r = report(ms, labels)
    for action, n, m, pm in r.rows:
        members = [x for x, l in zip(ms, labels) if l == action]
        assert n == len(members)
        assert m == pytest.approx(sum(x.mpjpe for x in members) / n, abs=1e-12)
        assert pm == pytest.approx(sum(x.p_mpjpe for x in members) / n, abs=1e-12)
    assert [row[0] for row in r.rows] == sorted(set(labels))
    assert r.overall[1] == pytest.approx(np.mean([x.mpjpe for x in ms]), abs=1e-12)


def test_report_formats():
    r = report([ClipMetrics(10.0, 5.0), ClipMetrics(20.0, 7.0), ClipMetrics(30.0, 9.0)], ["jump", "jump", "kick"])
    csv = r.to_csv().splitlines()
    assert csv[0] == "action,clips,mpjpe_mm,p_mpjpe_mm"
    assert csv[1] == "jump,2,15.0,6.0"
    assert csv[-1] == "overall,3,20.0,7.0"
    text = r.to_text().splitlines()
    assert len({len(line) for line in text}) == 1
    assert text[-1].split() == ["overall", "3", "20.00", "7.00"]


def test_report_label_mismatch():
    with pytest.raises(ValueError):
        report([ClipMetrics(1.0, 1.0)], ["a", "b"])
    with pytest.raises(ValueError, match="expected"):
        report([ClipMetrics(1.0, 1.0)], ["a"], expected_actions=["a", "b"])
