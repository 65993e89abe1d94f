import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import det, track
from nuhtrack.affinity import (DegenerateInputError, MotionContext, cosine_similarity, edge_affinity,
                               hyperedge_affinity, motion_sigmoid, normalize_histogram, self_loop_affinity)
from nuhtrack.model import PointTrajectory, Tracklet


def _through(frames, x=0.0, y=0.0, n=1, start=0):
    """``n`` trajectories sitting at (x, y) over ``frames``."""
    fs = np.asarray(frames)
    return [PointTrajectory(start + k, fs, np.full(len(fs), x), np.full(len(fs), y)) for k in range(n)]


@pytest.mark.parametrize("confs,want", [([1, 1, 1], 1.0), ([0.2, 0.8], 0.5), ([0.33], 0.33)])
def test_self_loop(confs, want):
    t = Tracklet(0, tuple(det(f, conf=c) for f, c in enumerate(confs)))
    assert self_loop_affinity(t)[0] == pytest.approx(want)


def test_cosine_examples():
    assert cosine_similarity([2, 3], [2, 3]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 5]) == 0.0
    assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(0.70710678, abs=1e-8)
    with pytest.raises(DegenerateInputError):
        cosine_similarity([0, 0], [1, 0])
    with pytest.raises(ValueError):
        cosine_similarity([1, 0, 0], [1, 0])


def test_normalize_histogram():
    assert np.linalg.norm(normalize_histogram([3, 4, 0])) == pytest.approx(1.0)
    assert not normalize_histogram([0, 0]).any()
    with pytest.raises(ValueError):
        normalize_histogram([-1, 2])


def test_edge_zero_zeta_gives_zero_motion():
    a = edge_affinity(track(0, [0]), track(1, [1]), MotionContext())
    assert a[2] == 0.0
    assert a[0] == a[1] == 0.5


def test_edge_identical_histograms():
    h = np.array([1.0, 2.0, 0.5])
    vi = Tracklet(0, (det(0, histogram=h),))
    vj = Tracklet(1, (det(3, histogram=2 * h),))
    assert edge_affinity(vi, vj, MotionContext())[0] == pytest.approx(1.0)


def test_edge_motion_value():
    # boxes of area 100; 100 trajectories through both -> sigmoid(2*100/200)
    ctx = MotionContext(_through([0, 1], n=100))
    a = edge_affinity(track(0, [0]), track(1, [1]), ctx)
    assert a[2] == pytest.approx(0.46211716, abs=1e-8)


def test_edge_needs_temporal_order():
    with pytest.raises(ValueError):
        edge_affinity(track(0, [2]), track(1, [2]), MotionContext())


def test_edge_uses_tail_and_head_boxes():
    # trajectories pass through the last box of vi and first box of vj only
    vi = Tracklet(0, (det(0, cx=500.0), det(1)))
    vj = Tracklet(1, (det(3), det(4, cx=500.0)))
    ctx = MotionContext(_through([1, 3], n=20))
    assert edge_affinity(vi, vj, ctx)[2] == pytest.approx(motion_sigmoid(2 * 20 / 200))


def test_hyperedge_values():
    nodes = [track(k, [k]) for k in range(3)]
    assert hyperedge_affinity(nodes, MotionContext())[0] == 0.0
    # total area 900 via three 10x30 boxes; zeta 300
    wide = [Tracklet(k, (det(k, w=10.0, h=30.0),)) for k in range(3)]
    ctx = MotionContext(_through([0, 1, 2], n=300))
    assert hyperedge_affinity(wide, ctx)[0] == pytest.approx(0.46211716, abs=1e-8)
    assert hyperedge_affinity(wide[::-1], ctx)[0] == hyperedge_affinity(wide, ctx)[0]


def test_hyperedge_preconditions():
    with pytest.raises(ValueError):
        hyperedge_affinity([track(0, [0]), track(1, [1])], MotionContext())
    with pytest.raises(ValueError):
        hyperedge_affinity([track(0, [0, 1]), track(1, [1]), track(2, [3])], MotionContext())


def test_hyperedge_needs_every_box():
    # 5 trajectories miss frame 1 of the middle tracklet, so only 3 count
    nodes = [track(0, [0]), track(1, [1, 2]), track(2, [4])]
    ctx = MotionContext(_through([0, 1, 2, 4], n=3) + _through([0, 2, 4], n=5, start=10))
    assert ctx.count_through([b for t in nodes for b in t.detections]) == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 400), st.floats(100, 1e4), st.floats(10, 1e4))
def test_motion_monotone(zeta, area, extra):
    # areas of at least 10x10 keep the sigmoid argument below 8, well short of saturation
    assert 0.0 <= motion_sigmoid(2 * zeta / area) < 1.0
    if zeta > 0:
        assert motion_sigmoid(2 * (zeta + 1) / area) > motion_sigmoid(2 * zeta / area)
        assert motion_sigmoid(2 * zeta / (area + extra)) < motion_sigmoid(2 * zeta / area)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_membership_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    trajs = []
    for k in range(int(rng.integers(1, 50))):
        f0 = int(rng.integers(0, 5))
        fs = np.arange(f0, f0 + int(rng.integers(2, 6)))
        trajs.append(PointTrajectory(k, fs, rng.uniform(0, 100, len(fs)), rng.uniform(0, 100, len(fs))))
    ctx = MotionContext(trajs)
    boxes = [det(int(rng.integers(0, 8)), *rng.uniform(0, 100, 2), *rng.uniform(5, 60, 2))
             for _ in range(int(rng.integers(1, 4)))]

    def inside(tr, b):
        hit = np.flatnonzero(tr.frames == b.frame)
        if len(hit) == 0:
            return False
        x, y = tr.xs[hit[0]], tr.ys[hit[0]]
        return b.cx - b.w / 2 <= x <= b.cx + b.w / 2 and b.cy - b.h / 2 <= y <= b.cy + b.h / 2

    want = sum(all(inside(tr, b) for b in boxes) for tr in trajs)
    assert ctx.count_through(boxes) == want


def test_affinity_components_in_unit_interval():
    rng = np.random.default_rng(0)
    ctx = MotionContext(_through([0, 1, 2], n=50))
    for _ in range(50):
        vi = Tracklet(0, (det(0, histogram=rng.random(6), embedding=rng.normal(size=4)),))
        vj = Tracklet(1, (det(1, histogram=rng.random(6), embedding=rng.normal(size=4)),))
        a = edge_affinity(vi, vj, ctx)
        assert np.all((a >= 0) & (a <= 1))
    assert math.isclose(motion_sigmoid(1e6), 1.0)
