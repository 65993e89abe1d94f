"""Self-loop, edge and hyperedge affinities from tracklets and point trajectories."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .model import Detection, PointTrajectory, Tracklet


class DegenerateInputError(ValueError):
    pass


NEUTRAL = 0.5


def motion_sigmoid(x: float) -> float:
    """``1 - 2/(1+exp(x))``; maps [0, inf) onto [0, 1)."""
    if x > 700:
        return 1.0
    return 1.0 - 2.0 / (1.0 + math.exp(x))


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DegenerateInputError("cosine similarity of a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def normalize_histogram(counts) -> np.ndarray:
    """L2-normalize nonnegative bin counts; all-zero input stays zero (degenerate)."""
    h = np.asarray(counts, dtype=float)
    if np.any(h < 0):
        raise ValueError("histogram bins must be nonnegative")
    n = np.linalg.norm(h)
    return h / n if n > 0 else h


def self_loop_affinity(v: Tracklet) -> np.ndarray:
    return np.array([v.score])


class MotionContext:
    """Point trajectories indexed by frame for box-membership queries."""

    def __init__(self, trajectories: Sequence[PointTrajectory] = ()):
        self.trajectories = list(trajectories)
        per_frame: dict[int, list[tuple[int, float, float]]] = {}
        for k, tr in enumerate(self.trajectories):
            for f, x, y in zip(tr.frames, tr.xs, tr.ys):
                per_frame.setdefault(int(f), []).append((k, x, y))
        self._frames = {}
        for f, rows in per_frame.items():
            arr = np.array(rows, dtype=float)
            self._frames[f] = (arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2])
        self._cache: dict[tuple, np.ndarray] = {}

    def __len__(self):
        return len(self.trajectories)

    def members(self, box: Detection) -> np.ndarray:
        """Sorted indices of trajectories with a sample inside ``box`` at its frame."""
        key = (box.frame, box.cx, box.cy, box.w, box.h)
        hit = self._cache.get(key)
        if hit is None:
            entry = self._frames.get(box.frame)
            if entry is None:
                hit = np.empty(0, dtype=np.int64)
            else:
                ids, xs, ys = entry
                hit = np.sort(ids[box.contains(xs, ys)])
            self._cache[key] = hit
        return hit

    def count_through(self, boxes: Sequence[Detection]) -> int:
        """Number of trajectories crossing every box in ``boxes``."""
        if not boxes or not self.trajectories:
            return 0
        sets = sorted((self.members(b) for b in boxes), key=len)
        common = sets[0]
        for s in sets[1:]:
            if len(common) == 0:
                break
            common = np.intersect1d(common, s, assume_unique=True)
        return int(len(common))


def _embedding_similarity(a: Detection, b: Detection) -> float:
    if a.embedding is None or b.embedding is None:
        return NEUTRAL
    try:
        return (1.0 + cosine_similarity(a.embedding, b.embedding)) / 2.0
    except DegenerateInputError:
        return NEUTRAL


def _color_similarity(a: Detection, b: Detection) -> float:
    if a.histogram is None or b.histogram is None:
        return NEUTRAL
    try:
        return float(np.clip(cosine_similarity(a.histogram, b.histogram), 0.0, 1.0))
    except DegenerateInputError:
        return NEUTRAL


def edge_affinity(vi: Tracklet, vj: Tracklet, ctx: MotionContext) -> np.ndarray:
    """``[P_col, P_emb, P_mot]`` between the tail of ``vi`` and the head of ``vj``."""
    if vi.end >= vj.start:
        raise ValueError(f"edge needs vi before vj (vi ends {vi.end}, vj starts {vj.start})")
    tail, head = vi.last, vj.first
    zeta = ctx.count_through([tail, head])
    p_mot = motion_sigmoid(2.0 * zeta / (tail.area + head.area))
    return np.clip([_color_similarity(tail, head), _embedding_similarity(tail, head), p_mot], 0.0, 1.0)


def hyperedge_affinity(nodes: Sequence[Tracklet], ctx: MotionContext) -> np.ndarray:
    d = len(nodes)
    if d < 3:
        raise ValueError("hyperedges join at least three tracklets")
    spans = sorted((t.start, t.end) for t in nodes)
    if any(b[0] <= a[1] for a, b in zip(spans, spans[1:])):
        raise ValueError("hyperedge members overlap in time")
    boxes = [b for t in nodes for b in t.detections]
    zeta = ctx.count_through(boxes)
    total_area = sum(b.area for b in boxes)
    return np.array([motion_sigmoid(d * zeta / total_area)])
