"""Conflict removal among searched structures, stitching and gap interpolation."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .model import Detection, NonUniformHypergraph, OverlapError, Tracklet, concat_tracklets


def resolve_conflicts(structures: Iterable, alpha_hat: int = 2) -> list[frozenset]:
    """Greedy disjointification by descending score.

    ``structures`` holds ``(support, theta)`` pairs or objects with ``support``/``theta``
    attributes. Nodes claimed by a better structure are removed from later ones;
    remainders smaller than ``alpha_hat`` are dropped. Ties go to the
    lexicographically smaller support.
    """
    items = []
    for s in structures:
        if hasattr(s, "support"):
            items.append((frozenset(s.support), float(s.theta)))
        else:
            items.append((frozenset(s[0]), float(s[1])))
    items.sort(key=lambda it: (-it[1], tuple(sorted(it[0]))))
    claimed: set = set()
    out = []
    for support, _ in items:
        rest = support - claimed
        if len(rest) < alpha_hat:
            continue
        out.append(frozenset(rest))
        claimed |= rest
    return out


def prune_incompatible(support: Iterable[int], G: NonUniformHypergraph, priority: dict | None = None) -> frozenset:
    """Drop members that co-occur in time with a better member of the same support.

    Members are ranked by ``priority`` (higher first), falling back to the summed
    pairwise affinity towards the rest of the support.
    """
    members = sorted(support)
    if priority is None:
        priority = {}
        for v in members:
            tot = 0.0
            for u in members:
                if u != v:
                    a = G.affinity((u, v))
                    tot += float(np.sum(a)) if a is not None else 0.0
            priority[v] = tot
    kept: list[int] = []
    for v in sorted(members, key=lambda v: (-priority.get(v, 0.0), v)):
        if all(G.compatible(v, u) for u in kept):
            kept.append(v)
    return frozenset(kept)


def stitch(support: Iterable, tracklets, node_id=None) -> Tracklet:
    """Concatenate the member tracklets in start-frame order.

    ``tracklets`` maps node id -> Tracklet (a sequence indexed by id also works).
    """
    members = [tracklets[v] for v in support]
    if not members:
        raise ValueError("empty support")
    members.sort(key=lambda t: (t.start, t.end))
    out = members[0]
    for t in members[1:]:
        if out.end >= t.start:
            raise OverlapError(f"members overlap in time at frame {t.start}; graph constraints were violated")
        out = concat_tracklets(out, t)
    return out if node_id is None else out.with_id(node_id)


def _lerp_detection(a: Detection, b: Detection, frame: int, det_id) -> Detection:
    r = (frame - a.frame) / (b.frame - a.frame)
    mix = lambda u, v: u + r * (v - u)
    return Detection(frame, mix(a.cx, b.cx), mix(a.cy, b.cy), mix(a.w, b.w), mix(a.h, b.h),
                     confidence=0.0, detection_id=det_id, interpolated=True)


def interpolate_gaps(t: Tracklet) -> Tracklet:
    out: list[Detection] = [t.detections[0]]
    for a, b in zip(t.detections, t.detections[1:]):
        for f in range(a.frame + 1, b.frame):
            out.append(_lerp_detection(a, b, f, ("interp", t.node_id, f)))
        out.append(b)
    return Tracklet(t.node_id, tuple(out))
