"""Enumerate constraint-satisfying edges/hyperedges and assemble the hypergraph."""
from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Sequence

import numpy as np

from .affinity import MotionContext, edge_affinity, hyperedge_affinity, self_loop_affinity
from .config import BuildConfig
from .model import Detection, NonUniformHypergraph, Tracklet

log = logging.getLogger(__name__)


def estimate_max_velocity(detections: Sequence[Detection]) -> float:
    """Twice the 95th percentile of displacement between mutual nearest neighbours in consecutive frames."""
    by_frame: dict[int, list[Detection]] = {}
    for d in detections:
        by_frame.setdefault(d.frame, []).append(d)
    disp = []
    for f, cur in by_frame.items():
        prev = by_frame.get(f - 1)
        if not prev:
            continue
        p = np.array([[d.cx, d.cy] for d in prev])
        c = np.array([[d.cx, d.cy] for d in cur])
        D = np.hypot(c[:, None, 0] - p[None, :, 0], c[:, None, 1] - p[None, :, 1])
        fwd, back = D.argmin(axis=1), D.argmin(axis=0)
        disp.extend(D[i, fwd[i]] for i in range(len(cur)) if back[fwd[i]] == i)
    sizes = [max(d.w, d.h) for d in detections]
    floor = 0.25 * float(np.median(sizes)) if sizes else 1.0
    if not disp:
        return max(floor, 1.0)
    return max(2.0 * float(np.percentile(disp, 95)), floor, 1e-3)


def resolve_build_config(cfg: BuildConfig, detections: Sequence[Detection], tau: int) -> BuildConfig:
    """Fill data-dependent defaults (velocity bound, frame gap)."""
    out = cfg
    if out.max_velocity is None:
        out = replace(out, max_velocity=estimate_max_velocity(detections))
    if out.max_frame_gap is None:
        out = replace(out, max_frame_gap=tau)
    return out


def _order(a: Tracklet, b: Tracklet) -> tuple[Tracklet, Tracklet]:
    return (a, b) if a.start <= b.start else (b, a)


def admissible_pair(vi: Tracklet, vj: Tracklet, cfg: BuildConfig) -> bool:
    if cfg.max_velocity is None or cfg.max_frame_gap is None:
        raise ValueError("admissible_pair needs a resolved BuildConfig (velocity and frame gap set)")
    if vi.overlaps(vj):
        return False
    early, late = _order(vi, vj)
    gap = late.start - early.end
    if gap > cfg.max_frame_gap:
        return False
    dist = math.hypot(late.first.cx - early.last.cx, late.first.cy - early.last.cy)
    return dist <= cfg.max_velocity * gap


def _strip_embeddings(tracklets: Sequence[Tracklet]) -> list[Tracklet]:
    # sequence-wide rule: one missing embedding neutralises the channel everywhere
    dets = [d for t in tracklets for d in t.detections]
    if all(d.embedding is not None for d in dets) or all(d.embedding is None for d in dets):
        return list(tracklets)
    return [Tracklet(t.node_id, tuple(replace(d, embedding=None) for d in t.detections)) for t in tracklets]


def successor_lists(tracklets: Sequence[Tracklet], cfg: BuildConfig) -> list[list[int]]:
    """Each node's admissible later nodes, kNN-capped, ordered by (start frame, distance, index)."""
    succ = []
    for i, a in enumerate(tracklets):
        cands = []
        for j, b in enumerate(tracklets):
            if j == i or b.start <= a.end or not admissible_pair(a, b, cfg):
                continue
            dist = math.hypot(b.first.cx - a.last.cx, b.first.cy - a.last.cy)
            cands.append((dist, b.start, j))
        cands.sort()
        if cfg.knn_k is not None:
            cands = cands[:cfg.knn_k]
        cands.sort(key=lambda c: (c[1], c[0], c[2]))
        succ.append([j for _, _, j in cands])
    return succ


def build_hypergraph(tracklets: Sequence[Tracklet], ctx: MotionContext, cfg: BuildConfig) -> NonUniformHypergraph:
    """Nodes are renumbered ``0..n-1`` in input order; ``G.tracklets[i]`` keeps the source tracklet data."""
    tracklets = _strip_embeddings(tracklets)
    ids = [t.node_id for t in tracklets]
    if len(set(ids)) != len(ids):
        raise ValueError("tracklet node ids must be distinct")
    nodes = [t.with_id(i) for i, t in enumerate(tracklets)]
    G = NonUniformHypergraph(len(nodes), cfg.max_degree, tracklets=nodes)
    if not nodes:
        return G
    for i, t in enumerate(nodes):
        G.add_edge((i,), self_loop_affinity(t))

    succ = successor_lists(nodes, cfg)

    def keep(a):
        return np.any(a > cfg.prune_eps)

    for i, js in enumerate(succ):
        for j in js:
            a = edge_affinity(nodes[i], nodes[j], ctx)
            if keep(a):
                G.add_edge((i, j), a)

    if cfg.max_degree >= 3:
        cap = cfg.max_hyperedges_per_node if cfg.max_hyperedges_per_node is not None else math.inf
        for anchor in range(len(nodes)):
            count = 0
            stack = [[anchor]]
            # iterative DFS; reversed push keeps (frame, distance) order on pop
            while stack and count < cap:
                chain = stack.pop()
                if len(chain) >= 3:
                    a = hyperedge_affinity([nodes[v] for v in chain], ctx)
                    count += 1
                    if keep(a):
                        G.add_edge(chain, a)
                if len(chain) == cfg.max_degree:
                    continue
                ext = [j for j in succ[chain[-1]]
                       if all(admissible_pair(nodes[c], nodes[j], cfg) for c in chain[:-1])]
                for j in reversed(ext):
                    stack.append(chain + [j])
    log.debug("hypergraph: n=%d %s", G.n, {d: G.num_edges(d) for d in G.edges})
    return G
