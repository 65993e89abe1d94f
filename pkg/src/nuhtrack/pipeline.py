"""Near-online tracking: per-window hypergraph search, then target/tracklet association."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .affinity import MotionContext, edge_affinity
from .config import BuildConfig, Config
from .dense_search import search_all
from .graph_builder import admissible_pair, build_hypergraph, resolve_build_config
from .model import (Detection, NonUniformHypergraph, Tracklet, concat_tracklets, merge_tracklets,
                    tracklet_from_detection)
from .postprocess import interpolate_gaps, prune_incompatible, resolve_conflicts, stitch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Target:
    label: int
    track: Tracklet
    misses: int = 0


@dataclass(frozen=True)
class TrackState:
    t: int = 0
    tau: int = 7
    targets: tuple[Target, ...] = ()
    finished: tuple[Target, ...] = ()
    next_label: int = 1
    nonconverged: int = 0

    def __post_init__(self):
        if self.tau < 2:
            raise ValueError("tau must be >= 2")


@dataclass
class WindowStats:
    t: int
    detections: int
    short_tracklets: int
    graph: NonUniformHypergraph | None = None
    association: NonUniformHypergraph | None = None


def short_tracklets(dets: Sequence[Detection], ctx: MotionContext, cfg: Config, build: BuildConfig,
                    stats: WindowStats | None = None) -> tuple[list[Tracklet], list[Tracklet], int]:
    """Window-level dense search; returns (stitched tracklets, leftover singletons, non-converged runs)."""
    order = sorted(dets, key=lambda d: (d.frame, d.cx, d.cy))
    nodes = [tracklet_from_detection(d, node_id=i) for i, d in enumerate(order)]
    G = build_hypergraph(nodes, ctx, build)
    if stats is not None:
        stats.graph = G
    sc = cfg.search
    structs = search_all(G, cfg.weight_vector(), sc.alpha_hat, sc.tol, sc.eps_part, sc.iter_factor,
                         threads=sc.threads)
    bad = sum(not s.converged for s in structs)
    cleaned = [(prune_incompatible(s.support, G), s.theta) for s in structs]
    supports = resolve_conflicts(cleaned, sc.alpha_hat)
    used = set().union(*supports) if supports else set()
    out = [stitch(sorted(s), G.tracklets) for s in supports]
    leftovers = [G.tracklets[v] for v in range(G.n) if v not in used]
    return out, leftovers, bad


def _association_graph(targets: Sequence[Target], pieces: Sequence[Tracklet], ctx: MotionContext,
                       assoc: BuildConfig) -> NonUniformHypergraph:
    nodes = [t.track for t in targets] + list(pieces)
    G = NonUniformHypergraph(len(nodes), 2, tracklets=[n.with_id(i) for i, n in enumerate(nodes)])
    for i, n in enumerate(nodes):
        G.add_edge((i,), [n.score])
    nt = len(targets)
    for i, tgt in enumerate(targets):
        for j, piece in enumerate(pieces):
            if tgt.track.end < piece.start and admissible_pair(tgt.track, piece, assoc):
                G.add_edge((i, nt + j), edge_affinity(tgt.track, piece, ctx))
    return G


def associate(targets: Sequence[Target], pieces: Sequence[Tracklet], ctx: MotionContext, cfg: Config,
              assoc: BuildConfig) -> tuple[dict[int, list[int]], int]:
    """Dense search on the bipartite target/tracklet graph.

    Returns ``{target index: [piece indices]}`` and the count of non-converged runs.
    A structure holding several targets is given to the target with the largest
    summed affinity to its tracklets.
    """
    if not targets or not pieces:
        return {}, 0
    G = _association_graph(targets, pieces, ctx, assoc)
    lam = cfg.weight_vector().truncated(2)
    sc = cfg.search
    structs = search_all(G, lam, sc.alpha_hat, sc.tol, sc.eps_part, sc.iter_factor, threads=sc.threads)
    bad = sum(not s.converged for s in structs)
    nt = len(targets)
    out: dict[int, list[int]] = {}
    for support in resolve_conflicts(structs, sc.alpha_hat):
        tg = [v for v in support if v < nt]
        pc = [v for v in support if v >= nt]
        if not tg or not pc:
            continue

        def strength(i):
            return sum(float(np.dot(lam[2], G.affinity((i, j)))) for j in pc if G.affinity((i, j)) is not None)

        owner = max(sorted(tg), key=strength)
        linked = [j for j in pc if G.affinity((owner, j)) is not None]
        prio = {j: float(np.dot(lam[2], G.affinity((owner, j)))) for j in linked}
        keep = prune_incompatible(linked, G, prio)
        if keep:
            out[owner] = sorted(j - nt for j in keep)
    return out, bad


def _extend(track: Tracklet, pieces: Sequence[Tracklet]) -> Tracklet:
    tail = pieces[0]
    for p in pieces[1:]:
        tail = merge_tracklets(tail, p)
    return concat_tracklets(track, tail)


def process_window(state: TrackState, detections: Sequence[Detection], ctx: MotionContext, cfg: Config,
                   build: BuildConfig | None = None, stats: WindowStats | None = None) -> TrackState:
    """Track one window ``[state.t, state.t + tau)`` and advance time by tau."""
    tau = state.tau
    lo, hi = state.t, state.t + tau
    window = [d for d in detections if lo <= d.frame < hi]
    if build is None:
        build = resolve_build_config(cfg.build, detections, tau)
    if not window:
        return _age(replace(state, t=hi), set(), cfg)

    pieces, leftovers, bad = short_tracklets(window, ctx, cfg, build, stats)
    if stats is not None:
        stats.short_tracklets = len(pieces)
    assoc = replace(build, max_frame_gap=tau * (cfg.patience + 1))
    targets = list(state.targets)
    gained: dict[int, list[Tracklet]] = {}
    pool: list[Tracklet] = []
    # rounds link against the pre-window tails and accumulate pieces with disjoint frames;
    # stitched pieces go first, leftovers may then extend a target but never start one
    for extra in ([p.with_id(("piece", k)) for k, p in enumerate(pieces)],
                  [p.with_id(("left", k)) for k, p in enumerate(leftovers)]):
        pool += extra
        for _ in range(max(cfg.track.association_rounds, 1)):
            if not pool:
                break
            links, b = associate(targets, pool, ctx, cfg, assoc)
            bad += b
            taken = set()
            for ti, pis in links.items():
                have = gained.setdefault(ti, [])
                for k in pis:
                    frames = set(pool[k].frames)
                    if not any(frames & set(h.frames) for h in have):
                        have.append(pool[k])
                        taken.add(k)
            if not taken:
                break
            pool = [p for k, p in enumerate(pool) if k not in taken]
    matched: set[int] = set()
    for ti, have in gained.items():
        if have:
            targets[ti] = replace(targets[ti], track=_extend(targets[ti].track, have), misses=0)
            matched.add(targets[ti].label)

    label = state.next_label
    for p in pool:
        if p.node_id[0] == "piece" and len(p) >= cfg.track.min_spawn_length:
            targets.append(Target(label, p.with_id(label)))
            matched.add(label)
            label += 1
    new = replace(state, t=hi, targets=tuple(targets), next_label=label,
                  nonconverged=state.nonconverged + bad)
    return _age(new, matched, cfg)


def _age(state: TrackState, matched: set[int], cfg: Config) -> TrackState:
    alive, done = [], list(state.finished)
    for tg in state.targets:
        if tg.label in matched:
            alive.append(tg)
            continue
        tg = replace(tg, misses=tg.misses + 1)
        (done if tg.misses > cfg.patience else alive).append(tg)
    return replace(state, targets=tuple(alive), finished=tuple(done))


@dataclass
class TrackingResult:
    trajectories: list[Tracklet]
    windows: int
    nonconverged: int
    build: BuildConfig
    stats: list[WindowStats] = field(default_factory=list)

    def rows(self) -> list[tuple[int, Detection]]:
        return [(t.node_id, d) for t in self.trajectories for d in t.detections]


def run_sequence(detections: Sequence[Detection], ctx: MotionContext | None, cfg: Config,
                 on_window: Callable[[int, list[Detection]], None] | None = None,
                 keep_graphs: bool = False, interpolate: bool = True) -> TrackingResult:
    """Fold :func:`process_window` over consecutive non-overlapping windows of length tau.

    Trajectories are labelled 1.. in creation order, gap-interpolated, and sorted by label.
    ``on_window(t, window_detections)`` observes exactly what each window sees.
    """
    ctx = ctx if ctx is not None else MotionContext()
    tau = cfg.track.tau
    build = resolve_build_config(cfg.build, detections, tau)
    state = TrackState(t=0, tau=tau)
    by_frame: dict[int, list[Detection]] = {}
    for d in detections:
        by_frame.setdefault(d.frame, []).append(d)
    last = max(by_frame) if by_frame else -1
    stats = []
    windows = 0
    while state.t <= last:
        window = [d for f in range(state.t, state.t + tau) for d in by_frame.get(f, [])]
        if on_window is not None:
            on_window(state.t, window)
        st = WindowStats(state.t, len(window), 0)
        state = process_window(state, window, ctx, cfg, build, st)
        if not keep_graphs:
            st.graph = st.association = None
        stats.append(st)
        windows += 1
    tracks = [t.track for t in state.finished + state.targets]
    tracks = sorted(tracks, key=lambda t: t.node_id)
    if interpolate:
        tracks = [interpolate_gaps(t) for t in tracks]
    if state.nonconverged:
        log.warning("%d dense-search runs hit the iteration cap", state.nonconverged)
    return TrackingResult(tracks, windows, state.nonconverged, build, stats)
