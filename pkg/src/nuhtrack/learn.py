"""Structured-SVM learning of per-degree weights with an n-slack cutting-plane loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize

from .affinity import MotionContext
from .config import Config
from .dense_search import search_all
from .graph_builder import build_hypergraph, resolve_build_config
from .metrics import match_frame
from .model import Detection, Labeling, NonUniformHypergraph, WeightVector, tracklet_from_detection
from .postprocess import prune_incompatible, resolve_conflicts

log = logging.getLogger(__name__)


@dataclass
class TrainingInstance:
    graph: NonUniformHypergraph
    truth: Labeling  # keys are graph node ids
    loss_weights: dict[int, float] | None = None
    name: str = ""

    def __post_init__(self):
        missing = set(range(self.graph.n)) - set(self.truth.assignments)
        if missing:
            raise ValueError(f"ground truth misses nodes {sorted(missing)[:5]}")

    def weight(self, v) -> float:
        return 1.0 if self.loss_weights is None else float(self.loss_weights.get(v, 1.0))


def _layout(G: NonUniformHypergraph) -> list[tuple[int, int]]:
    return [(d, G.arity[d]) for d in range(1, G.max_degree + 1)]


def feature_length(G: NonUniformHypergraph) -> int:
    return sum(k for _, k in _layout(G))


def cluster_features(cluster, G: NonUniformHypergraph) -> np.ndarray:
    """Per-degree/channel affinity mass inside one cluster at the uniform indicator."""
    members = set(cluster)
    m = len(members)
    offsets, k = {}, 0
    for d, a in _layout(G):
        offsets[d] = k
        k += a
    out = np.zeros(k)
    if m == 0:
        return out
    seen = set()
    for v in members:
        for t in G.incident(v):
            if t in seen or not members.issuperset(t):
                continue
            seen.add(t)
            d = len(t)
            out[offsets[d]:offsets[d] + G.arity[d]] += G.edges[d][t] / m ** d
    return out


def feature_map(Y: Labeling, G: NonUniformHypergraph, cache: dict | None = None) -> np.ndarray:
    """Joint feature vector; its dot product with the flattened weights equals the summed objective."""
    total = np.zeros(feature_length(G))
    for c in Y.clusters():
        if cache is not None:
            f = cache.get(c)
            if f is None:
                f = cache[c] = cluster_features(c, G)
        else:
            f = cluster_features(c, G)
        total += f
    return total


def hamming_loss(Y: Labeling, Y_star: Labeling, weights: dict | None = None) -> float:
    """Weighted count of nodes whose cluster is not matched to their true cluster.

    Clusters are put in correspondence by a maximum-overlap one-to-one assignment,
    so the loss ignores label permutations and is symmetric in its arguments.
    """
    keys = set(Y.assignments) | set(Y_star.assignments)
    w = {k: (1.0 if weights is None else float(weights.get(k, 1.0))) for k in keys}
    a_cl, b_cl = Y.clusters(), Y_star.clusters()
    correct = sum(w[k] for k in keys if Y.assignments.get(k) is None and Y_star.assignments.get(k) is None)
    if a_cl and b_cl:
        a_idx = {k: i for i, c in enumerate(a_cl) for k in c}
        b_idx = {k: i for i, c in enumerate(b_cl) for k in c}
        M = np.zeros((len(a_cl), len(b_cl)))
        for k in keys:
            if k in a_idx and k in b_idx:
                M[a_idx[k], b_idx[k]] += w[k]
        r, c = linear_sum_assignment(M, maximize=True)
        correct += M[r, c].sum()
    return float(sum(w.values()) - correct)


def violation(lam_flat, Y: Labeling, inst: TrainingInstance, s_star=None, cache=None) -> float:
    G = inst.graph
    if s_star is None:
        s_star = feature_map(inst.truth, G, cache)
    lw = inst.loss_weights
    return float(np.dot(lam_flat, feature_map(Y, G, cache) - s_star) + hamming_loss(Y, inst.truth, lw))


def _with_singletons(clusters, n) -> Labeling:
    covered = set().union(*clusters) if clusters else set()
    full = list(clusters) + [{v} for v in range(n) if v not in covered]
    return Labeling.from_clusters(full)


def _refine(clusters: list[frozenset], score: Callable[[list[frozenset]], float], G: NonUniformHypergraph,
            max_passes: int = 50) -> tuple[list[frozenset], float]:
    """Best-improvement local search over single-node moves and cluster merges."""
    clusters = [frozenset(c) for c in clusters]
    cur = score(clusters)
    for _ in range(max_passes):
        best = (cur, None)
        for ci, c in enumerate(clusters):
            for v in sorted(c):
                for cj in range(len(clusters) + 1):
                    if cj == ci or (cj == len(clusters) and len(c) == 1):
                        continue
                    if cj < len(clusters) and not all(G.compatible(v, u) for u in clusters[cj]):
                        continue
                    trial = list(clusters)
                    trial[ci] = c - {v}
                    if cj == len(clusters):
                        trial.append(frozenset((v,)))
                    else:
                        trial[cj] = clusters[cj] | {v}
                    trial = [x for x in trial if x]
                    s = score(trial)
                    if s > best[0] + 1e-12:
                        best = (s, trial)
        for ci in range(len(clusters)):
            for cj in range(ci + 1, len(clusters)):
                if not all(G.compatible(u, v) for u in clusters[ci] for v in clusters[cj]):
                    continue
                trial = [x for k, x in enumerate(clusters) if k not in (ci, cj)] + [clusters[ci] | clusters[cj]]
                s = score(trial)
                if s > best[0] + 1e-12:
                    best = (s, trial)
        if best[1] is None:
            break
        cur, clusters = best
    return clusters, cur


def _cluster_scorer(lam_flat, inst: TrainingInstance, cache: dict):
    """Violation of a full clustering of the graph nodes, with per-cluster objective values cached."""
    G = inst.graph
    base = float(np.dot(lam_flat, feature_map(inst.truth, G, cache)))
    truth = inst.truth.clusters()
    t_idx = {k: i for i, c in enumerate(truth) for k in c}
    weight = {v: inst.weight(v) for v in range(G.n)}
    total_w = sum(weight.values())
    vals: dict = {}

    def value(c):
        x = vals.get(c)
        if x is None:
            f = cache.get(c)
            if f is None:
                f = cache[c] = cluster_features(c, G)
            x = vals[c] = float(np.dot(lam_flat, f))
        return x

    def score(clusters):
        M = np.zeros((len(clusters), len(truth)))
        for i, c in enumerate(clusters):
            for v in c:
                j = t_idx.get(v)
                if j is not None:
                    M[i, j] += weight[v]
        r, c = linear_sum_assignment(M, maximize=True)
        loss = total_w - float(M[r, c].sum())
        return sum(value(c) for c in clusters) - base + loss

    return score


def separation_oracle(lam: WeightVector, inst: TrainingInstance, alpha_hat: int = 2, refine: bool = True,
                      cache: dict | None = None) -> Labeling:
    """Approximate most-violated labeling ``argmax_Y lam.S(Y) + loss(Y, Y*)``.

    Candidates come from loss-augmented dense search (each node's self-loop term
    gets its loss weight as a bias), plain dense search, all-singletons and the
    ground truth; each is then polished by exact local search on the violation.
    """
    G = inst.graph
    cache = {} if cache is None else cache
    if set(inst.truth.assignments) != set(range(G.n)) or None in inst.truth.assignments.values():
        raise ValueError("separation needs a ground truth that labels every graph node")
    score = _cluster_scorer(lam.flatten(), inst, cache)

    cands = [inst.truth, _with_singletons([], G.n)]
    for unary in ({v: inst.weight(v) for v in range(G.n)}, None):
        structs = search_all(G, lam, alpha_hat, unary=unary)
        structs = [(prune_incompatible(s.support, G), s.theta) for s in structs]
        cands.append(_with_singletons([set(c) for c in resolve_conflicts(structs, alpha_hat)], G.n))
    best, best_score = None, -np.inf
    seen = set()
    for Y in cands:
        if Y.canonical() in seen:
            continue
        seen.add(Y.canonical())
        if refine:
            cl, s = _refine(Y.clusters(), score, G)
        else:
            cl, s = Y.clusters(), score(Y.clusters())
        if s > best_score + 1e-12:
            best, best_score = cl, s
    return Labeling.from_clusters(best)


def _project_capped_simplex(v: np.ndarray, C: float) -> np.ndarray:
    """Euclidean projection onto ``{a >= 0, sum(a) <= C}``."""
    w = np.maximum(v, 0.0)
    if w.sum() <= C:
        return w
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - C
    ks = np.arange(1, len(u) + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


@dataclass
class QPResult:
    weights: np.ndarray
    slacks: np.ndarray
    alpha: np.ndarray
    gap: float
    iterations: int


def primal_objective(lam, groups, gs, deltas, C, n_groups) -> tuple[float, np.ndarray]:
    xi = np.zeros(n_groups)
    if len(deltas):
        margins = deltas - gs @ lam
        for j in range(n_groups):
            m = margins[groups == j]
            xi[j] = max(0.0, m.max()) if len(m) else 0.0
    return 0.5 * float(lam @ lam) + C * float(xi.sum()), xi


def solve_qp(gs: np.ndarray, deltas: np.ndarray, groups: np.ndarray, n_groups: int, C: float,
             tol: float = 1e-10, max_iter: int = 200000, dim: int | None = None, method: str = "primal",
             x0: np.ndarray | None = None) -> QPResult:
    """min 0.5|lam|^2 + C sum_j xi_j  s.t.  lam.g_k + xi_j >= delta_k for k in group j.

    ``method="primal"`` runs SLSQP on (lam, xi), which is small: one weight per
    affinity component plus one slack per instance. ``method="dual"`` runs
    accelerated projected gradient over per-group capped simplices and stops on
    the duality gap. The primal route falls back to the dual one if SLSQP fails.
    """
    gs = np.asarray(gs, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    groups = np.asarray(groups, dtype=int)
    m = len(deltas)
    if m == 0:
        lam = np.zeros(dim if dim is not None else 0)
        return QPResult(lam, np.zeros(n_groups), np.zeros(0), 0.0, 0)
    if method == "primal":
        res = _solve_primal(gs, deltas, groups, n_groups, C, x0)
        if res is not None:
            return res
        log.warning("SLSQP failed on the working-set QP; using the dual solver")
    elif method != "dual":
        raise ValueError(f"unknown QP method {method!r}")
    return _solve_dual(gs, deltas, groups, n_groups, C, tol, max_iter)


def _solve_primal(gs, deltas, groups, n_groups, C, x0=None) -> QPResult | None:
    m, dim = gs.shape
    A = np.zeros((m, dim + n_groups))
    A[:, :dim] = gs
    A[np.arange(m), dim + groups] = 1.0
    lam0 = np.zeros(dim) if x0 is None else np.asarray(x0, dtype=float)
    _, xi0 = primal_objective(lam0, groups, gs, deltas, C, n_groups)
    cvec = np.concatenate([np.zeros(dim), np.full(n_groups, C)])

    def f(x):
        return 0.5 * float(x[:dim] @ x[:dim]) + float(cvec @ x)

    def jac(x):
        return np.concatenate([x[:dim], np.zeros(n_groups)]) + cvec

    cons = {"type": "ineq", "fun": lambda x: A @ x - deltas, "jac": lambda x: A}
    bounds = [(None, None)] * dim + [(0.0, None)] * n_groups
    out = minimize(f, np.concatenate([lam0, xi0]), jac=jac, constraints=[cons], bounds=bounds,
                   method="SLSQP", options={"ftol": 1e-12, "maxiter": 1000})
    if not out.success:
        return None
    lam = out.x[:dim]
    _, xi = primal_objective(lam, groups, gs, deltas, C, n_groups)
    return QPResult(lam, xi, np.zeros(0), float("nan"), int(out.nit))


def _solve_dual(gs, deltas, groups, n_groups, C, tol, max_iter) -> QPResult:
    m = len(deltas)
    K = gs @ gs.T
    L = max(np.linalg.eigvalsh(K).max(), 1e-12)
    members = [np.flatnonzero(groups == j) for j in range(n_groups)]

    def project(a):
        out = np.empty_like(a)
        for idx in members:
            if len(idx):
                out[idx] = _project_capped_simplex(a[idx], C)
        return out

    def gap_of(a):
        lam = gs.T @ a
        prim, _ = primal_objective(lam, groups, gs, deltas, C, n_groups)
        return prim - (float(a @ deltas) - 0.5 * float(lam @ lam)), prim

    alpha = np.zeros(m)
    z, t = alpha.copy(), 1.0
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = deltas - K @ z
        nxt = project(z + grad / L)
        t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
        # adaptive restart keeps the ascent monotone
        if np.dot(nxt - alpha, grad) < 0:
            z, t = alpha.copy(), 1.0
            continue
        z = nxt + ((t - 1) / t_next) * (nxt - alpha)
        alpha, t = nxt, t_next
        if it % 20 == 0 or it == max_iter:
            gap, prim = gap_of(alpha)
            if gap <= tol * max(1.0, abs(prim)):
                break
            # exact solve on the face the iterate has settled on; the gap decides whether to keep it
            cand = _polish_face(alpha, K, deltas, members, C)
            if cand is not None:
                cand = project(cand)
                cgap, cprim = gap_of(cand)
                if cgap < gap:
                    alpha, gap, prim = cand, cgap, cprim
                    z, t = alpha.copy(), 1.0
                    if gap <= tol * max(1.0, abs(prim)):
                        break
    lam = gs.T @ alpha
    _, xi = primal_objective(lam, groups, gs, deltas, C, n_groups)
    return QPResult(lam, xi, alpha, float(gap), it)


def _polish_face(alpha, K, deltas, members, C) -> np.ndarray | None:
    """Stationary point of the dual restricted to the support and cap pattern of ``alpha``.

    On the face, constraints with positive multipliers are tight: ``K_S a_S + xi_j = delta_S``,
    where ``xi_j`` is free for groups whose multipliers sum to ``C`` and zero otherwise.
    """
    S = np.flatnonzero(alpha > 0)
    if len(S) == 0:
        return None
    pos = {k: i for i, k in enumerate(S)}
    capped = [idx for idx in members if len(idx) and abs(alpha[idx].sum() - C) <= 1e-9 * max(C, 1.0)]
    ns, nc = len(S), len(capped)
    A = np.zeros((ns + nc, ns + nc))
    b = np.zeros(ns + nc)
    A[:ns, :ns] = K[np.ix_(S, S)]
    b[:ns] = deltas[S]
    for c, idx in enumerate(capped):
        rows = [pos[k] for k in idx if k in pos]
        A[rows, ns + c] = 1.0
        A[ns + c, rows] = 1.0
        b[ns + c] = C
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    out = np.zeros_like(alpha)
    out[S] = sol[:ns]
    return out


@dataclass
class TrainResult:
    weights: WeightVector
    slacks: np.ndarray
    rounds: int
    converged: bool
    working_set: list = field(default_factory=list)
    history: list = field(default_factory=list)  # (round, max violation, sum slack)


def train(instances: Sequence[TrainingInstance], C: float = 1.0, eps_stop: float = 1e-3, max_rounds: int = 200,
          alpha_hat: int = 2, oracle: Callable | None = None, callback: Callable | None = None) -> TrainResult:
    """Cutting-plane training; one slack per instance.

    ``oracle(lam, inst)`` defaults to :func:`separation_oracle`. ``callback`` receives
    ``(round, max_violation, sum_slack)`` after every round.
    """
    if not instances:
        raise ValueError("need at least one training instance")
    arity = instances[0].graph.arity
    if any(inst.graph.arity != arity for inst in instances):
        raise ValueError("all instances must share the same degree/arity layout")
    dim = sum(arity.values())
    oracle = oracle or (lambda lam, inst: separation_oracle(lam, inst, alpha_hat))
    s_star = [feature_map(inst.truth, inst.graph) for inst in instances]
    gs, deltas, groups = [], [], []
    lam = np.zeros(dim)
    xi = np.zeros(len(instances))
    history = []
    converged = False
    rnd = 0
    for rnd in range(1, max_rounds + 1):
        W = WeightVector.from_flat(lam, arity)
        added, worst = 0, 0.0
        for j, inst in enumerate(instances):
            Y = oracle(W, inst)
            g = s_star[j] - feature_map(Y, inst.graph)
            delta = hamming_loss(Y, inst.truth, inst.loss_weights)
            viol = delta - float(lam @ g)
            worst = max(worst, viol - xi[j])
            if viol > xi[j] + eps_stop:
                gs.append(g)
                deltas.append(delta)
                groups.append(j)
                added += 1
        history.append((rnd, worst, float(xi.sum())))
        if callback is not None:
            callback(rnd, worst, float(xi.sum()))
        log.info("round %d: added %d constraints, max violation %.6g, slack %.6g", rnd, added, worst, xi.sum())
        if added == 0:
            converged = True
            break
        res = solve_qp(np.array(gs), np.array(deltas), np.array(groups), len(instances), C, dim=dim, x0=lam)
        lam, xi = res.weights, res.slacks
    ws = list(zip(groups, gs, deltas))
    return TrainResult(WeightVector.from_flat(lam, arity), xi, rnd, converged, ws, history)


def instances_from_sequence(detections: Sequence[Detection], gt: Sequence[tuple[int, Detection]],
                            ctx: MotionContext, cfg: Config, name: str = "") -> list[TrainingInstance]:
    """Cut a sequence into clips and label GT-matched detections with their GT identity.

    ``gt`` holds ``(identity, box)`` pairs. A detection is a true detection when its
    IoU with a GT box in the same frame exceeds ``cfg.learn.gt_overlap``.
    """
    L = cfg.learn.clip_length
    dets_by_f: dict[int, list[Detection]] = {}
    gt_by_f: dict[int, list[tuple[int, Detection]]] = {}
    for d in detections:
        dets_by_f.setdefault(d.frame, []).append(d)
    for gid, b in gt:
        gt_by_f.setdefault(b.frame, []).append((gid, b))
    frames = sorted(set(dets_by_f) | set(gt_by_f))
    if not frames:
        return []
    build = resolve_build_config(cfg.build, detections, cfg.track.tau)
    out = []
    for c0 in range(frames[0], frames[-1] + 1, L):
        chosen: list[tuple[Detection, int]] = []
        for f in range(c0, c0 + L):
            ds, gs_ = dets_by_f.get(f, []), gt_by_f.get(f, [])
            if not ds or not gs_:
                continue
            for di, gi, _ in match_frame([g for _, g in gs_], ds, cfg.learn.gt_overlap, strict=True):
                chosen.append((ds[di], gs_[gi][0]))
        if len(chosen) < 2:
            continue
        chosen.sort(key=lambda p: (p[0].frame, p[0].cx, p[0].cy))
        tracklets = [tracklet_from_detection(d, node_id=i) for i, (d, _) in enumerate(chosen)]
        G = build_hypergraph(tracklets, ctx, build)
        ids = sorted({gid for _, gid in chosen})
        relabel = {gid: k + 1 for k, gid in enumerate(ids)}
        truth = Labeling({i: relabel[gid] for i, (_, gid) in enumerate(chosen)})
        out.append(TrainingInstance(G, truth, name=f"{name}[{c0}:{c0 + L}]"))
    return out
