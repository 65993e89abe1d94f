"""Shared fixtures and independent reference computations for the test suite."""
from __future__ import annotations

from itertools import combinations

import numpy as np

from nuhtrack.dense_search import IndicatorVector
from nuhtrack.model import Detection, Labeling, NonUniformHypergraph, Tracklet, WeightVector


def det(frame, cx=0.0, cy=0.0, w=10.0, h=10.0, conf=1.0, **kw) -> Detection:
    return Detection(frame, cx, cy, w, h, conf, **kw)


def track(node_id, frames, conf=1.0, x0=0.0, vx=0.0) -> Tracklet:
    return Tracklet(node_id, tuple(det(f, x0 + vx * f, 0.0, conf=conf) for f in frames))


def random_weights(rng, D=4, arity=None, low=0.1, high=2.0) -> WeightVector:
    arity = arity or {2: 3}
    return WeightVector([rng.uniform(low, high, arity.get(d, 1)) for d in range(1, D + 1)])


def random_graph(rng, n, D=4, density=0.4, arity=None, signed=False) -> NonUniformHypergraph:
    """Random hypergraph on ``n`` nodes; every node gets a self-loop, higher degrees are sampled."""
    G = NonUniformHypergraph(n, D, arity)
    lo = -1.0 if signed else 0.0
    for v in range(n):
        G.add_edge((v,), rng.uniform(lo, 1.0, G.arity[1]))
    for d in range(2, D + 1):
        tuples = list(combinations(range(n), d))
        if not tuples:
            continue
        k = max(1, int(density * min(len(tuples), 4 * n)))
        for i in rng.choice(len(tuples), size=min(k, len(tuples)), replace=False):
            G.add_edge(tuples[i], rng.uniform(lo, 1.0, G.arity[d]))
    return G


def random_feasible(rng, n, alpha_hat=2) -> np.ndarray:
    """A point of the capped simplex: uniform pulled towards a random Dirichlet draw."""
    u = np.full(n, 1.0 / n)
    z = rng.dirichlet(np.ones(n))
    cap = 1.0 / alpha_hat
    room = [(cap - u[i]) / (z[i] - u[i]) for i in range(n) if z[i] > u[i]]
    tmax = min([1.0] + room)
    return u + rng.uniform(0.0, tmax) * (z - u)


def naive_theta(G: NonUniformHypergraph, lam: WeightVector, y: dict) -> float:
    """Tuple-by-tuple objective over the nodes present in ``y``."""
    total = 0.0
    for d, edges in G.edges.items():
        if d > lam.max_degree:
            continue
        for t, a in edges.items():
            if all(v in y for v in t):
                total += float(np.dot(lam[d], a)) * float(np.prod([y[v] for v in t]))
    return total


def indicator(start, nodes, values, alpha_hat=2) -> IndicatorVector:
    return IndicatorVector(start, np.asarray(nodes), np.asarray(values, dtype=float), alpha_hat)


def planted_graph(rng, n, k, D=4, contrast=5.0):
    """``n`` nodes with one planted subset of size ``k``.

    Every tuple inside the planted subset gets affinity in [0.75, 1]; a random
    share of the other tuples gets affinity at most 0.75/contrast. Self-loops
    are uniform across nodes so only the structure separates the subset.
    """
    planted = frozenset(int(v) for v in rng.choice(n, size=k, replace=False))
    G = NonUniformHypergraph(n, D)
    high = (0.75, 1.0)
    low = (0.0, 0.75 / contrast)
    for v in range(n):
        G.add_edge((v,), [0.5])
    for d in range(2, D + 1):
        for t in combinations(range(n), d):
            if planted.issuperset(t):
                G.add_edge(t, rng.uniform(*high, G.arity[d]))
            elif rng.random() < 0.3:
                G.add_edge(t, rng.uniform(*low, G.arity[d]))
    return G, planted


def random_labeling(rng, n, k_max=4) -> Labeling:
    k = int(rng.integers(1, min(k_max, n) + 1))
    labels = rng.integers(0, k, size=n)
    groups: dict[int, list[int]] = {}
    for v, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(v)
    return Labeling.from_clusters(groups.values())


def small_instance(rng, n=None):
    """At most 8 detections over a few frames, built into a hypergraph with a random true labeling."""
    from nuhtrack.affinity import MotionContext
    from nuhtrack.config import BuildConfig
    from nuhtrack.graph_builder import build_hypergraph
    from nuhtrack.learn import TrainingInstance
    from nuhtrack.model import PointTrajectory, tracklet_from_detection

    n = n or int(rng.integers(4, 9))
    k = int(rng.integers(1, 4))
    owner = rng.integers(0, k, size=n)
    frames = np.zeros(n, dtype=int)
    for lab in range(k):
        idx = np.flatnonzero(owner == lab)
        frames[idx] = np.sort(rng.choice(8, size=len(idx), replace=False))
    order = np.lexsort((owner, frames))
    owner, frames = owner[order], frames[order]
    starts = rng.uniform(0, 200, size=(k, 2))
    vel = rng.uniform(-8, 8, size=(k, 2))
    dets, pts = [], []
    for v in range(n):
        c = starts[owner[v]] + vel[owner[v]] * frames[v] + rng.normal(0, 2, 2)
        dets.append(Detection(int(frames[v]), float(c[0]), float(c[1]), 20.0, 40.0,
                              float(rng.uniform(0.5, 1.0)), histogram=rng.dirichlet(np.ones(8)),
                              embedding=rng.normal(size=4)))
    for lab in range(k):
        for j in range(int(rng.integers(0, 30))):
            fs = np.arange(8)
            off = rng.uniform(-8, 8, 2)
            xy = starts[lab] + vel[lab] * fs[:, None] + off
            pts.append(PointTrajectory((lab, j), fs, xy[:, 0], xy[:, 1]))
    nodes = [tracklet_from_detection(d, node_id=v) for v, d in enumerate(dets)]
    G = build_hypergraph(nodes, MotionContext(pts), BuildConfig(max_velocity=40.0, max_frame_gap=8))
    groups: dict[int, list[int]] = {}
    for v, lab in enumerate(owner):
        groups.setdefault(int(lab), []).append(v)
    return TrainingInstance(G, Labeling.from_clusters(groups.values()))


def separable_instance(rng, n_clusters=None, D=2):
    """Clusters of 2-4 nodes; the degree-2 motion channel is high inside clusters, low across.

    Colour, embedding and self-loop channels are noise shared by both sides.
    """
    from nuhtrack.learn import TrainingInstance

    k = n_clusters or int(rng.integers(2, 4))
    sizes = rng.integers(2, 5, size=k)
    owner = np.repeat(np.arange(k), sizes)
    rng.shuffle(owner)
    n = len(owner)
    G = NonUniformHypergraph(n, D)
    for v in range(n):
        G.add_edge((v,), [rng.uniform(0.5, 1.0)])
    for i, j in combinations(range(n), 2):
        mot = rng.uniform(0.8, 1.0) if owner[i] == owner[j] else rng.uniform(0.0, 0.1)
        G.add_edge((i, j), [rng.uniform(0, 1), rng.uniform(0, 1), mot])
    groups: dict[int, list[int]] = {}
    for v, lab in enumerate(owner):
        groups.setdefault(int(lab), []).append(v)
    return TrainingInstance(G, Labeling.from_clusters(groups.values()))


def perturb(rng, Y: Labeling, n: int) -> Labeling:
    """Move one to three random nodes to another (possibly new) cluster."""
    while True:
        lab = {v: Y.assignments[v] for v in range(n)}
        for v in rng.choice(n, size=int(rng.integers(1, 4)), replace=False):
            lab[int(v)] = int(rng.integers(1, Y.k + 2))
        groups: dict[int, list[int]] = {}
        for v, l in lab.items():
            groups.setdefault(l, []).append(v)
        out = Labeling.from_clusters(groups.values())
        if out.canonical() != Y.canonical():
            return out


def theta_table(G: NonUniformHypergraph, lam: WeightVector, nodes):
    """Vectorised reference objective over ``nodes``: returns ``f(Y)`` for rows ``Y`` of indicator values."""
    pos = {v: k for k, v in enumerate(nodes)}
    blocks = []
    for d, edges in G.edges.items():
        if d > lam.max_degree:
            continue
        inside = [(t, a) for t, a in edges.items() if all(v in pos for v in t)]
        if inside:
            idx = np.array([[pos[v] for v in t] for t, _ in inside])
            w = np.array([float(np.dot(lam[d], a)) for _, a in inside])
            blocks.append((idx, w))

    def f(Y):
        Y = np.atleast_2d(Y)
        return sum(Y[:, idx].prod(axis=2) @ w for idx, w in blocks) if blocks else np.zeros(len(Y))
    return f
