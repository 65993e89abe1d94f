"""Exhaustive reference solvers for tests and fixture derivation. Not tuned for speed."""
from __future__ import annotations

from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from .learn import TrainingInstance, violation
from .model import Labeling, NonUniformHypergraph, WeightVector

MAX_DENSE_NODES = 16
MAX_PARTITION_NODES = 8


def uniform_theta(G: NonUniformHypergraph, lam: WeightVector, support: Sequence[int]) -> float:
    """Objective at ``y_i = 1/|S|`` on ``S``, summed tuple by tuple."""
    S = set(support)
    m = len(S)
    if m == 0:
        return 0.0
    total = 0.0
    for d, edges in G.edges.items():
        if d > lam.max_degree:
            continue
        for t, a in edges.items():
            if S.issuperset(t):
                total += float(np.dot(lam[d], a)) / m ** d
    return total


def brute_force_dense(G: NonUniformHypergraph, lam: WeightVector, alpha_hat: int = 2):
    """Best support of size >= alpha_hat under the uniform indicator; ``(frozenset(), None)`` if none."""
    n = G.n
    if n > MAX_DENSE_NODES:
        raise ValueError(f"brute force limited to {MAX_DENSE_NODES} nodes, got {n}")
    if n < alpha_hat:
        return frozenset(), None
    masks = np.arange(1 << n, dtype=np.int64)
    sizes = np.array([bin(m).count("1") for m in range(1 << n)])
    scores = np.zeros(1 << n)
    for d, edges in G.edges.items():
        if d > lam.max_degree or not edges:
            continue
        for t, a in edges.items():
            tm = sum(1 << v for v in t)
            inside = (masks & tm) == tm
            scores[inside] += float(np.dot(lam[d], a)) / sizes[inside].astype(float) ** d
    best_key = None
    for m in range(1 << n):
        if sizes[m] < alpha_hat:
            continue
        members = tuple(v for v in range(n) if m >> v & 1)
        key = (-scores[m], members)
        if best_key is None or key < best_key:
            best_key = key
    return frozenset(best_key[1]), float(-best_key[0])


def set_partitions(items: Sequence) -> Iterator[list[list]]:
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def brute_force_partitions(G: NonUniformHypergraph, lam: WeightVector, inst: TrainingInstance):
    """Most-violated labeling over all set partitions whose blocks are time-compatible.

    Returns ``(labeling, violation)``.
    """
    if G.n > MAX_PARTITION_NODES:
        raise ValueError(f"partition enumeration limited to {MAX_PARTITION_NODES} nodes, got {G.n}")
    lam_flat = lam.flatten()
    cache: dict = {}
    best, best_v = None, -np.inf
    for part in set_partitions(range(G.n)):
        if any(not G.compatible(u, v) for block in part for u, v in combinations(block, 2)):
            continue
        Y = Labeling.from_clusters(part)
        v = violation(lam_flat, Y, inst, cache=cache)
        if v > best_v:
            best, best_v = Y, v
    return best, best_v


def uniform_pairwise_update(G: NonUniformHypergraph, weight: float, degree: int, v_s: int, alpha_hat: int = 2,
                            tol: float = 1e-7, eps_part: float = 1e-9, iter_factor: int = 50, tie: float = 1e-12):
    """Pairwise ascent on a d-uniform hypergraph using a dense symmetric affinity tensor.

    Written independently of the tuple-list optimizer and used to check that
    zeroing every other degree reduces the general method to the uniform one.
    Rewards within ``tie`` (relative) are equal; among tied candidates the pair
    with the largest gain is taken, then the smaller indices.
    Returns ``(steps, y, nodes)`` with steps as ``(p, q, eta)`` in global ids.
    """
    from math import factorial

    nodes = sorted(G.neighborhood(v_s) | {v_s})
    pos = {v: k for k, v in enumerate(nodes)}
    n = len(nodes)
    T = np.zeros((n,) * degree)
    for t, a in G.edges.get(degree, {}).items():
        if all(v in pos for v in t):
            loc = [pos[v] for v in t]
            val = weight * float(np.sum(a))
            for perm in _perms(loc):
                T[perm] = val
    cap = 1.0 / alpha_hat
    s = pos[v_s]
    y = np.full(n, 1.0 / n)

    def contract(k):
        # contract T against y on all but the first k axes
        out = T
        for _ in range(degree - k):
            out = out @ y
        return out

    def rewards():
        return contract(1) / factorial(degree - 1)

    def curvature(p, q):
        return -contract(2)[p, q] / factorial(degree - 2)

    steps = []
    if n < alpha_hat:
        return steps, y, nodes
    for _ in range(iter_factor * max(n - 1, 1)):
        phi = rewards()
        up = [i for i in range(n) if y[i] < cap - eps_part]
        down = [i for i in range(n) if y[i] > eps_part and i != s]
        if not up or not down:
            break
        top = max(phi[i] for i in up)
        bot = min(phi[i] for i in down)
        P = [i for i in up if phi[i] >= top - tie * (1.0 + abs(top))]
        Q = [i for i in down if phi[i] <= bot + tie * (1.0 + abs(bot))]
        best = None
        for p in P:
            for q in Q:
                if p == q:
                    continue
                c = curvature(p, q)
                options = [(y[q], "q"), (cap - y[p], "p")]
                if c < 0:
                    options.append(((phi[q] - phi[p]) / (2 * c), "interior"))
                eta, kind = min(options, key=lambda o: o[0])
                gain = c * eta * eta + (phi[p] - phi[q]) * eta
                if best is None or gain > best[0] + tie * (1.0 + abs(best[0])):
                    best = (gain, p, q, eta, kind)
        if best is None:
            break
        _, p, q, eta, kind = best
        if not phi[p] > phi[q] + tol:
            break
        if kind == "q":
            y[p], y[q] = y[p] + y[q], 0.0
        elif kind == "p":
            y[q], y[p] = y[q] - (cap - y[p]), cap
        else:
            y[p], y[q] = y[p] + eta, y[q] - eta
        steps.append((nodes[p], nodes[q], float(eta)))
    return steps, y, nodes


def _perms(loc):
    from itertools import permutations
    return set(permutations(loc))
