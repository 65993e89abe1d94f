"""Pairwise-update search for dense structures on a non-uniform hypergraph.

For a start node ``s`` the objective is restricted to ``I = N(s) + {s}``::

    theta(y) = sum_d lambda_d . sum_{t in E_d, t subset I} A(t) prod_{i in t} y_i

with ``sum(y) = 1`` and ``0 <= y_i <= 1/alpha_hat``. Every tuple holds distinct
nodes, so ``theta`` is multilinear and moving mass ``eta`` from ``q`` to ``p``
changes it by exactly ``curv(p,q) eta^2 + (phi_p - phi_q) eta``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import NonUniformHypergraph, WeightVector

log = logging.getLogger(__name__)

FULL_RECOMPUTE_EVERY = 1000
TIE_EPS = 1e-12


@dataclass
class IndicatorVector:
    start_node: int
    nodes: np.ndarray  # global node ids, ascending
    values: np.ndarray
    alpha_hat: int = 2

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.nodes.shape != self.values.shape:
            raise ValueError("nodes/values length mismatch")

    def as_dict(self) -> dict[int, float]:
        return {int(v): float(y) for v, y in zip(self.nodes, self.values)}

    def is_feasible(self, tol: float = 1e-9) -> bool:
        cap = 1.0 / self.alpha_hat
        return (abs(self.values.sum() - 1.0) <= tol and bool(np.all(self.values >= -tol))
                and bool(np.all(self.values <= cap + tol)))


class LocalProblem:
    """The objective over a fixed node subset, flattened to scalar tuple weights.

    ``lin[i]`` holds the self-loop weight ``lambda_1 . A(i)`` (plus any unary bias);
    ``terms[d] = (idx, w)`` lists the degree-``d`` tuples in local indices.
    All multi-node tuples are also packed into one table padded with a dummy
    index ``n`` whose value is fixed at 1, so a step touches every degree at once.
    """

    def __init__(self, nodes: Sequence[int], lin: np.ndarray, terms: dict[int, tuple[np.ndarray, np.ndarray]]):
        self.nodes = np.asarray(nodes, dtype=np.int64)
        self.n = n = len(self.nodes)
        self.pos = {int(v): k for k, v in enumerate(self.nodes)}
        self.lin = np.asarray(lin, dtype=float)
        self.terms = {d: (idx, w) for d, (idx, w) in terms.items() if len(w)}
        self.nonneg = bool(np.all(self.lin >= 0)) and all(np.all(w >= 0) for _, w in self.terms.values())
        width = max(self.terms, default=2)
        blocks = [np.pad(idx, ((0, 0), (0, width - d)), constant_values=n) for d, (idx, _) in sorted(self.terms.items())]
        self.idx = np.concatenate(blocks) if blocks else np.zeros((0, width), dtype=np.int64)
        self.w = np.concatenate([w for _, (_, w) in sorted(self.terms.items())]) if blocks else np.zeros(0)
        # rows of the packed table touching each node
        buckets = [[] for _ in range(n + 1)]
        for r, row in enumerate(self.idx):
            for v in row:
                buckets[v].append(r)
        self.incidence = [np.asarray(b, dtype=np.int64) for b in buckets[:n]]

    def _ext(self, y: np.ndarray) -> np.ndarray:
        return np.concatenate((y, (1.0,)))

    def theta(self, y: np.ndarray) -> float:
        total = float(self.lin @ y)
        for idx, w in self.terms.values():
            total += float(w @ np.prod(y[idx], axis=1))
        return total

    @staticmethod
    def _others(vals: np.ndarray) -> np.ndarray:
        # product of the other members of each tuple, via prefix and suffix products
        out = np.ones_like(vals)
        out[..., 1:] = np.cumprod(vals[..., :-1], axis=-1)
        out[..., :-1] *= np.cumprod(vals[..., :0:-1], axis=-1)[..., ::-1]
        return out

    def rewards(self, y: np.ndarray) -> np.ndarray:
        phi = self.lin.copy()
        if len(self.w):
            contrib = self._others(self._ext(y)[self.idx]) * self.w[:, None]
            phi += np.bincount(self.idx.ravel(), weights=contrib.ravel(), minlength=self.n + 1)[:self.n]
        return phi

    def reward_delta(self, rows: np.ndarray, y_old: np.ndarray, y_new: np.ndarray) -> np.ndarray:
        """Change of all rewards when ``y_old`` becomes ``y_new``, given every row holding a changed node."""
        idx = self.idx[rows]
        vals = np.stack([self._ext(y_new)[idx], self._ext(y_old)[idx]])
        others = self._others(vals)
        contrib = (others[0] - others[1]) * self.w[rows][:, None]
        return np.bincount(idx.ravel(), weights=contrib.ravel(), minlength=self.n + 1)[:self.n]

    def pair_rows(self, p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows holding both ``p`` and ``q``, and rows holding either."""
        mp = np.zeros(len(self.w), dtype=bool)
        mq = mp.copy()
        mp[self.incidence[p]] = True
        mq[self.incidence[q]] = True
        return np.flatnonzero(mp & mq), np.flatnonzero(mp | mq)

    def curvature(self, p: int, q: int, y: np.ndarray, rows: tuple | None = None) -> float:
        """Quadratic coefficient of the objective change along ``e_p - e_q``."""
        both = (rows if rows is not None else self.pair_rows(p, q))[0]
        if len(both) == 0:
            return 0.0
        sub = self.idx[both]
        vals = np.where((sub == p) | (sub == q), 1.0, self._ext(y)[sub])
        return -float(self.w[both] @ np.prod(vals, axis=1))


def _check_arity(G: NonUniformHypergraph, lam: WeightVector):
    for d, edges in G.edges.items():
        if not edges:
            continue
        if d > lam.max_degree:
            raise ValueError(f"graph has degree-{d} edges but weights stop at degree {lam.max_degree}")
        if len(lam[d]) != G.arity[d]:
            raise ValueError(f"degree {d}: weight arity {len(lam[d])} != affinity arity {G.arity[d]}")


def compile_problem(G: NonUniformHypergraph, lam: WeightVector, nodes: Iterable[int],
                    unary: dict[int, float] | None = None) -> LocalProblem:
    _check_arity(G, lam)
    nodes = sorted({int(v) for v in nodes})
    pos = {v: k for k, v in enumerate(nodes)}
    lin = np.zeros(len(nodes))
    for v, k in pos.items():
        a = G.edges[1].get((v,))
        if a is not None:
            lin[k] = float(np.dot(lam[1], a))
        if unary:
            lin[k] += unary.get(v, 0.0)
    inside = pos.keys()
    found: dict[int, set] = {}
    for v in nodes:
        for t in G.incident(v):
            # each tuple is seen from its smallest member only
            if len(t) >= 2 and t[0] == v and inside >= set(t):
                found.setdefault(len(t), set()).add(t)
    terms = {}
    for d, tuples in found.items():
        ordered = sorted(tuples)
        idx = np.array([[pos[u] for u in t] for t in ordered], dtype=np.int64).reshape(len(ordered), d)
        w = np.array([G.edges[d][t] for t in ordered]) @ lam[d]
        terms[d] = (idx, w)
    return LocalProblem(nodes, lin, terms)


def _problem_for(y: IndicatorVector, G, lam) -> LocalProblem:
    return compile_problem(G, lam, y.nodes.tolist())


def _local_values(y: IndicatorVector, prob: LocalProblem) -> np.ndarray:
    vals = np.zeros(prob.n)
    for v, val in zip(y.nodes, y.values):
        vals[prob.pos[int(v)]] = val
    return vals


def objective(y: IndicatorVector, G: NonUniformHypergraph, lam: WeightVector) -> float:
    prob = _problem_for(y, G, lam)
    return prob.theta(_local_values(y, prob))


def reward(i: int, y: IndicatorVector, G: NonUniformHypergraph, lam: WeightVector) -> float:
    prob = _problem_for(y, G, lam)
    return float(prob.rewards(_local_values(y, prob))[prob.pos[i]])


def pair_curvature(p: int, q: int, y: IndicatorVector, G: NonUniformHypergraph, lam: WeightVector) -> float:
    if p == q:
        raise ValueError("pair curvature needs p != q")
    prob = _problem_for(y, G, lam)
    return prob.curvature(prob.pos[p], prob.pos[q], _local_values(y, prob))


def _step(yp, yq, phip, phiq, curv, cap) -> tuple[float, str]:
    cands = [(yq, "q"), (cap - yp, "p")]
    if curv < 0:
        cands.append(((phiq - phip) / (2.0 * curv), "interior"))
    eta, kind = min(cands, key=lambda c: c[0])
    return max(eta, 0.0), kind


def step_size(p, q, y, phi_p, phi_q, phi_pq, alpha_hat) -> float:
    """Transfer size moving mass from ``q`` to ``p`` (requires ``phi_p >= phi_q``).

    ``p``/``q`` index into the array ``y``.
    """
    if phi_p < phi_q:
        raise ValueError("step_size expects phi_p >= phi_q; swap p and q")
    y = np.asarray(y, dtype=float)
    return _step(y[p], y[q], phi_p, phi_q, phi_pq, 1.0 / alpha_hat)[0]


@dataclass
class Step:
    p: int  # global node receiving mass
    q: int  # global node giving mass
    eta: float
    branch: str  # "gain" or "tie"


@dataclass
class LocalMaximum:
    y: IndicatorVector
    theta: float
    converged: bool
    iterations: int
    degenerate: bool = False
    steps: list[Step] = field(default_factory=list)
    thetas: list[float] = field(default_factory=list)
    rewards: np.ndarray | None = None

    def support(self, eps_part: float = 1e-9) -> frozenset[int]:
        vals = self.y.values
        nnz = int(np.count_nonzero(vals > eps_part))
        out = {self.y.start_node}
        if nnz:
            thr = 1.0 / (2 * nnz)
            out.update(int(v) for v, val in zip(self.y.nodes, vals) if val >= thr)
        return frozenset(out)


def partitions(y: np.ndarray, alpha_hat: int, eps_part: float = 1e-9):
    cap = 1.0 / alpha_hat
    zero = y <= eps_part
    full = y >= cap - eps_part
    return zero, ~(zero | full), full


def kkt_certificate(phi: np.ndarray, y: np.ndarray, alpha_hat: int, start: int | None = None,
                    tol: float = 1e-6, eps_part: float = 1e-9) -> bool:
    """Check for a threshold ``a`` with phi <= a on zeros, == a on interior, >= a on capped nodes.

    The start node is exempt, as in the optimality conditions it is fixed in the structure.
    """
    zero, mid, full = partitions(y, alpha_hat, eps_part)
    keep = np.ones(len(y), dtype=bool)
    if start is not None:
        keep[start] = False
    lo = max([phi[zero & keep].max(initial=-np.inf), phi[mid & keep].max(initial=-np.inf)])
    hi = min([phi[full & keep].min(initial=np.inf), phi[mid & keep].min(initial=np.inf)])
    # need a with lo - tol <= a <= hi + tol, and interior spread within 2 tol of a
    if lo > hi + 2 * tol:
        return False
    if np.any(mid & keep):
        m = phi[mid & keep]
        return bool(m.max() - m.min() <= 2 * tol)
    return True


def maximize(prob: LocalProblem, s: int, alpha_hat: int, tol: float = 1e-7, eps_part: float = 1e-9,
             max_iter: int | None = None, record: bool = False) -> LocalMaximum:
    """Run the pairwise-update ascent on a compiled problem from local start index ``s``."""
    n = prob.n
    cap = 1.0 / alpha_hat
    if max_iter is None:
        max_iter = 50 * max(n - 1, 1)
    y = np.full(n, 1.0 / n)
    start_id = int(prob.nodes[s])
    if n < alpha_hat:
        iv = IndicatorVector(start_id, prob.nodes, y, alpha_hat)
        return LocalMaximum(iv, prob.theta(y), converged=False, iterations=0, degenerate=True)

    phi = prob.rewards(y)
    theta = prob.theta(y)
    steps, thetas = [], [theta]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        up = y < cap - eps_part
        down = y > eps_part
        down[s] = False
        if not up.any() or not down.any():
            converged = True
            break
        p, q = _pick(phi, up, down, prob, y, cap)
        if phi[p] > phi[q] + tol:
            branch = "gain"
        else:
            pair = None if prob.nonneg else _tie_pair(prob, y, phi, up, down, tol)
            if pair is None:
                converged = True
                break
            p, q = pair
            branch = "tie"
        rows = prob.pair_rows(p, q)
        curv = prob.curvature(p, q, y, rows)
        if branch == "gain":
            eta, kind = _step(y[p], y[q], phi[p], phi[q], curv, cap)
        else:
            eta, kind = _step(y[p], y[q], phi[p], phi[p], 0.0, cap)
        if eta <= 0.0:
            converged = True
            break
        y_old = y.copy()
        if kind == "q":
            y[p], y[q] = y[p] + y[q], 0.0
        elif kind == "p":
            y[q], y[p] = y[q] - (cap - y[p]), cap
        else:
            y[p], y[q] = y[p] + eta, y[q] - eta
        total = y.sum()
        if abs(total - 1.0) > 1e-9:
            y = np.clip(y / total, 0.0, cap)
            phi = prob.rewards(y)
        elif it % FULL_RECOMPUTE_EVERY == 0:
            phi = prob.rewards(y)
        else:
            phi += prob.reward_delta(rows[1], y_old, y)
        if record:
            steps.append(Step(int(prob.nodes[p]), int(prob.nodes[q]), float(eta), branch))
            theta = prob.theta(y)
            thetas.append(theta)
    else:
        log.debug("start %d hit the iteration cap (%d)", start_id, max_iter)

    phi = prob.rewards(y)
    iv = IndicatorVector(start_id, prob.nodes, y.copy(), alpha_hat)
    return LocalMaximum(iv, prob.theta(y), converged, it, steps=steps, thetas=thetas, rewards=phi)


def _pick(phi, up, down, prob: LocalProblem, y, cap) -> tuple[int, int]:
    """p = argmax reward over the raisable nodes, q = argmin over the lowerable ones.

    Rewards within TIE_EPS count as equal. An interior step leaves phi_p == phi_q,
    so ties are routine; among tied candidates the pair with the largest exact
    gain wins (then the smaller indices). Plain argmax/argmin would let rounding
    decide and tends to zigzag between two pairs sharing a node.
    """
    hi = np.where(up, phi, -np.inf)
    lo = np.where(down, phi, np.inf)
    top, bot = hi.max(), lo.min()
    P = np.flatnonzero(hi >= top - TIE_EPS * (1.0 + abs(top)))
    Q = np.flatnonzero(lo <= bot + TIE_EPS * (1.0 + abs(bot)))
    if len(P) == 1 and len(Q) == 1:
        return int(P[0]), int(Q[0])
    best = None
    for p in P:
        for q in Q:
            if p == q:
                continue
            curv = prob.curvature(int(p), int(q), y)
            eta, _ = _step(y[p], y[q], phi[p], phi[q], curv, cap)
            gain = curv * eta * eta + (phi[p] - phi[q]) * eta
            if best is None or gain > best[0] + TIE_EPS * (1.0 + abs(best[0])):
                best = (gain, int(p), int(q))
    return (best[1], best[2]) if best is not None else (int(P[0]), int(Q[0]))


def _tie_pair(prob: LocalProblem, y, phi, up, down, tol):
    for i in np.flatnonzero(up):
        for j in np.flatnonzero(down):
            if i == j or abs(phi[i] - phi[j]) > tol:
                continue
            if prob.curvature(int(i), int(j), y) > tol:
                return int(i), int(j)
    return None


def local_maximizer(G: NonUniformHypergraph, lam: WeightVector, v_s: int, alpha_hat: int = 2,
                    tol: float = 1e-7, eps_part: float = 1e-9, iter_factor: int = 50,
                    unary: dict[int, float] | None = None, record: bool = False) -> LocalMaximum:
    """Local maximizer of the relaxed dense-structure problem seeded at ``v_s``.

    Parameters
    ----------
    G, lam : hypergraph and per-degree weights.
    v_s : start node; it may gain mass but never gives any away.
    alpha_hat : minimal structure size, bounds each ``y_i`` by ``1/alpha_hat``.
    unary : optional per-node additive bias on the self-loop term.
    record : keep the accepted transfers and the objective trace.
    """
    nodes = G.neighborhood(v_s) | {v_s}
    prob = compile_problem(G, lam, nodes, unary)
    cap = iter_factor * max(len(nodes) - 1, 1)
    return maximize(prob, prob.pos[v_s], alpha_hat, tol, eps_part, cap, record)


@dataclass
class Structure:
    support: frozenset[int]
    theta: float
    start: int
    converged: bool = True

    def sort_key(self):
        return (-self.theta, tuple(sorted(self.support)))


def search_all(G: NonUniformHypergraph, lam: WeightVector, alpha_hat: int = 2, tol: float = 1e-7,
               eps_part: float = 1e-9, iter_factor: int = 50, unary: dict[int, float] | None = None,
               threads: int = 1) -> list[Structure]:
    """One local maximizer per start node, reduced to supports and deduplicated (max theta kept).

    Starts whose neighbourhood is too small for ``alpha_hat`` are skipped.
    Results are ordered by descending theta, then by sorted support.
    """
    starts = [v for v in range(G.n) if len(G.neighborhood(v)) + 1 >= alpha_hat]

    def run(v):
        res = local_maximizer(G, lam, v, alpha_hat, tol, eps_part, iter_factor, unary)
        return Structure(res.support(eps_part), res.theta, v, res.converged)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(v) for v in starts]
    best: dict[frozenset, Structure] = {}
    for r in results:
        cur = best.get(r.support)
        if cur is None or r.theta > cur.theta:
            best[r.support] = r
    return sorted(best.values(), key=Structure.sort_key)
