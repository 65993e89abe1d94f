"""Core domain types: detections, tracklets, hypergraphs, weights and labelings."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np


class OverlapError(ValueError):
    """Two tracklets share or interleave frames where a strict ordering is required."""


@dataclass(frozen=True, eq=False)
class Detection:
    frame: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float = 1.0
    detection_id: Hashable = None
    embedding: np.ndarray | None = None
    histogram: np.ndarray | None = None
    interpolated: bool = False

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"frame index must be >= 0, got {self.frame}")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w} h={self.h}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0,1], got {self.confidence}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def tlwh(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    def contains(self, x, y):
        """Inclusive rectangle containment; works elementwise on arrays."""
        hw, hh = self.w / 2.0, self.h / 2.0
        return (x >= self.cx - hw) & (x <= self.cx + hw) & (y >= self.cy - hh) & (y <= self.cy + hh)


@dataclass(frozen=True, eq=False)
class Tracklet:
    node_id: Hashable
    detections: tuple[Detection, ...]

    def __post_init__(self):
        dets = tuple(self.detections)
        object.__setattr__(self, "detections", dets)
        if not dets:
            raise ValueError("tracklet needs at least one detection")
        frames = [d.frame for d in dets]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"tracklet frames must be strictly increasing: {frames}")

    @property
    def score(self) -> float:
        return float(np.mean([d.confidence for d in self.detections]))

    @property
    def first(self) -> Detection:
        return self.detections[0]

    @property
    def last(self) -> Detection:
        return self.detections[-1]

    @property
    def start(self) -> int:
        return self.detections[0].frame

    @property
    def end(self) -> int:
        return self.detections[-1].frame

    @property
    def frames(self) -> list[int]:
        return [d.frame for d in self.detections]

    def __len__(self):
        return len(self.detections)

    def overlaps(self, other: "Tracklet") -> bool:
        """True when the two frame spans intersect."""
        return not (self.end < other.start or other.end < self.start)

    def with_id(self, node_id) -> "Tracklet":
        return Tracklet(node_id, self.detections)


def tracklet_from_detection(d: Detection, node_id=None) -> Tracklet:
    return Tracklet(d.detection_id if node_id is None else node_id, (d,))


def concat_tracklets(a: Tracklet, b: Tracklet, node_id=None) -> Tracklet:
    """Append ``b`` after ``a``; gaps are kept, overlap is an error."""
    if a.end >= b.start:
        raise OverlapError(f"cannot append tracklet starting at {b.start} to one ending at {a.end}")
    return Tracklet(a.node_id if node_id is None else node_id, a.detections + b.detections)


def merge_tracklets(a: Tracklet, b: Tracklet, node_id=None) -> Tracklet:
    """Interleave two tracklets by frame; a shared frame is an error."""
    if set(a.frames) & set(b.frames):
        raise OverlapError("tracklets share a frame")
    dets = tuple(sorted(a.detections + b.detections, key=lambda d: d.frame))
    return Tracklet(a.node_id if node_id is None else node_id, dets)


@dataclass(frozen=True)
class PointTrajectory:
    trajectory_id: Hashable
    frames: np.ndarray
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.int64)
        object.__setattr__(self, "frames", f)
        object.__setattr__(self, "xs", np.asarray(self.xs, dtype=float))
        object.__setattr__(self, "ys", np.asarray(self.ys, dtype=float))
        if len(f) < 2:
            raise ValueError(f"point trajectory {self.trajectory_id} needs >= 2 samples")
        if np.any(np.diff(f) <= 0):
            raise ValueError(f"point trajectory {self.trajectory_id} frames not strictly increasing")
        if not (len(f) == len(self.xs) == len(self.ys)):
            raise ValueError("frames/xs/ys length mismatch")


# degree -> affinity arity; degree 2 carries (color, embedding, motion)
DEFAULT_ARITY = {2: 3}


def arity_for(degree: int, arity: dict[int, int] | None = None) -> int:
    table = DEFAULT_ARITY if arity is None else arity
    return table.get(degree, 1)


@dataclass
class WeightVector:
    """Per-degree balancing weights; entry ``d-1`` is the weight of degree ``d``."""

    per_degree: list[np.ndarray]

    def __post_init__(self):
        self.per_degree = [np.atleast_1d(np.asarray(v, dtype=float)) for v in self.per_degree]
        if not self.per_degree:
            raise ValueError("need at least one degree")
        for v in self.per_degree:
            if not np.all(np.isfinite(v)):
                raise ValueError("weights must be finite")

    @property
    def max_degree(self) -> int:
        return len(self.per_degree)

    @property
    def arity(self) -> dict[int, int]:
        return {d + 1: len(v) for d, v in enumerate(self.per_degree)}

    def __getitem__(self, degree: int) -> np.ndarray:
        return self.per_degree[degree - 1]

    def flatten(self) -> np.ndarray:
        return np.concatenate(self.per_degree)

    @classmethod
    def from_flat(cls, flat, arity: dict[int, int]) -> "WeightVector":
        flat = np.asarray(flat, dtype=float)
        out, k = [], 0
        for d in sorted(arity):
            out.append(flat[k:k + arity[d]])
            k += arity[d]
        if k != len(flat):
            raise ValueError(f"flat weight length {len(flat)} does not match arity {arity}")
        return cls(out)

    @classmethod
    def default(cls) -> "WeightVector":
        return cls([[0.58535], [0.15576, 3.0332, 0.34388], [1.2879], [0.22324]])

    def truncated(self, max_degree: int) -> "WeightVector":
        return WeightVector(self.per_degree[:max_degree])

    def only_degree(self, degree: int) -> "WeightVector":
        """Copy with every degree except ``degree`` zeroed."""
        return WeightVector([v if d + 1 == degree else np.zeros_like(v) for d, v in enumerate(self.per_degree)])

    def scaled(self, c: float) -> "WeightVector":
        return WeightVector([c * v for v in self.per_degree])


class NonUniformHypergraph:
    """Nodes ``0..n-1`` plus per-degree sets of sorted node tuples with affinity vectors.

    ``tracklets`` is optional; graphs loaded from a dump carry no tracklets and
    then impose no temporal compatibility between nodes.
    """

    def __init__(self, n: int, max_degree: int, arity: dict[int, int] | None = None,
                 tracklets: Sequence[Tracklet] | None = None):
        if max_degree < 1:
            raise ValueError("max_degree must be >= 1")
        if tracklets is not None and len(tracklets) != n:
            raise ValueError("tracklet count must equal n")
        self.n = n
        self.max_degree = max_degree
        self.arity = {d: arity_for(d, arity) for d in range(1, max_degree + 1)}
        self.tracklets = list(tracklets) if tracklets is not None else None
        self.edges: dict[int, dict[tuple[int, ...], np.ndarray]] = {d: {} for d in range(1, max_degree + 1)}
        self._incident: list[list[tuple[int, ...]]] = [[] for _ in range(n)]
        self._nbrs: list[set[int]] = [set() for _ in range(n)]

    def add_edge(self, nodes: Iterable[int], affinity) -> tuple[int, ...]:
        key = tuple(sorted(int(v) for v in nodes))
        d = len(key)
        if d < 1 or d > self.max_degree:
            raise ValueError(f"degree {d} outside 1..{self.max_degree}")
        if len(set(key)) != d:
            raise ValueError(f"edge {key} repeats a node")
        if key[0] < 0 or key[-1] >= self.n:
            raise ValueError(f"edge {key} references a node outside 0..{self.n - 1}")
        a = np.atleast_1d(np.asarray(affinity, dtype=float))
        if len(a) != self.arity[d]:
            raise ValueError(f"degree {d} affinity needs {self.arity[d]} components, got {len(a)}")
        if key not in self.edges[d]:
            for v in key:
                self._incident[v].append(key)
                self._nbrs[v].update(u for u in key if u != v)
        self.edges[d][key] = a
        return key

    def affinity(self, nodes) -> np.ndarray | None:
        key = tuple(sorted(nodes))
        return self.edges.get(len(key), {}).get(key)

    def neighborhood(self, v: int) -> set[int]:
        return set(self._nbrs[v])

    def incident(self, v: int) -> list[tuple[int, ...]]:
        return list(self._incident[v])

    def num_edges(self, d: int) -> int:
        return len(self.edges.get(d, {}))

    def compatible(self, i: int, j: int) -> bool:
        """Whether two nodes may share one identity (never co-occur in time)."""
        if self.tracklets is None or i == j:
            return True
        return not self.tracklets[i].overlaps(self.tracklets[j])

    def edge_sets(self) -> dict[int, set[tuple[int, ...]]]:
        return {d: set(e) for d, e in self.edges.items()}


@dataclass
class Labeling:
    """Assignment of node (or detection) keys to identity labels 1..k; ``None`` = unassigned."""

    assignments: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = {v for v in self.assignments.values() if v is not None}
        if labels != set(range(1, len(labels) + 1)):
            raise ValueError(f"labels must be contiguous 1..k, got {sorted(labels)}")

    @property
    def k(self) -> int:
        return len({v for v in self.assignments.values() if v is not None})

    def clusters(self) -> list[frozenset]:
        groups: dict[int, set] = {}
        for key, lab in self.assignments.items():
            if lab is not None:
                groups.setdefault(lab, set()).add(key)
        return [frozenset(groups[lab]) for lab in sorted(groups)]

    @classmethod
    def from_clusters(cls, clusters: Iterable[Iterable], keys: Iterable = ()) -> "Labeling":
        """Build a labeling; clusters are numbered by their smallest member, ``keys`` not covered stay unassigned."""
        cl = [sorted(c) for c in clusters if len(list(c)) > 0]
        cl.sort(key=lambda c: c[0])
        out = {k: None for k in keys}
        for lab, members in enumerate(cl, start=1):
            for m in members:
                if out.get(m) is not None:
                    raise ValueError(f"{m!r} appears in two clusters")
                out[m] = lab
        return cls(out)

    def canonical(self) -> frozenset:
        return frozenset(self.clusters())
