"""Configuration dataclasses. Every default can be overridden from a JSON config file."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass

from .model import WeightVector

DEFAULT_WEIGHTS = [[0.58535], [0.15576, 3.0332, 0.34388], [1.2879], [0.22324]]


@dataclass
class BuildConfig:
    max_degree: int = 4
    max_velocity: float | None = None  # pixels/frame; None -> estimated from detections
    max_frame_gap: int | None = None  # None -> tau
    knn_k: int | None = 8  # None -> unbounded
    max_hyperedges_per_node: int | None = 64  # None -> unbounded
    hist_bins: tuple[int, int, int] = (8, 8, 4)
    prune_eps: float = 1e-6

    def __post_init__(self):
        self.hist_bins = tuple(self.hist_bins)
        if self.max_degree < 2:
            raise ValueError("max_degree must be >= 2")
        if self.max_velocity is not None and self.max_velocity <= 0:
            raise ValueError("max_velocity must be > 0")
        for name in ("max_frame_gap", "knn_k", "max_hyperedges_per_node"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class SearchConfig:
    alpha_hat: int = 2
    tol: float = 1e-7
    eps_part: float = 1e-9
    iter_factor: int = 50
    threads: int = 1

    def __post_init__(self):
        if self.alpha_hat < 2:
            raise ValueError("alpha_hat must be >= 2")


@dataclass
class TrackConfig:
    tau: int = 7
    patience: int | None = None  # windows a target may go unmatched; None -> max_frame_gap
    min_spawn_length: int = 2
    association_rounds: int = 3

    def __post_init__(self):
        if self.tau < 2:
            raise ValueError("tau must be >= 2")


@dataclass
class LearnConfig:
    C: float = 1.0
    eps_stop: float = 1e-3
    max_rounds: int = 200
    clip_length: int = 14
    gt_overlap: float = 0.5


@dataclass
class MetricsConfig:
    iou_threshold: float = 0.5


@dataclass
class Config:
    build: BuildConfig = field(default_factory=BuildConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    track: TrackConfig = field(default_factory=TrackConfig)
    learn: LearnConfig = field(default_factory=LearnConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    weights: list = field(default_factory=lambda: [list(w) for w in DEFAULT_WEIGHTS])

    @property
    def max_frame_gap(self) -> int:
        return self.build.max_frame_gap if self.build.max_frame_gap is not None else self.track.tau

    @property
    def patience(self) -> int:
        return self.track.patience if self.track.patience is not None else self.max_frame_gap

    def weight_vector(self) -> WeightVector:
        return WeightVector(self.weights).truncated(self.build.max_degree)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["build"]["hist_bins"] = list(d["build"]["hist_bins"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name not in data:
                continue
            default = f.default_factory()
            if is_dataclass(default):
                sub = data[f.name] or {}
                bad = set(sub) - {g.name for g in fields(default)}
                if bad:
                    raise ValueError(f"unknown keys in [{f.name}]: {sorted(bad)}")
                kwargs[f.name] = type(default)(**sub)
            else:
                kwargs[f.name] = data[f.name]
        cfg = cls(**kwargs)
        WeightVector(cfg.weights)
        return cfg
