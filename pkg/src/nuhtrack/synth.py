"""Synthetic tracking scenarios with known ground truth.

Each scenario is a set of constant-velocity targets with distinct appearance
(embedding + colour histogram), per-frame detector noise and dropout, optional
occlusion intervals, and point trajectories that ride on the visible targets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config
from .model import Detection, PointTrajectory

SCENARIOS = ("cross2", "cross4-occl", "parallel2")


@dataclass
class TargetSpec:
    start: tuple[float, float]
    velocity: tuple[float, float]
    first: int
    last: int
    size: tuple[float, float] = (24.0, 48.0)
    occluded: tuple[int, int] | None = None  # [a, b) frames with no detections or points

    def visible(self, f: int) -> bool:
        if not self.first <= f <= self.last:
            return False
        return not (self.occluded and self.occluded[0] <= f < self.occluded[1])

    def center(self, f: int) -> tuple[float, float]:
        dt = f - self.first
        return self.start[0] + self.velocity[0] * dt, self.start[1] + self.velocity[1] * dt


@dataclass
class Scenario:
    name: str
    targets: list[TargetSpec]
    frames: int = 100
    dropout: float = 0.05
    pos_noise: float = 1.0
    size_noise: float = 0.5
    points_per_target: int = 300
    point_life: tuple[int, int] = (15, 40)
    emb_dim: int = 16
    emb_noise: float = 0.15
    hist_bins: tuple[int, int, int] = (8, 8, 4)
    hist_pixels: int = 500


def _line(p0, p1, frames):
    return p0, ((p1[0] - p0[0]) / (frames - 1), (p1[1] - p0[1]) / (frames - 1))


def make_scenario(name: str, frames: int = 100) -> Scenario:
    if name == "cross2":
        a = _line((100, 150), (540, 330), frames)
        b = _line((100, 330), (540, 150), frames)
        return Scenario(name, [TargetSpec(a[0], a[1], 0, frames - 1), TargetSpec(b[0], b[1], 0, frames - 1)], frames)
    if name == "cross4-occl":
        specs = [
            _line((60, 80), (300, 200), frames),
            _line((60, 200), (300, 80), frames),
            _line((340, 280), (600, 400), frames),
            _line((340, 400), (600, 280), frames),
        ]
        targets = [TargetSpec(s, v, 0, frames - 1) for s, v in specs]
        mid = frames // 2
        targets[2].occluded = (mid - 5, mid + 5)
        return Scenario(name, targets, frames)
    if name == "parallel2":
        a = _line((80, 120), (560, 120), frames)
        b = _line((80, 360), (560, 360), frames)
        return Scenario(name, [TargetSpec(a[0], a[1], 0, frames - 1), TargetSpec(b[0], b[1], 0, frames - 1)], frames)
    raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")


@dataclass
class SynthData:
    detections: list[Detection]
    ground_truth: list[tuple[int, Detection]]
    points: list[PointTrajectory]
    embeddings: np.ndarray
    histograms: np.ndarray
    det_truth: list[int] = field(default_factory=list)  # source target id per detection


def generate(scn: Scenario, seed: int = 0) -> SynthData:
    rng = np.random.default_rng(seed)
    nbins = int(np.prod(scn.hist_bins))
    emb_base, hist_base = [], []
    for _ in scn.targets:
        e = rng.normal(size=scn.emb_dim)
        emb_base.append(e / np.linalg.norm(e))
        conc = np.full(nbins, 0.05)
        conc[rng.choice(nbins, size=6, replace=False)] = 20.0
        hist_base.append(rng.dirichlet(conc))

    dets, gt, emb, hist, src = [], [], [], [], []
    for f in range(scn.frames):
        for k, t in enumerate(scn.targets):
            if not (t.first <= f <= t.last):
                continue
            cx, cy = t.center(f)
            w, h = t.size
            gt.append((k + 1, Detection(f, cx, cy, w, h, 1.0, detection_id=("gt", k + 1, f))))
            if not t.visible(f) or rng.random() < scn.dropout:
                continue
            d = Detection(f, round(cx + rng.normal(0, scn.pos_noise) - w / 2, 2) + w / 2,
                          round(cy + rng.normal(0, scn.pos_noise) - h / 2, 2) + h / 2,
                          round(max(w + rng.normal(0, scn.size_noise), 4.0), 2),
                          round(max(h + rng.normal(0, scn.size_noise), 4.0), 2),
                          round(float(rng.uniform(0.6, 1.0)), 4), detection_id=len(dets))
            dets.append(d)
            src.append(k + 1)
            e = emb_base[k] + rng.normal(0, scn.emb_noise, scn.emb_dim)
            emb.append(e / np.linalg.norm(e))
            counts = rng.multinomial(scn.hist_pixels, hist_base[k]).astype(float)
            hist.append(counts / np.linalg.norm(counts))

    points = []
    tid = 0
    for k, t in enumerate(scn.targets):
        w, h = t.size
        vis = np.array([t.visible(f) for f in range(scn.frames)] + [False])
        for _ in range(scn.points_per_target):
            f = t.first + int(rng.integers(0, scn.point_life[0]))
            while f <= t.last:
                life = int(rng.integers(scn.point_life[0], scn.point_life[1] + 1))
                ox, oy = rng.uniform(-0.45 * w, 0.45 * w), rng.uniform(-0.45 * h, 0.45 * h)
                g = f
                while g <= t.last and g < f + life and vis[g]:
                    g += 1
                fs = np.arange(f, g)
                if len(fs) >= 2:
                    cx, cy = t.center(fs)
                    noise = rng.normal(0, 0.3, size=(2, len(fs)))
                    points.append(PointTrajectory(tid, fs, np.round(cx + ox + noise[0], 2),
                                                  np.round(cy + oy + noise[1], 2)))
                    tid += 1
                # skip past an occlusion before respawning
                f = g + 1 if not vis[g] else g
                while f <= t.last and not vis[f]:
                    f += 1
    return SynthData(dets, gt, points, np.array(emb, dtype=np.float32).reshape(len(dets), scn.emb_dim),
                     np.array(hist, dtype=np.float32).reshape(len(dets), nbins), src)


def write_scenario(out_dir, name: str, seed: int, frames: int = 100) -> Path:
    """Write det.txt, gt.txt, pts.txt, emb.bin, hist.bin and config.json into ``out_dir``."""
    from . import io

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate(make_scenario(name, frames), seed)
    cfg = Config()
    head = io.provenance(cfg, f"scenario={name} seed={seed}")
    io.write_mot(out / "det.txt", [(-1, d) for d in data.detections], head)
    io.write_mot(out / "gt.txt", data.ground_truth, head)
    io.write_points(out / "pts.txt", data.points, head)
    io.write_features(out / "emb.bin", data.embeddings, io.EMB_MAGIC)
    io.write_features(out / "hist.bin", data.histograms, io.HIST_MAGIC)
    io.write_config(out / "config.json", cfg)
    return out
