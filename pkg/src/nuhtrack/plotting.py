"""Report figures. Rendered off-screen; PNG bytes depend only on the inputs."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
from matplotlib.backends.backend_agg import FigureCanvasAgg  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .model import Tracklet  # noqa: E402

PNG_META = {"Software": None}


def _save(fig: Figure, path) -> Path:
    FigureCanvasAgg(fig)
    path = Path(path)
    fig.savefig(path, format="png", dpi=100, metadata=PNG_META)
    return path


def plot_eval_report(per_frame: dict, coverage: dict, path, title: str = "") -> Path:
    """Per-frame FP/FN/IDS counts (top) and per-identity coverage (bottom)."""
    fig = Figure(figsize=(8, 6))
    top, bottom = fig.subplots(2, 1)
    frames = sorted(per_frame)
    xs = [f + 1 for f in frames]
    for key, color in (("fp", "tab:red"), ("fn", "tab:blue"), ("ids", "tab:green")):
        top.step(xs, [per_frame[f][key] for f in frames], where="mid", label=key.upper(), color=color, lw=1)
    top.set_xlabel("frame")
    top.set_ylabel("count")
    top.legend(loc="upper right", fontsize=8)
    if title:
        top.set_title(title, fontsize=9)
    ids = sorted(coverage)
    bottom.bar(range(len(ids)), [coverage[k] for k in ids], color="0.4")
    bottom.axhline(0.8, color="tab:green", lw=0.8, ls="--")
    bottom.axhline(0.2, color="tab:red", lw=0.8, ls="--")
    bottom.set_xticks(range(len(ids)))
    bottom.set_xticklabels([str(k) for k in ids], fontsize=7)
    bottom.set_ylim(0, 1.05)
    bottom.set_xlabel("ground-truth identity")
    bottom.set_ylabel("coverage")
    fig.tight_layout()
    return _save(fig, path)


def plot_tracks(tracks: Sequence[Tracklet], path, title: str = "") -> Path:
    """Image-plane trajectories, one colour per identity; interpolated boxes marked with x."""
    fig = Figure(figsize=(6, 5))
    ax = fig.subplots()
    cmap = matplotlib.colormaps["tab10"]
    for k, t in enumerate(tracks):
        xs = [d.cx for d in t.detections]
        ys = [d.cy for d in t.detections]
        ax.plot(xs, ys, color=cmap(k % 10), lw=1, label=str(t.node_id))
        interp = [d for d in t.detections if d.interpolated]
        if interp:
            ax.plot([d.cx for d in interp], [d.cy for d in interp], "x", color=cmap(k % 10), ms=3)
    ax.invert_yaxis()
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if tracks:
        ax.legend(fontsize=7, loc="best")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)
