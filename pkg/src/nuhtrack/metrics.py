"""CLEAR-MOT and identity (IDF1) evaluation.

Inputs are sequences of ``(frame, identity, left, top, width, height)`` rows or
``(identity, Detection)`` pairs; see :func:`to_rows`.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

BIG = 1e9


def iou(a, b) -> float:
    """IoU of two ``(left, top, width, height)`` boxes (or Detections)."""
    ax, ay, aw, ah = a.tlwh if hasattr(a, "tlwh") else a
    bx, by, bw, bh = b.tlwh if hasattr(b, "tlwh") else b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def iou_matrix(A: Sequence, B: Sequence) -> np.ndarray:
    M = np.zeros((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            M[i, j] = iou(a, b)
    return M


def match_frame(gt_boxes: Sequence, boxes: Sequence, threshold: float, strict: bool = False):
    """Max-IoU one-to-one matching; yields ``(box_index, gt_index, iou)`` for pairs at/above threshold."""
    if not len(gt_boxes) or not len(boxes):
        return []
    M = iou_matrix(gt_boxes, boxes)
    ok = M > threshold if strict else M >= threshold
    r, c = linear_sum_assignment(np.where(ok, -M, BIG))
    return [(j, i, M[i, j]) for i, j in zip(r, c) if ok[i, j]]


def to_rows(items) -> list[tuple[int, int, float, float, float, float]]:
    rows = []
    for it in items:
        if len(it) == 2:
            ident, d = it
            rows.append((d.frame, ident) + tuple(d.tlwh))
        else:
            rows.append(tuple(it[:6]))
    return rows


def _by_frame(rows):
    out = defaultdict(dict)
    for f, ident, l, t, w, h in rows:
        if ident in out[f]:
            raise ValueError(f"identity {ident} appears twice in frame {f}")
        out[f][ident] = (l, t, w, h)
    return out


@dataclass
class ClearMotReport:
    mota: float
    motp_iou: float
    motp_norm: float
    fp: int
    fn: int
    ids: int
    fm: int
    mt: int
    ml: int
    pt: int
    num_gt: int
    num_pred: int
    num_matches: int
    num_gt_tracks: int
    per_frame: dict = field(default_factory=dict, repr=False)
    coverage: dict = field(default_factory=dict, repr=False)

    @property
    def mt_ratio(self) -> float:
        return self.mt / self.num_gt_tracks if self.num_gt_tracks else float("nan")

    @property
    def ml_ratio(self) -> float:
        return self.ml / self.num_gt_tracks if self.num_gt_tracks else float("nan")

    def summary(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("per_frame", "coverage")}
        d["mt_ratio"] = self.mt_ratio
        d["ml_ratio"] = self.ml_ratio
        return d


def clear_mot(results, ground_truth, iou_threshold: float = 0.5) -> ClearMotReport:
    """CLEAR-MOT counts with match persistence across frames.

    MOTA is NaN when the ground truth is empty. Two precisions are reported:
    mean IoU of matches, and one minus the mean ``1-IoU`` distance normalised by
    the hit/miss distance ``1 - iou_threshold``.
    """
    res = _by_frame(to_rows(results))
    gt = _by_frame(to_rows(ground_truth))
    frames = sorted(set(res) | set(gt))
    prev: dict = {}  # gt id -> result id matched in the previous frame
    last: dict = {}  # gt id -> last result id it was ever matched to
    fp = fn = ids = 0
    ious = []
    tracked = defaultdict(list)  # gt id -> list of (frame, matched?)
    per_frame = {}
    for f in frames:
        g, r = gt.get(f, {}), res.get(f, {})
        matches: dict = {}
        for gid, rid in prev.items():
            if gid in g and rid in r and iou(g[gid], r[rid]) >= iou_threshold:
                matches[gid] = rid
        g_left = [k for k in sorted(g) if k not in matches]
        used = set(matches.values())
        r_left = [k for k in sorted(r) if k not in used]
        for ri, gi, _ in match_frame([g[k] for k in g_left], [r[k] for k in r_left], iou_threshold):
            matches[g_left[gi]] = r_left[ri]
        f_ids = 0
        for gid, rid in matches.items():
            if gid in last and last[gid] != rid:
                f_ids += 1
            last[gid] = rid
            ious.append(iou(g[gid], r[rid]))
        f_fn = len(g) - len(matches)
        f_fp = len(r) - len(matches)
        fn += f_fn
        fp += f_fp
        ids += f_ids
        for gid in g:
            tracked[gid].append(gid in matches)
        per_frame[f] = {"fp": f_fp, "fn": f_fn, "ids": f_ids, "matches": len(matches)}
        prev = matches
    num_gt = sum(len(v) for v in gt.values())
    num_pred = sum(len(v) for v in res.values())
    mt = ml = pt = fm = 0
    coverage = {}
    for gid, seq in tracked.items():
        cov = sum(seq) / len(seq)
        coverage[gid] = cov
        if cov >= 0.8:
            mt += 1
        elif cov <= 0.2:
            ml += 1
        else:
            pt += 1
        # a fragmentation is a resumption of tracking after an interruption
        started = False
        for a, b in zip(seq, seq[1:]):
            started = started or a
            if started and not a and b:
                fm += 1
    mota = 1.0 - (fn + fp + ids) / num_gt if num_gt else float("nan")
    motp_iou = float(np.mean(ious)) if ious else float("nan")
    motp_norm = 1.0 - float(np.mean([1.0 - x for x in ious])) / (1.0 - iou_threshold) if ious else float("nan")
    return ClearMotReport(mota, motp_iou, motp_norm, fp, fn, ids, fm, mt, ml, pt, num_gt, num_pred,
                          len(ious), len(tracked), per_frame, coverage)


def idf1(results, ground_truth, iou_threshold: float = 0.5) -> float:
    """Identity F1 from a global one-to-one assignment of result to GT trajectories."""
    res_rows, gt_rows = to_rows(results), to_rows(ground_truth)
    n_res, n_gt = len(res_rows), len(gt_rows)
    if n_res == 0 and n_gt == 0:
        return float("nan")
    if n_res == 0 or n_gt == 0:
        return 0.0
    res, gt = _by_frame(res_rows), _by_frame(gt_rows)
    g_ids = sorted({r[1] for r in gt_rows})
    r_ids = sorted({r[1] for r in res_rows})
    gi = {k: i for i, k in enumerate(g_ids)}
    ri = {k: i for i, k in enumerate(r_ids)}
    co = np.zeros((len(g_ids), len(r_ids)))
    for f in set(gt) & set(res):
        for g, gb in gt[f].items():
            for r, rb in res[f].items():
                if iou(gb, rb) >= iou_threshold:
                    co[gi[g], ri[r]] += 1
    rows, cols = linear_sum_assignment(co, maximize=True)
    idtp = co[rows, cols].sum()
    idfp = n_res - idtp
    idfn = n_gt - idtp
    return float(2 * idtp / (2 * idtp + idfp + idfn))


def evaluate(results, ground_truth, iou_threshold: float = 0.5) -> dict:
    rep = clear_mot(results, ground_truth, iou_threshold)
    out = rep.summary()
    out["idf1"] = idf1(results, ground_truth, iou_threshold)
    out["iou_threshold"] = iou_threshold
    return out


def format_table(summary: dict) -> str:
    keys = ["mota", "motp_iou", "motp_norm", "idf1", "mt", "ml", "fp", "fn", "ids", "fm", "num_gt", "num_pred"]
    lines = []
    for k in keys:
        v = summary.get(k)
        if isinstance(v, float):
            s = "nan" if math.isnan(v) else f"{v:.4f}"
        else:
            s = str(v)
        lines.append(f"{k.upper():<10} {s:>10}")
    return "\n".join(lines)
