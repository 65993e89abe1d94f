import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nuhtrack.metrics import clear_mot, evaluate, format_table, idf1, iou, match_frame


def _box(frame, ident, x, y=0.0, s=10.0):
    return (frame, ident, x, y, s, s)


def test_iou_examples():
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(50 / 150)
    assert iou((0, 0, 10, 10), (10, 0, 10, 10)) == 0.0


def test_match_frame_threshold():
    gt = [(0, 0, 10, 10)]
    half = [(0, 0, 10, 5)]
    assert len(match_frame(gt, half, 0.5)) == 1
    assert match_frame(gt, half, 0.5, strict=True) == []
    assert match_frame([], half, 0.5) == []


def test_mota_fixture():
    gt = [_box(f, k, 100.0 * k) for f in range(2) for k in range(1, 6)]
    res = [r for r in gt if not (r[0] == 1 and r[1] == 5)] + [_box(1, 9, 900.0)]
    rep = clear_mot(res, gt)
    assert (rep.fn, rep.fp, rep.ids, rep.num_gt) == (1, 1, 0, 10)
    assert rep.mota == pytest.approx(0.8)


def test_perfect_tracking():
    gt = [_box(f, k, 50.0 * k + f) for f in range(6) for k in range(3)]
    rep = clear_mot(gt, gt)
    assert rep.mota == 1.0 and rep.ids == 0 and rep.fm == 0
    assert rep.mt_ratio == 1.0 and rep.motp_iou == 1.0
    assert idf1(gt, gt) == 1.0


def test_persistent_swap_counts_two_switches():
    gt = [_box(f, k, 100.0 * k) for f in range(4) for k in (1, 2)]
    res = [(f, (k if f < 2 else 3 - k), x, y, w, h) for f, k, x, y, w, h in gt]
    rep = clear_mot(res, gt)
    assert rep.ids == 2 and rep.per_frame[2]["ids"] == 2
    assert rep.fp == rep.fn == 0


def test_fragmentation_and_coverage():
    gt = [_box(f, 1, 0.0) for f in range(10)]
    res = [r for r in gt if r[0] not in (3, 4)]
    rep = clear_mot(res, gt)
    assert rep.fm == 1 and rep.fn == 2
    assert rep.coverage[1] == pytest.approx(0.8) and rep.mt == 1


def test_empty_ground_truth():
    rep = clear_mot([_box(0, 1, 0.0)], [])
    assert math.isnan(rep.mota) and rep.fp == 1
    assert math.isnan(idf1([], []))
    assert idf1([], [_box(0, 1, 0.0)]) == 0.0


def test_duplicate_identity_in_frame_rejected():
    with pytest.raises(ValueError):
        clear_mot([_box(0, 1, 0.0), _box(0, 1, 50.0)], [_box(0, 1, 0.0)])


def test_idf1_half_split_counts():
    # one target, result identity changes half way: IDTP 5, IDFP 5, IDFN 5
    gt = [_box(f, 1, 0.0) for f in range(10)]
    res = [_box(f, 1 if f < 5 else 2, 0.0) for f in range(10)]
    assert idf1(res, gt) == pytest.approx(0.5, abs=1e-15)
    assert idf1(res, gt) == pytest.approx(_idf1_brute(res, gt))


def _idf1_brute(res, gt, thr=0.5):
    """Exhaustive search over every partial one-to-one identity correspondence."""
    gi = sorted({r[1] for r in gt})
    ri = sorted({r[1] for r in res})
    g_at = {(r[0], r[1]): r[2:] for r in gt}
    r_at = {(r[0], r[1]): r[2:] for r in res}
    slots = ri + [None] * len(gi)
    best = 0
    for perm in permutations(slots, len(gi)):
        tp = 0
        for g, r in zip(gi, perm):
            if r is None:
                continue
            for (f, k), b in g_at.items():
                if k == g and (f, r) in r_at and iou(b, r_at[(f, r)]) >= thr:
                    tp += 1
        best = max(best, tp)
    return 2 * best / (len(gt) + len(res))


def _random_tracks(rng, n_ids, frames, jitter):
    rows = []
    for k in range(n_ids):
        x0 = 40.0 * k
        for f in range(frames):
            if rng.random() < 0.85:
                rows.append((f, k + 1, x0 + rng.normal(0, jitter), 0.0, 10.0, 10.0))
    return rows


def _relabel(rng, rows, ids):
    perm = dict(zip(ids, rng.permutation(ids) + 100))
    return [(f, perm[k]) + tuple(r) for f, k, *r in rows]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_idf1_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    gt = _random_tracks(rng, int(rng.integers(1, 4)), 6, 0.0)
    res = _random_tracks(rng, int(rng.integers(1, 4)), 6, 3.0)
    # identities wander between targets
    res = [(f, k if rng.random() < 0.7 else int(rng.integers(1, 4)), *r) for f, k, *r in res]
    seen = set()
    res = [r for r in res if (r[0], r[1]) not in seen and not seen.add((r[0], r[1]))]
    if not res or not gt:
        return
    assert idf1(res, gt) == pytest.approx(_idf1_brute(res, gt), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metric_properties(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    gt = _random_tracks(rng, n, 8, 0.0)
    res = _random_tracks(rng, int(rng.integers(1, 5)), 8, 2.0)
    if not gt or not res:
        return
    rep = clear_mot(res, gt)
    assert rep.mota <= 1.0
    assert rep.fp == sum(p["fp"] for p in rep.per_frame.values())
    assert rep.fn == sum(p["fn"] for p in rep.per_frame.values())
    assert rep.ids == sum(p["ids"] for p in rep.per_frame.values())
    assert rep.num_matches + rep.fn == rep.num_gt and rep.num_matches + rep.fp == rep.num_pred
    assert rep.mt + rep.ml + rep.pt == rep.num_gt_tracks
    # swapping roles leaves IDF1 unchanged
    assert idf1(res, gt) == pytest.approx(idf1(gt, res), abs=1e-12)
    # metrics do not depend on identity numbering
    res_ids = sorted({r[1] for r in res})
    other = clear_mot(_relabel(rng, res, res_ids), gt)
    assert (other.mota, other.ids, other.fm) == (rep.mota, rep.ids, rep.fm)
    assert idf1(_relabel(rng, res, res_ids), gt) == pytest.approx(idf1(res, gt), abs=1e-12)


def test_evaluate_and_table():
    gt = [_box(f, 1, 0.0) for f in range(3)]
    out = evaluate(gt, gt)
    assert out["mota"] == 1.0 and out["idf1"] == 1.0 and out["iou_threshold"] == 0.5
    table = format_table(out)
    assert "MOTA" in table and "1.0000" in table and "IDF1" in table
