import math

import numpy as np
import pytest
from scipy import ndimage

from angioseg.seg_metrics import (ConfusionCounts, aggregate, assd, boundary, confusion, directed_distances,
                                  fmt, hd95, overlap_metrics, percentile, segmentation_metrics)


def oracle_min_dists(a, b):
    out = []
    for p in a:
        out.append(min(math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2) for q in b))
    return out


def oracle_percentile(vals, q):
    v = sorted(vals)
    pos = (len(v) - 1) * q / 100.0
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


def _lines(gap=3, length=20, size=32):
    a = np.zeros((size, size), bool)
    b = np.zeros((size, size), bool)
    a[5, 4 : 4 + length] = True
    b[5 + gap, 4 : 4 + length] = True
    return a, b


def test_confusion_examples(rng):
    gt = rng.random((8, 8)) > 0.5
    c = confusion(gt, gt)
    assert c.fp == c.fn == 0 and c.total == 64
    c = confusion(~gt, gt)
    assert c.tp == c.tn == 0
    pred = np.array([[1, 1], [0, 0]], bool)
    truth = np.array([[1, 0], [1, 0]], bool)
    assert tuple(confusion(pred, truth)) == (1, 1, 1, 1)
    with pytest.raises(ValueError):
        confusion(np.zeros((2, 2)), np.zeros((2, 3)))


def test_overlap_hand_counts():
    m = overlap_metrics(ConfusionCounts(1, 1, 1, 1))
    # 2TP / (2TP + FP + FN) = 2 / 4
    assert m["dice"] == 0.5 and m["iou"] == 1 / 3 and m["acc"] == 0.5
    assert m["sens"] == 0.5 and m["spec"] == 0.5
    assert abs(m["f1"] - m["dice"]) <= 1e-12


def test_overlap_edge_cases(rng):
    gt = rng.random((8, 8)) > 0.5
    perfect = overlap_metrics(confusion(gt, gt))
    assert all(perfect[k] == 1.0 for k in ("dice", "f1", "iou", "sens", "spec"))
    a, b = np.zeros((4, 4), bool), np.zeros((4, 4), bool)
    a[0, 0], b[3, 3] = True, True
    dis = overlap_metrics(confusion(a, b))
    assert dis["dice"] == 0.0 and dis["iou"] == 0.0 and dis["f1"] == 0.0
    empty = overlap_metrics(confusion(np.zeros((3, 3)), np.zeros((3, 3))))
    assert empty["dice"] == empty["iou"] == empty["f1"] == 1.0 and empty["sens"] is None


def test_dice_equals_f1(rng):
    for _ in range(50):
        p = rng.random((16, 16)) > rng.random()
        g = rng.random((16, 16)) > rng.random()
        m = overlap_metrics(confusion(p, g))
        assert abs(m["dice"] - m["f1"]) <= 1e-12
        for k in ("dice", "acc", "f1", "iou"):
            assert 0.0 <= m[k] <= 1.0


def test_boundary_uses_four_neighbours():
    m = np.zeros((5, 5), bool)
    m[1:4, 1:4] = True
    b = {tuple(p) for p in boundary(m)}
    assert (2, 2) not in b and len(b) == 8
    full = np.ones((3, 3), bool)
    assert len(boundary(full)) == 8  # image border counts as background


def test_parallel_lines_are_three_apart():
    a, b = _lines()
    ba, bb = boundary(a), boundary(b)
    assert hd95(ba, bb) == 3.0 and assd(ba, bb) == 3.0
    m = segmentation_metrics(a, b)
    assert m["hd95"] == 3.0 and m["assd"] == 3.0


def test_identical_sets_are_zero(rng):
    pts = rng.integers(0, 20, (15, 2))
    assert hd95(pts, pts) == 0.0 and assd(pts, pts) == 0.0


def test_outlier_fixture_against_oracle():
    a = np.array([[0, c] for c in range(20)])
    b = np.array([[1, c] for c in range(19)] + [[30, 0]])
    da, db = oracle_min_dists(a, b), oracle_min_dists(b, a)
    expected = max(oracle_percentile(da, 95), oracle_percentile(db, 95))
    assert hd95(a, b) == expected
    assert hd95(a, b) < max(db)  # the single far point is interpolated away


def test_distances_match_brute_force(rng):
    for _ in range(30):
        a = rng.integers(0, 40, (int(rng.integers(1, 51)), 2))
        b = rng.integers(0, 40, (int(rng.integers(1, 51)), 2))
        da, db = oracle_min_dists(a, b), oracle_min_dists(b, a)
        assert list(directed_distances(a, b)) == da
        assert hd95(a, b) == max(oracle_percentile(da, 95), oracle_percentile(db, 95))
        assert assd(a, b) == math.fsum(da + db) / (len(da) + len(db))
        assert hd95(a, b) == hd95(b, a) and assd(a, b) == assd(b, a)


def test_empty_sets_are_undefined():
    assert hd95(np.zeros((0, 2)), np.array([[1, 1]])) is None
    assert assd(np.array([[1, 1]]), np.zeros((0, 2))) is None
    m = segmentation_metrics(np.zeros((4, 4)), np.ones((4, 4)))
    assert m["hd95"] is None and m["assd"] is None
    assert fmt(None) == "n/a" and fmt(0.5, 2) == "0.50"


def test_dilation_lowers_dice():
    a, _ = _lines(length=20)
    prev = 1.0
    pred = a.copy()
    for _ in range(3):
        pred = ndimage.binary_dilation(pred)
        d = segmentation_metrics(pred, a)["dice"]
        assert d < prev
        prev = d


def test_aggregate_is_mean_of_images():
    per = [{"dice": 0.5, "hd95": None}, {"dice": 1.0, "hd95": 2.0}]
    agg = aggregate(per, keys=("dice", "hd95"))
    assert agg["dice"] == {"mean": 0.75, "std": 0.25, "n": 2}
    assert agg["hd95"] == {"mean": 2.0, "std": 0.0, "n": 1}
    assert aggregate([{"dice": None}], keys=("dice",))["dice"]["mean"] is None


def test_percentile_agrees_with_numpy(rng):
    for n in (1, 2, 7, 50):
        v = rng.random(n) * 10
        for q in (0, 50, 95, 100):
            assert abs(percentile(v, q) - np.percentile(v, q)) <= 1e-12
