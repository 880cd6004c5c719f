import numpy as np
import pytest

from irstlab.image_core import BinaryMask, connected_components
from irstlab.metrics import MetricSet, evaluate_set, pd_fa, pixel_iou


def iou(a, b):
    return pixel_iou(a, b)[0]
from irstlab.rng import Rng


def mask(bits):
    return BinaryMask(np.asarray(bits, dtype=np.uint8))


def random_mask(rng, p=0.1, size=24):
    return mask(rng.uniform(0, 1, (size, size)) < p)


def brute_pd_fa(pred, gt, match_dist=3.0):
    """Independent recomputation of target-level matching.

    Enumerates all centroid pairs within match_dist, sorted by distance,
    and greedily assigns one-to-one, exactly as the contract states.
    """
    pc = connected_components(pred)
    gc = connected_components(gt)
    pairs = []
    for gi, g in enumerate(gc):
        for pi, p in enumerate(pc):
            d = np.hypot(g.centroid[0] - p.centroid[0], g.centroid[1] - p.centroid[1])
            if d <= match_dist:
                pairs.append((d, gi, pi))
    pairs.sort()
    used_g, used_p = set(), set()
    for d, gi, pi in pairs:
        if gi not in used_g and pi not in used_p:
            used_g.add(gi)
            used_p.add(pi)
    t_correct = len(used_g)
    p_false = sum(p.area for pi, p in enumerate(pc) if pi not in used_p)
    return t_correct, len(gc), p_false


def test_iou_identical_masks():
    m = random_mask(Rng(1))
    assert iou(m, m) == 1.0


def test_iou_disjoint_masks():
    a = np.zeros((4, 4)), np.zeros((4, 4))
    m1, m2 = np.zeros((4, 4), dtype=int), np.zeros((4, 4), dtype=int)
    m1[0, 0], m2[3, 3] = 1, 1
    assert iou(mask(m1), mask(m2)) == 0.0


def test_iou_both_empty_is_one():
    e = mask(np.zeros((4, 4)))
    assert iou(e, e) == 1.0


def test_iou_hand_value():
    m1 = np.zeros((4, 4), dtype=int)
    m2 = np.zeros((4, 4), dtype=int)
    m1[0, :2] = 1          # 2 pixels
    m2[0, :3] = 1          # 3 pixels, overlap 2
    assert iou(mask(m1), mask(m2)) == pytest.approx(2 / 3)


def test_iou_symmetric():
    rng = Rng(3)
    for _ in range(50):
        a, b = random_mask(rng), random_mask(rng)
        assert iou(a, b) == iou(b, a)


def test_pd_fa_exact_hit_plus_false_blob():
    gt = np.zeros((32, 32), dtype=int)
    gt[4:6, 4:6] = 1
    gt[20:22, 20:22] = 1
    pred = np.zeros((32, 32), dtype=int)
    pred[4:6, 4:6] = 1          # matches target 1
    pred[10:11, 25:30] = 1      # 5-pixel false blob far from both
    t_correct, t_all, p_false = pd_fa(mask(pred), mask(gt))
    assert (t_correct, t_all, p_false) == (1, 2, 5)


def test_pd_fa_one_pred_cannot_match_twice():
    gt = np.zeros((16, 16), dtype=int)
    gt[4, 4] = 1
    gt[4, 8] = 1
    pred = np.zeros((16, 16), dtype=int)
    pred[4, 6] = 1  # within distance 3 of both, may claim only one
    t_correct, t_all, p_false = pd_fa(mask(pred), mask(gt))
    assert t_correct == 1 and t_all == 2 and p_false == 0


def test_pd_fa_matches_brute_force_oracle():
    rng = Rng(7)
    for _ in range(1000):
        pred = random_mask(rng, p=0.08, size=20)
        gt = random_mask(rng, p=0.08, size=20)
        assert pd_fa(pred, gt) == brute_pd_fa(pred, gt)


def test_pd_fa_empty_cases():
    e = mask(np.zeros((8, 8)))
    one = np.zeros((8, 8), dtype=int)
    one[2, 2] = 1
    assert pd_fa(e, e) == (0, 0, 0)
    assert pd_fa(mask(one), e) == (0, 0, 1)
    assert pd_fa(e, mask(one)) == (0, 1, 0)


def test_metric_set_edge_conventions():
    m = MetricSet.from_counts(0, 0, t_correct=0, t_all=0, p_false=0, p_all=0)
    assert m.iou == 1.0 and m.pd == 1.0 and m.fa == 0.0


def test_evaluate_set_micro_average():
    gt1 = np.zeros((8, 8), dtype=int)
    gt1[1, 1] = 1
    pred1 = gt1.copy()
    gt2 = np.zeros((8, 8), dtype=int)
    gt2[5, 5] = 1
    pred2 = np.zeros((8, 8), dtype=int)  # miss
    res = evaluate_set([mask(pred1), mask(pred2)], [mask(gt1), mask(gt2)])
    assert res.pd == pytest.approx(0.5)
    assert res.iou == pytest.approx(0.5)
    assert res.fa == 0.0


def test_evaluate_set_fa_normalization():
    gt = mask(np.zeros((10, 10)))
    pred_bits = np.zeros((10, 10), dtype=int)
    pred_bits[0, 0] = 1
    res = evaluate_set([mask(pred_bits)], [gt])
    assert res.fa == pytest.approx(1 / 100)


def test_fa_monotone_in_false_pixels():
    gt = mask(np.zeros((16, 16)))
    last = -1.0
    for k in (1, 3, 7):
        bits = np.zeros((16, 16), dtype=int)
        bits[0, :k] = 1
        res = evaluate_set([mask(bits)], [gt])
        assert res.fa > last
        last = res.fa


def test_evaluate_set_length_mismatch():
    with pytest.raises(ValueError):
        evaluate_set([mask(np.zeros((4, 4)))], [])
