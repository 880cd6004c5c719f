"""Segmentation evaluation: pixel IoU, target-level Pd and false-alarm rate Fa.

Pd matching is centroid-based: a ground-truth target counts as detected when
a predicted component centroid lies within `match_dist` pixels of its
centroid (greedy one-to-one, nearest pair first). Fa counts every pixel of
predicted components left unmatched, over all image pixels. Set-level
aggregation is micro: raw counts are summed first, ratios taken once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image_core import BinaryMask, connected_components

__all__ = ["MetricSet", "pixel_iou", "pd_fa", "evaluate_set", "DEFAULT_MATCH_DIST"]

DEFAULT_MATCH_DIST = 3.0


@dataclass(frozen=True)
class MetricSet:
    iou: float
    pd: float
    fa: float
    a_inter: int
    a_union: int
    t_correct: int
    t_all: int
    p_false: int
    p_all: int

    def to_dict(self) -> dict:
        return {
            "iou": self.iou, "pd": self.pd, "fa": self.fa,
            "a_inter": self.a_inter, "a_union": self.a_union,
            "t_correct": self.t_correct, "t_all": self.t_all,
            "p_false": self.p_false, "p_all": self.p_all,
        }

    @classmethod
    def from_counts(cls, a_inter, a_union, t_correct, t_all, p_false, p_all) -> "MetricSet":
        return cls(
            iou=a_inter / a_union if a_union > 0 else 1.0,
            pd=t_correct / t_all if t_all > 0 else 1.0,
            fa=p_false / p_all if p_all > 0 else 0.0,
            a_inter=int(a_inter), a_union=int(a_union),
            t_correct=int(t_correct), t_all=int(t_all),
            p_false=int(p_false), p_all=int(p_all),
        )


def pixel_iou(pred: BinaryMask, gt: BinaryMask):
    """Returns (iou, a_inter, a_union); both-empty is IoU 1 by convention."""
    if pred.shape != gt.shape:
        raise ValueError("pixel_iou masks must share dimensions")
    inter = int(np.sum((pred.bits == 1) & (gt.bits == 1)))
    union = int(np.sum((pred.bits == 1) | (gt.bits == 1)))
    iou = inter / union if union > 0 else 1.0
    return iou, inter, union


def pd_fa(pred: BinaryMask, gt: BinaryMask, match_dist: float = DEFAULT_MATCH_DIST):
    """Returns (t_correct, t_all, p_false) under greedy centroid matching."""
    if pred.shape != gt.shape:
        raise ValueError("pd_fa masks must share dimensions")
    gt_comps = connected_components(gt)
    pred_comps = connected_components(pred)
    used_g, used_p = set(), set()
    if gt_comps and pred_comps:
        gc = np.array([g.centroid for g in gt_comps])
        pc = np.array([p.centroid for p in pred_comps])
        dist = np.hypot(gc[:, None, 0] - pc[None, :, 0], gc[:, None, 1] - pc[None, :, 1])
        gi_all, pi_all = np.nonzero(dist <= match_dist)
        order = np.argsort(dist[gi_all, pi_all], kind="stable")
        # stable sort on distance keeps the (gi, pi) lexicographic tie order
        for gi, pi in zip(gi_all[order], pi_all[order]):
            gi, pi = int(gi), int(pi)
            if gi in used_g or pi in used_p:
                continue
            used_g.add(gi)
            used_p.add(pi)
    p_false = sum(p.area for pi, p in enumerate(pred_comps) if pi not in used_p)
    return len(used_g), len(gt_comps), p_false


def evaluate_set(preds: list[BinaryMask], gts: list[BinaryMask],
                 match_dist: float = DEFAULT_MATCH_DIST) -> MetricSet:
    """Micro-averaged metrics over aligned prediction/ground-truth lists."""
    if len(preds) != len(gts):
        raise ValueError(f"got {len(preds)} predictions for {len(gts)} ground truths")
    a_inter = a_union = t_correct = t_all = p_false = p_all = 0
    for pred, gt in zip(preds, gts):
        _, inter, union = pixel_iou(pred, gt)
        tc, ta, pf = pd_fa(pred, gt, match_dist)
        a_inter += inter
        a_union += union
        t_correct += tc
        t_all += ta
        p_false += pf
        p_all += pred.width * pred.height
    return MetricSet.from_counts(a_inter, a_union, t_correct, t_all, p_false, p_all)
