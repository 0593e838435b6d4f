"""Evaluation: aggregated Chamfer/Hausdorff distances and per-class AP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .curves import CLASS_NAMES, CURVE_CLASSES, NO_OBJECT, ParametricCurve, sample_by_interval
from .losses import chamfer_points
from .spatial import as_points, nearest_distances

DEFAULT_INTERVAL = 0.01
DEFAULT_TP_CD = 0.005


@dataclass(frozen=True)
class ScoredCurve:
    """A resolved prediction: curve (class implied), plus its confidence."""

    curve: ParametricCurve
    confidence: float

    @property
    def cls(self) -> int:
        return self.curve.cls


def hausdorff_points(x, y) -> float:
    """Mean of the two directed Hausdorff distances."""
    x = as_points(x)
    y = as_points(y)
    return float(0.5 * (nearest_distances(x, y).max() + nearest_distances(y, x).max()))


def curve_samples(curves: Sequence[ParametricCurve], interval: float = DEFAULT_INTERVAL) -> np.ndarray:
    if not curves:
        return np.zeros((0, 3))
    return np.concatenate([sample_by_interval(c, interval) for c in curves])


def bbox_diagonal(points) -> float:
    p = as_points(points)
    return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def scene_cd_hd(pred_curves: Sequence[ParametricCurve], gt_curves: Sequence[ParametricCurve],
                interval: float = DEFAULT_INTERVAL) -> tuple[float, float]:
    """CD and HD between the unions of per-curve interval samples.

    With no predictions both values are the diagonal of the ground-truth
    sample bounding box.
    """
    if not gt_curves:
        raise ValueError("ground truth must contain at least one curve")
    gt = curve_samples(gt_curves, interval)
    if not pred_curves:
        diag = bbox_diagonal(gt)
        return diag, diag
    pred = curve_samples(pred_curves, interval)
    return chamfer_points(pred, gt), hausdorff_points(pred, gt)


@dataclass(frozen=True)
class Detection:
    confidence: float
    cls: int
    tp: bool
    gt_index: int = -1


def match_for_ap(preds: Sequence[ScoredCurve], gt_curves: Sequence[ParametricCurve],
                 interval: float = DEFAULT_INTERVAL, tp_cd: float = DEFAULT_TP_CD) -> list[Detection]:
    """Greedy one-to-one TP/FP labelling in descending confidence.

    A prediction is a TP when an unclaimed ground-truth curve of the same
    class lies within pairwise CD ``< tp_cd``; the closest such curve is
    claimed. Returned detections are in ranking order.
    """
    gt_samples = [sample_by_interval(c, interval) for c in gt_curves]
    claimed = [False] * len(gt_curves)
    order = sorted(range(len(preds)), key=lambda k: -preds[k].confidence)
    out = []
    for k in order:
        p = preds[k]
        if p.cls == NO_OBJECT:
            continue
        samples = sample_by_interval(p.curve, interval)
        best, best_cd = -1, math.inf
        for i, g in enumerate(gt_curves):
            if claimed[i] or g.cls != p.cls:
                continue
            cd = chamfer_points(samples, gt_samples[i])
            if cd < best_cd:
                best, best_cd = i, cd
        if best >= 0 and best_cd < tp_cd:
            claimed[best] = True
            out.append(Detection(p.confidence, p.cls, True, best))
        else:
            out.append(Detection(p.confidence, p.cls, False))
    return out


def average_precision(labels: Sequence[bool], num_gt: int) -> float:
    """All-point interpolated AP for TP/FP labels sorted by confidence."""
    if num_gt <= 0:
        raise ValueError("AP undefined without ground truth")
    tp = np.asarray(labels, dtype=bool)
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / num_gt
    precision = ctp / (ctp + cfp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    dr = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(dr * envelope))


@dataclass
class EvalReport:
    cd: float
    hd: float
    ap_per_class: dict  # class id -> AP, only classes present in gt
    map: float
    tp: dict = field(default_factory=dict)
    fp: dict = field(default_factory=dict)
    fn: dict = field(default_factory=dict)
    empty_prediction: bool = False
    detections: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def named(d):
            return {CLASS_NAMES[c]: d[c] for c in sorted(d)}

        return {
            "cd": self.cd,
            "hd": self.hd,
            "map": self.map,
            "ap": named(self.ap_per_class),
            "tp": named(self.tp),
            "fp": named(self.fp),
            "fn": named(self.fn),
            "empty_prediction": self.empty_prediction,
        }


def _ap_summary(detections: list[Detection], gt_classes: list[int]):
    num_gt = {c: gt_classes.count(c) for c in CURVE_CLASSES}
    ranked = sorted(detections, key=lambda d: -d.confidence)
    ap, tp, fp, fn = {}, {}, {}, {}
    for c in CURVE_CLASSES:
        labels = [d.tp for d in ranked if d.cls == c]
        tp[c] = int(sum(labels))
        fp[c] = len(labels) - tp[c]
        fn[c] = num_gt[c] - tp[c]
        if num_gt[c] > 0:
            ap[c] = average_precision(labels, num_gt[c])
    m = float(np.mean(list(ap.values()))) if ap else 0.0
    return ap, m, tp, fp, fn


def evaluate_scene(preds: Sequence[ScoredCurve], gt_curves: Sequence[ParametricCurve],
                   interval: float = DEFAULT_INTERVAL, tp_cd: float = DEFAULT_TP_CD) -> EvalReport:
    kept = [p for p in preds if p.cls != NO_OBJECT]
    cd, hd = scene_cd_hd([p.curve for p in kept], gt_curves, interval)
    dets = match_for_ap(kept, gt_curves, interval, tp_cd)
    ap, m, tp, fp, fn = _ap_summary(dets, [g.cls for g in gt_curves])
    return EvalReport(cd, hd, ap, m, tp, fp, fn, empty_prediction=not kept, detections=dets)


@dataclass
class CorpusReport:
    scenes: list  # per-scene EvalReport
    cd_mean: float
    cd_std: float
    hd_mean: float
    hd_std: float
    ap_per_class: dict
    map: float
    empty_predictions: int

    def to_dict(self) -> dict:
        return {
            "cd_mean": self.cd_mean,
            "cd_std": self.cd_std,
            "hd_mean": self.hd_mean,
            "hd_std": self.hd_std,
            "map": self.map,
            "ap": {CLASS_NAMES[c]: v for c, v in sorted(self.ap_per_class.items())},
            "empty_predictions": self.empty_predictions,
            "num_scenes": len(self.scenes),
        }


def evaluate_corpus(pairs, interval: float = DEFAULT_INTERVAL, tp_cd: float = DEFAULT_TP_CD) -> CorpusReport:
    """Evaluate ``(preds, gt_curves)`` pairs; AP pools detections over the corpus."""
    scenes, gt_classes = [], []
    for preds, gts in pairs:
        scenes.append(evaluate_scene(preds, gts, interval, tp_cd))
        gt_classes.extend(g.cls for g in gts)
    return corpus_from_reports(scenes, gt_classes)


def corpus_from_reports(scenes: list, gt_classes: list) -> CorpusReport:
    detections = [d for s in scenes for d in s.detections]
    cds = np.array([s.cd for s in scenes])
    hds = np.array([s.hd for s in scenes])
    ap, m, _, _, _ = _ap_summary(detections, gt_classes)
    return CorpusReport(
        scenes,
        float(cds.mean()), float(cds.std()),
        float(hds.mean()), float(hds.std()),
        ap, m,
        sum(s.empty_prediction for s in scenes),
    )
