"""Post-processing and evaluation: soft-NMS, top-k, AP/mAP, AR@k, AUC.

Every operation here is a pure function of its inputs, and every rule with a
judgement call in it (tie-breaks, matching, integration) is written down in
the docstring so the brute-force reference implementations in the test suite
can follow the same contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotations import AnnotationSet, PredictionSet
from .errors import ValidationError
from .segments import Prediction, iou_1d

# IoU grid for averaged metrics: 0.5 to 0.95 in steps of 0.05.
IOU_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

DEFAULT_NMS_THRESHOLD = 0.84
DEFAULT_NMS_SIGMA = 0.5


def _rank_key(pred: Prediction):
    # highest score first; ties settle deterministically by geometry then label
    return (-pred.score, pred.segment.start, pred.segment.end, pred.label)


def soft_nms(
    predictions: list[Prediction],
    iou_threshold: float = DEFAULT_NMS_THRESHOLD,
    sigma: float = DEFAULT_NMS_SIGMA,
    method: str = "gaussian",
) -> list[Prediction]:
    """Rescore one video's predictions by iterative suppression.

    Pop the highest-score prediction (ties by (start, end, label)) into the
    kept list; every remaining prediction overlapping it with IoU strictly
    above iou_threshold decays: gaussian multiplies the score by
    exp(-IoU^2 / sigma), linear by (1 - IoU), hard zeroes it. Segments and
    labels never change and no score ever increases. Output is sorted by
    final score with the same tie-break.
    """
    if method not in ("gaussian", "linear", "hard"):
        raise ValidationError(f"unknown soft-NMS method {method!r}")
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    if not predictions:
        return []
    starts = np.array([p.segment.start for p in predictions], dtype=np.float64)
    ends = np.array([p.segment.end for p in predictions], dtype=np.float64)
    labels = np.array([p.label for p in predictions], dtype=np.int64)
    scores = np.array([p.score for p in predictions], dtype=np.float64)
    lengths = ends - starts
    active = np.ones(len(predictions), dtype=bool)
    final = np.empty_like(scores)
    for _ in range(len(predictions)):
        idx = np.flatnonzero(active)
        s = scores[idx]
        tied = idx[s == s.max()]
        if len(tied) > 1:
            tied = tied[np.lexsort((labels[tied], ends[tied], starts[tied]))]
        best = int(tied[0])
        final[best] = scores[best]
        active[best] = False
        rest = idx[idx != best]
        if len(rest) == 0:
            break
        inter = np.minimum(ends[best], ends[rest]) - np.maximum(starts[best], starts[rest])
        iou = np.where(
            inter > 0, inter / np.maximum(lengths[best] + lengths[rest] - inter, 1e-300), 0.0
        )
        hit = iou > iou_threshold
        if hit.any():
            if method == "gaussian":
                factor = np.exp(-(iou[hit] ** 2) / sigma)
            elif method == "linear":
                factor = 1.0 - iou[hit]
            else:
                factor = 0.0
            scores[rest[hit]] *= factor
    out = [
        Prediction(predictions[i].segment, predictions[i].label, float(final[i]))
        for i in range(len(predictions))
    ]
    return sorted(out, key=_rank_key)


def top_k(predictions: list[Prediction], k: int = 100) -> list[Prediction]:
    """The k highest-score predictions, ties by (start, end, label)."""
    if k < 0:
        raise ValidationError(f"k must be non-negative, got {k}")
    return sorted(predictions, key=_rank_key)[:k]


def _class_gt(gts: AnnotationSet, label: int) -> dict[str, list]:
    table = {}
    for video_id, video in gts.videos.items():
        table[video_id] = [inst.segment for inst in video.instances if inst.label == label]
    return table


def average_precision(
    preds: PredictionSet, gts: AnnotationSet, label: int, iou_threshold: float
) -> float | None:
    """ActivityNet-style AP for one class at one IoU threshold.

    Predictions of the class are ranked by score (ties by (video_id, start,
    end)); each is greedily matched to the highest-IoU not-yet-matched ground
    truth of the class in its own video, tie to the earliest instance, and is
    a true positive iff that IoU >= iou_threshold. AP is the step-wise sum
    sum_i (R_i - R_{i-1}) P_i. Returns None when the class has no ground
    truth anywhere (excluded from mAP rather than scored).
    """
    gt_by_video = _class_gt(gts, label)
    num_gt = sum(len(v) for v in gt_by_video.values())
    if num_gt == 0:
        return None
    ranked = []
    for video_id, video in preds.videos.items():
        for pred in video.predictions:
            if pred.label == label:
                ranked.append((video_id, pred))
    ranked.sort(key=lambda vp: (-vp[1].score, vp[0], vp[1].segment.start, vp[1].segment.end))
    matched: dict[str, list[bool]] = {vid: [False] * len(v) for vid, v in gt_by_video.items()}
    tp, fp, ap, prev_recall = 0, 0, 0.0, 0.0
    for video_id, pred in ranked:
        candidates = gt_by_video.get(video_id, [])
        best_iou, best_idx = 0.0, -1
        for idx, segment in enumerate(candidates):
            if matched[video_id][idx]:
                continue
            iou = iou_1d(pred.segment, segment)
            if iou > best_iou:
                best_iou, best_idx = iou, idx
        if best_idx >= 0 and best_iou >= iou_threshold:
            matched[video_id][best_idx] = True
            tp += 1
        else:
            fp += 1
        recall = tp / num_gt
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


@dataclass(frozen=True)
class MetricReport:
    thresholds: tuple[float, ...]
    map_at: dict[float, float]
    average_map: float
    per_class_ap: dict[str, dict[float, float | None]]
    ar_at: dict[int, float]
    auc: float

    def to_json_dict(self) -> dict:
        return {
            "mAP": {f"{t:.2f}": self.map_at[t] for t in self.thresholds},
            "average_mAP": self.average_map,
            "per_class_AP": {
                name: {f"{t:.2f}": ap for t, ap in cols.items()}
                for name, cols in self.per_class_ap.items()
            },
            "AR_at_k": {str(k): v for k, v in sorted(self.ar_at.items())},
            "AUC": self.auc,
        }

    def format_table(self) -> str:
        """Fixed-width percentage table with columns 0.5 | 0.75 | 0.95 | Average."""
        header = f"{'0.5':>7} | {'0.75':>7} | {'0.95':>7} | {'Average':>7}"
        cells = [self.map_at.get(0.5), self.map_at.get(0.75), self.map_at.get(0.95), self.average_map]
        row = " | ".join(f"{100.0 * v:>7.2f}" if v is not None else f"{'n/a':>7}" for v in cells)
        return header + "\n" + row


def map_report(
    preds: PredictionSet, gts: AnnotationSet, thresholds: tuple[float, ...] = IOU_GRID
) -> tuple[dict[float, float], float, dict[str, dict[float, float | None]]]:
    """Per-threshold mAP over classes with ground truth, plus their mean."""
    if gts.num_instances() == 0:
        raise ValidationError("no ground-truth instances anywhere; mAP is undefined")
    if not thresholds:
        raise ValidationError("need at least one IoU threshold")
    per_class: dict[str, dict[float, float | None]] = {name: {} for name in gts.classes}
    map_at = {}
    for threshold in thresholds:
        aps = []
        for label, name in enumerate(gts.classes):
            ap = average_precision(preds, gts, label, threshold)
            per_class[name][threshold] = ap
            if ap is not None:
                aps.append(ap)
        map_at[threshold] = sum(aps) / len(aps)
    average = sum(map_at[t] for t in thresholds) / len(thresholds)
    return map_at, average, per_class


def _recall_rank_table(preds: PredictionSet, gts: AnnotationSet) -> tuple[list[list[int | None]], list[int]]:
    """For every GT instance, the smallest proposal rank recalling it at each
    grid threshold (None = never); plus per-video proposal counts."""
    first_rank: list[list[int | None]] = []
    counts = []
    for video_id, video in gts.videos.items():
        proposals = sorted(preds.videos[video_id].predictions, key=_rank_key) if video_id in preds.videos else []
        counts.append(len(proposals))
        for inst in video.instances:
            row: list[int | None] = []
            for threshold in IOU_GRID:
                rank = None
                for j, prop in enumerate(proposals):
                    if iou_1d(prop.segment, inst.segment) >= threshold:
                        rank = j + 1
                        break
                row.append(rank)
            first_rank.append(row)
    return first_rank, counts


def ar_auc(
    preds: PredictionSet, gts: AnnotationSet, ks: tuple[int, ...] = (1, 5, 10, 100)
) -> tuple[dict[int, float], float]:
    """Class-agnostic average recall at k proposals, and AUC.

    A GT instance counts as recalled at k if one of the video's top-k
    proposals (by score, ties by (start, end, label)) reaches the IoU
    threshold; AR@k averages over the [0.5:0.05:0.95] grid and instances.
    AUC is the trapezoidal area under (average proposals per video, AR@k)
    for k = 0..100, divided by 100.
    """
    if gts.num_instances() == 0:
        raise ValidationError("no ground-truth instances anywhere; AR is undefined")
    first_rank, counts = _recall_rank_table(preds, gts)
    total_cells = len(first_rank) * len(IOU_GRID)
    num_videos = len(gts.videos)

    def ar_at(k: int) -> float:
        hits = sum(1 for row in first_rank for rank in row if rank is not None and rank <= k)
        return hits / total_cells

    ar_values = {k: ar_at(k) for k in ks}
    points = [(0.0, 0.0)]
    for k in range(1, 101):
        avg_props = sum(min(k, c) for c in counts) / num_videos
        points.append((avg_props, ar_at(k)))
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return ar_values, auc / 100.0


def evaluate_predictions(
    preds: PredictionSet,
    gts: AnnotationSet,
    thresholds: tuple[float, ...] = IOU_GRID,
    ks: tuple[int, ...] = (1, 5, 10, 100),
) -> MetricReport:
    """Full metric report; assumes predictions are already post-processed."""
    map_at, average, per_class = map_report(preds, gts, thresholds)
    ar_values, auc = ar_auc(preds, gts, ks)
    return MetricReport(
        thresholds=tuple(thresholds),
        map_at=map_at,
        average_map=average,
        per_class_ap=per_class,
        ar_at=ar_values,
        auc=auc,
    )


def postprocess_predictions(
    preds: PredictionSet,
    iou_threshold: float = DEFAULT_NMS_THRESHOLD,
    sigma: float = DEFAULT_NMS_SIGMA,
    method: str = "gaussian",
    k: int = 100,
) -> PredictionSet:
    """Per-video soft-NMS followed by top-k, preserving set metadata."""
    from .annotations import VideoPredictions

    videos = {}
    for video_id, video in preds.videos.items():
        kept = top_k(soft_nms(list(video.predictions), iou_threshold, sigma, method), k)
        videos[video_id] = VideoPredictions(video.duration, tuple(kept))
    return PredictionSet(classes=preds.classes, fps=preds.fps, videos=videos)
