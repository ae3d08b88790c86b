"""COCO-style mAP with timestamp-tolerance matching and motion-level breakdown.

Evaluation frames are the unique annotation timestamps. Each frame pulls in
the detections of the nearest detection timestamp within the configured
tolerance (ties break toward the earlier detection time); detections at
timestamps no annotation maps to are ignored. Within a frame, detections
match ground truth greedily in descending score order: a detection takes
the unmatched same-class box with the highest IoU, provided that IoU
reaches the threshold. AP is the 101-point interpolation of the precision
envelope; mAP averages AP over the classes present in the ground truth and
then over the IoU thresholds.

The per-level breakdown restricts ground truth to one motion level at a
time. A detection that fails to match the level's ground truth but overlaps
(same class, IoU at threshold) a box of another level, or a box removed by
sanitization, is excluded from that level's false positives; detections
matching nothing anywhere count as false positives at every level.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Sequence

from .errors import EmptyInputError, InvalidParamError, MissingLevelError
from .model import Annotation, Detection
from .motion import MotionLevels

DEFAULT_IOU_THRESHOLDS = tuple(i / 100 for i in range(50, 100, 5))
_RECALL_POINTS = 101


@dataclass(frozen=True)
class EvalConfig:
    """IoU threshold grid, timestamp tolerance, and optional class count."""

    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    timestamp_tolerance_us: int = 0
    num_classes: int | None = None

    def __post_init__(self):
        thr = tuple(self.iou_thresholds)
        if not thr:
            raise InvalidParamError("need at least one IoU threshold")
        if any(not 0.0 < t < 1.0 for t in thr):
            raise InvalidParamError("IoU thresholds must lie in (0, 1)")
        if any(b <= a for a, b in zip(thr, thr[1:])):
            raise InvalidParamError("IoU thresholds must be strictly ascending")
        if self.timestamp_tolerance_us < 0:
            raise InvalidParamError("tolerance must be non-negative")
        object.__setattr__(self, "iou_thresholds", thr)


@dataclass(frozen=True)
class EvalResult:
    """Overall mAP plus the per-class and per-threshold marginals."""

    overall_map: float
    per_class: dict[int, float]
    per_threshold: dict[float, float]
    warning: str | None = None


@dataclass(frozen=True)
class LevelEvalResult:
    """mAP per motion level (None where the level has no ground truth)."""

    per_level: dict[int, float | None]
    overall: EvalResult


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    iw = min(a.x + a.w, b.x + b.w) - ix
    ih = min(a.y + a.h, b.y + b.h) - iy
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def match_timestamps(
    annotation_times: Sequence[int],
    detection_times: Sequence[int],
    tolerance_us: int,
) -> dict[int, int | None]:
    """Map each annotation time to the nearest detection time within tolerance.

    Equidistant candidates resolve to the earlier detection time; annotation
    times with no candidate map to None. Input sequences must be sorted.
    """
    det = list(detection_times)
    out: dict[int, int | None] = {}
    for a in annotation_times:
        i = bisect.bisect_left(det, a)
        best: int | None = None
        if i > 0:
            best = det[i - 1]
        if i < len(det):
            cand = det[i]
            if best is None or abs(cand - a) < abs(best - a):
                best = cand
        if best is not None and abs(best - a) <= tolerance_us:
            out[a] = best
        else:
            out[a] = None
    return out


@dataclass
class _Frame:
    """One evaluation frame: ground truth, candidate detections, and boxes a
    failed detection may be excused against (per-level mode only)."""

    t: int
    gts: list[Annotation] = field(default_factory=list)
    gt_levels: list[int] = field(default_factory=list)
    dets: list[Detection] = field(default_factory=list)
    excluded_gts: list[Annotation] = field(default_factory=list)


def _build_frames(
    detections: Sequence[Detection],
    annotations: Sequence[Annotation],
    tolerance_us: int,
    levels: Sequence[int] | None = None,
) -> list[_Frame]:
    ann_by_t: dict[int, _Frame] = {}
    for i, a in enumerate(annotations):
        frame = ann_by_t.setdefault(a.t, _Frame(t=a.t))
        frame.gts.append(a)
        if levels is not None:
            frame.gt_levels.append(levels[i])
    det_by_t: dict[int, list[Detection]] = {}
    for d in detections:
        det_by_t.setdefault(d.t, []).append(d)

    ann_times = sorted(ann_by_t)
    mapping = match_timestamps(ann_times, sorted(det_by_t), tolerance_us)
    for t in ann_times:
        matched = mapping[t]
        if matched is not None:
            ann_by_t[t].dets = det_by_t.get(matched, [])
    return [ann_by_t[t] for t in ann_times]


def _ap_from_frames(frames: Sequence[_Frame], class_id: int, iou_threshold: float) -> float:
    gt_count = sum(1 for f in frames for g in f.gts if g.class_id == class_id)
    if gt_count == 0:
        return 0.0

    ranked = [
        (d, fi)
        for fi, f in enumerate(frames)
        for d in f.dets
        if d.class_id == class_id
    ]
    ranked.sort(key=lambda item: -item[0].score)

    taken: dict[int, set[int]] = {}
    tp_flags: list[bool] = []
    for det, fi in ranked:
        frame = frames[fi]
        used = taken.setdefault(fi, set())
        best_iou = 0.0
        best_gi = -1
        for gi, gt in enumerate(frame.gts):
            if gt.class_id != class_id or gi in used:
                continue
            v = iou(det, gt)
            if v > best_iou:
                best_iou = v
                best_gi = gi
        if best_gi >= 0 and best_iou >= iou_threshold:
            used.add(best_gi)
            tp_flags.append(True)
            continue
        if any(
            g.class_id == class_id and iou(det, g) >= iou_threshold
            for g in frame.excluded_gts
        ):
            continue  # excused: overlaps a box outside this evaluation's GT
        tp_flags.append(False)

    # 101-point interpolated AP over the precision envelope
    precisions: list[float] = []
    recalls: list[float] = []
    tp = fp = 0
    for flag in tp_flags:
        tp += flag
        fp += not flag
        precisions.append(tp / (tp + fp))
        recalls.append(tp / gt_count)
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])

    total = 0.0
    for i in range(_RECALL_POINTS):
        r = i / (_RECALL_POINTS - 1)
        j = bisect.bisect_left(recalls, r)
        if j < len(precisions):
            total += precisions[j]
    return total / _RECALL_POINTS


def average_precision(
    detections: Sequence[Detection],
    annotations: Sequence[Annotation],
    class_id: int,
    iou_threshold: float,
    tolerance_us: int = 0,
) -> float:
    """AP of one class at one IoU threshold (0.0 when the class has no GT)."""
    frames = _build_frames(detections, annotations, tolerance_us)
    return _ap_from_frames(frames, class_id, iou_threshold)


def _mean_ap(frames: Sequence[_Frame], classes: Sequence[int], cfg: EvalConfig):
    ap = {
        c: {thr: _ap_from_frames(frames, c, thr) for thr in cfg.iou_thresholds}
        for c in classes
    }
    per_class = {c: sum(ap[c].values()) / len(cfg.iou_thresholds) for c in classes}
    per_threshold = {
        thr: sum(ap[c][thr] for c in classes) / len(classes) for thr in cfg.iou_thresholds
    }
    overall = sum(per_class.values()) / len(classes)
    return overall, per_class, per_threshold


def map_metric(
    detections: Sequence[Detection],
    annotations: Sequence[Annotation],
    cfg: EvalConfig,
) -> EvalResult:
    """mAP over the IoU grid, averaged over classes present in the ground truth.

    A ground truth with no classes (empty annotation list) yields 0 with a
    warning instead of an error so batch jobs complete.
    """
    classes = sorted({a.class_id for a in annotations})
    if not classes:
        return EvalResult(
            0.0, {}, {thr: 0.0 for thr in cfg.iou_thresholds},
            warning="no ground truth classes; mAP defined as 0",
        )
    frames = _build_frames(detections, annotations, cfg.timestamp_tolerance_us)
    overall, per_class, per_threshold = _mean_ap(frames, classes, cfg)
    return EvalResult(overall, per_class, per_threshold)


def map_by_level(
    detections: Sequence[Detection],
    annotations: Sequence[Annotation],
    levels: MotionLevels | Sequence[int],
    cfg: EvalConfig,
    removed_boxes: Sequence[Annotation] = (),
) -> LevelEvalResult:
    """mAP restricted to each motion level, plus the unrestricted overall.

    ``levels`` assigns one level per annotation (same order); either a
    MotionLevels or a bare sequence works. ``removed_boxes`` are
    sanitize-dropped boxes; detections overlapping them are excused from
    every level's false positives.
    """
    level_seq = tuple(levels.levels if isinstance(levels, MotionLevels) else levels)
    if len(level_seq) != len(annotations):
        raise MissingLevelError(
            f"{len(annotations)} annotations but {len(level_seq)} level assignments"
        )
    if not annotations:
        raise EmptyInputError("need at least one annotation")

    overall = map_metric(detections, annotations, cfg)

    removed_by_t: dict[int, list[Annotation]] = {}
    for b in removed_boxes:
        removed_by_t.setdefault(b.t, []).append(b)

    per_level: dict[int, float | None] = {}
    all_frames = _build_frames(
        detections, annotations, cfg.timestamp_tolerance_us, levels=level_seq
    )
    for lv in range(1, 6):
        frames = []
        classes = set()
        for f in all_frames:
            gts = [g for g, l in zip(f.gts, f.gt_levels) if l == lv]
            others = [g for g, l in zip(f.gts, f.gt_levels) if l != lv]
            frames.append(
                _Frame(
                    t=f.t,
                    gts=gts,
                    dets=f.dets,
                    excluded_gts=others + removed_by_t.get(f.t, []),
                )
            )
            classes.update(g.class_id for g in gts)
        if not classes:
            per_level[lv] = None
            continue
        lv_map, _, _ = _mean_ap(frames, sorted(classes), cfg)
        per_level[lv] = lv_map
    return LevelEvalResult(per_level, overall)
