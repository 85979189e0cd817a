"""Detection scoring: per-class AP at IoU 0.5, mAP, mAP:C and fps.

AP uses COCO's 101-point interpolation. Recall thresholds are compared in
exact integer arithmetic (``100 * tp >= k * n_gt``) so grid points that land
exactly on an achieved recall are never lost to float rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import canonical
from .dataset_io import Dataset, _parse_json
from .errors import ParseError, ValidationError
from .geometry import BoundingBox, iou

RECALL_STEPS = 100


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: BoundingBox
    class_id: int
    score: float

    def __post_init__(self):
        object.__setattr__(self, "image_id", str(self.image_id))
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"detection score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class ModelMeta:
    name: str
    parameter_count_millions: float
    inference_ms: Optional[Tuple[float, ...]] = None
    training_hours: Optional[float] = None

    def __post_init__(self):
        if not self.parameter_count_millions > 0:
            raise ValidationError(f"parameter count must be positive, got {self.parameter_count_millions}")
        if self.inference_ms is not None:
            times = tuple(float(t) for t in self.inference_ms)
            if not times or any(t <= 0 for t in times):
                raise ValidationError("inference times must be a non-empty list of positive values")
            object.__setattr__(self, "inference_ms", times)


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class EvalReport:
    """Scored metrics. ``ap`` and ``map`` are fractions in [0, 1]."""

    ap: Dict[int, float]
    map: float
    map_over_c: float
    fps: Optional[float]
    counts: Dict[int, ClassCounts]
    class_names: Dict[int, str] = field(default_factory=dict)
    model: str = ""
    training_hours: Optional[float] = None
    iou_threshold: float = 0.5

    def to_dict(self) -> dict:
        name = lambda cid: self.class_names.get(cid, str(cid))
        return {
            "model": self.model,
            "iou_threshold": self.iou_threshold,
            "ap": {name(c): 100.0 * v for c, v in sorted(self.ap.items())},
            "mAP": 100.0 * self.map,
            "mAP_over_C": self.map_over_c,
            "fps": self.fps,
            "training_hours": self.training_hours,
            "counts": {
                name(c): {"tp": k.tp, "fp": k.fp, "fn": k.fn} for c, k in sorted(self.counts.items())
            },
        }

    def to_json(self) -> str:
        return canonical.dumps(self.to_dict())

    def table(self) -> str:
        """Per-class AP columns followed by mAP, all on the 0-100 scale."""
        cols = [self.class_names.get(c, str(c)) for c in sorted(self.ap)]
        width = max([8] + [len(c) for c in cols])
        head = ["model".ljust(16)] + [c.rjust(width) for c in cols] + ["mAP".rjust(6), "mAP:C".rjust(6)]
        row = [self.model[:16].ljust(16)]
        row += [f"{100.0 * self.ap[c]:.1f}".rjust(width) for c in sorted(self.ap)]
        row += [f"{100.0 * self.map:.1f}".rjust(6), f"{self.map_over_c:.2f}".rjust(6)]
        lines = [" ".join(head), " ".join(row)]
        if self.fps is not None:
            lines.append(f"fps: {self.fps:.1f}")
        return "\n".join(lines)


def match_detections(
    gt: Sequence[BoundingBox], dets: Sequence[Detection], iou_threshold: float = 0.5
) -> List[Tuple[Detection, bool]]:
    """Greedy COCO-style matching for one image and class.

    Detections are visited by descending score (ties keep input order); each
    takes the unmatched ground truth of highest IoU at or above the threshold.
    """
    order = sorted(range(len(dets)), key=lambda k: -dets[k].score)
    taken = [False] * len(gt)
    out = []
    for k in order:
        det = dets[k]
        best, best_iou = -1, iou_threshold
        for g, box in enumerate(gt):
            if taken[g]:
                continue
            v = iou(det.box, box)
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = g, v
        if best >= 0:
            taken[best] = True
        out.append((det, best >= 0))
    return out


def average_precision(labeled: Sequence[Tuple[float, bool]], n_gt: int) -> Optional[float]:
    """101-point interpolated AP from ``(score, is_tp)`` pairs.

    Returns None when there is neither ground truth nor a detection, and 0.0
    when detections exist without ground truth.
    """
    if n_gt < 0:
        raise ValueError("ground-truth count must be non-negative")
    if n_gt == 0:
        return 0.0 if len(labeled) else None
    if not labeled:
        return 0.0
    order = sorted(range(len(labeled)), key=lambda k: -labeled[k][0])
    hits = np.array([bool(labeled[k][1]) for k in order], dtype=np.int64)
    tp = np.cumsum(hits)
    fp = np.cumsum(1 - hits)
    precision = tp / (tp + fp)
    # Envelope: best precision at this or any later (higher-recall) point.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for k in range(RECALL_STEPS + 1):
        # first index whose recall tp/n_gt reaches k/100
        idx = int(np.searchsorted(RECALL_STEPS * tp, k * n_gt, side="left"))
        if idx < len(tp):
            total += envelope[idx]
    return total / (RECALL_STEPS + 1)


def map_over_c(map_percent: float, parameter_count_millions: float) -> float:
    """mAP on the 0-100 scale divided by parameters in millions."""
    return map_percent / parameter_count_millions


def fps_from_times(times_ms: Sequence[float]) -> float:
    return 1000.0 / (sum(times_ms) / len(times_ms))


def evaluate(gt: Dataset, dets: Sequence[Detection], meta: ModelMeta, iou_threshold: float = 0.5) -> EvalReport:
    """Score detections against a ground-truth dataset.

    mAP is the unweighted mean over classes that have ground truth. Classes
    with detections but no ground truth are listed with AP 0 and excluded
    from the mean.

    Raises:
        ValidationError: a detection names an unknown image or class.
    """
    images = gt.by_id()
    unknown_img = sorted({d.image_id for d in dets if d.image_id not in images})
    if unknown_img:
        raise ValidationError(f"detections reference unknown image ids: {unknown_img[:10]}", unknown_img)
    unknown_cls = sorted({d.class_id for d in dets if d.class_id not in gt.classes})
    if unknown_cls:
        raise ValidationError(f"detections reference unknown category ids: {unknown_cls}", unknown_cls)

    gt_boxes: Dict[Tuple[str, int], List[BoundingBox]] = {}
    for s in gt.samples:
        for a in s.annotations:
            gt_boxes.setdefault((s.id, a.class_id), []).append(a.box)
    det_groups: Dict[Tuple[str, int], List[Detection]] = {}
    for d in dets:
        det_groups.setdefault((d.image_id, d.class_id), []).append(d)

    labeled: Dict[int, List[Tuple[float, bool]]] = {}
    n_gt: Dict[int, int] = {}
    for (sid, cid), boxes in gt_boxes.items():
        n_gt[cid] = n_gt.get(cid, 0) + len(boxes)
    for key, group in det_groups.items():
        for det, hit in match_detections(gt_boxes.get(key, []), group, iou_threshold):
            labeled.setdefault(key[1], []).append((det.score, hit, det))

    ap: Dict[int, float] = {}
    counts: Dict[int, ClassCounts] = {}
    position = {id(d): i for i, d in enumerate(dets)}
    for cid in sorted(set(n_gt) | set(labeled)):
        rows = labeled.get(cid, [])
        # Restore input order so equal scores sort stably across images.
        rows.sort(key=lambda r: position[id(r[2])])
        value = average_precision([(s, h) for s, h, _ in rows], n_gt.get(cid, 0))
        if value is None:
            continue
        ap[cid] = value
        tp = sum(1 for _, h, _ in rows if h)
        counts[cid] = ClassCounts(tp=tp, fp=len(rows) - tp, fn=n_gt.get(cid, 0) - tp)

    present = [ap[c] for c in ap if n_gt.get(c, 0) > 0]
    mean_ap = float(np.mean(present)) if present else 0.0
    return EvalReport(
        ap=ap,
        map=mean_ap,
        map_over_c=map_over_c(100.0 * mean_ap, meta.parameter_count_millions),
        fps=fps_from_times(meta.inference_ms) if meta.inference_ms else None,
        counts=counts,
        class_names=dict(gt.classes),
        model=meta.name,
        training_hours=meta.training_hours,
        iou_threshold=iou_threshold,
    )


def load_detections(path) -> List[Detection]:
    """Read a COCO results array of ``{image_id, category_id, bbox, score}``."""
    doc = _parse_json(Path(path))
    if not isinstance(doc, list):
        raise ParseError(f"{path}: expected a JSON array of detections")
    out = []
    for pos, entry in enumerate(doc):
        try:
            x, y, w, h = (float(v) for v in entry["bbox"])
            out.append(Detection(str(entry["image_id"]), BoundingBox(x, y, w, h), int(entry["category_id"]), float(entry["score"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: detection #{pos} malformed ({exc})") from exc
    return out


def load_meta(path) -> ModelMeta:
    """Read the model sidecar: ``name``, ``params_m``, optional ``inference_ms`` and ``training_hours``."""
    doc = _parse_json(Path(path))
    try:
        return ModelMeta(
            name=str(doc.get("name", "")),
            parameter_count_millions=float(doc["params_m"]),
            inference_ms=tuple(doc["inference_ms"]) if doc.get("inference_ms") else None,
            training_hours=float(doc["training_hours"]) if doc.get("training_hours") is not None else None,
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ParseError(f"{path}: malformed model metadata ({exc})") from exc
