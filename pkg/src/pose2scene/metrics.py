"""Detection and multi-hypothesis metrics: per-class AP / mAP@0.5, MMD and TMD."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .geom import OrientedBox3D, ScoredBox, box_corners, oriented_iou
from .synthgen.scene import SceneAnnotation

__all__ = [
    "APResult",
    "EvalReport",
    "average_precision",
    "interpolated_ap",
    "mmd",
    "MMDResult",
    "tmd",
    "tmd_object",
    "box_distance",
    "group_hypotheses_by_object",
]


@dataclass
class APResult:
    per_class_ap: dict[int, float]
    map: float
    counts: dict[int, int]
    curves: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)


def interpolated_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the precision envelope (all-points interpolation)."""
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def average_precision(
    predictions: Sequence[Sequence[ScoredBox]],
    gts: Sequence[SceneAnnotation],
    iou_threshold: float = 0.5,
) -> APResult:
    """Per-class AP over a set of sequences, ranked by objectness.

    Each prediction, in descending confidence, takes the highest-IoU unmatched
    ground truth of its class in the same sequence when that IoU reaches the
    threshold. mAP averages over classes that have ground truth.
    """
    if len(predictions) != len(gts):
        raise ValueError("predictions and ground truth must cover the same sequences")
    counts: Counter[int] = Counter()
    for scene in gts:
        counts.update(scene.class_ids)
    ranked: dict[int, list[tuple[float, int, int]]] = {}
    for s, preds in enumerate(predictions):
        for i, p in enumerate(preds):
            ranked.setdefault(p.class_id, []).append((p.objectness, s, i))

    per_class, curves = {}, {}
    for cls in sorted(counts):
        entries = sorted(ranked.get(cls, []), key=lambda e: -e[0])
        used: set[tuple[int, int]] = set()
        tp = np.zeros(len(entries))
        for r, (_, s, i) in enumerate(entries):
            box = predictions[s][i].box
            best, best_iou = None, -1.0
            for g, (gcls, gbox) in enumerate(gts[s].objects):
                if gcls != cls or (s, g) in used:
                    continue
                iou = oriented_iou(box, gbox)
                if iou >= iou_threshold and iou > best_iou:
                    best, best_iou = g, iou
            if best is not None:
                used.add((s, best))
                tp[r] = 1
        ctp, cfp = np.cumsum(tp), np.cumsum(1 - tp)
        recall = ctp / counts[cls]
        precision = ctp / np.maximum(ctp + cfp, np.finfo(float).eps)
        per_class[cls] = interpolated_ap(recall, precision) if entries else 0.0
        curves[cls] = (recall, precision)
    m = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return APResult(per_class, m, dict(counts), curves)


@dataclass
class MMDResult:
    value: float
    best_index: int
    per_index: list[float]
    per_sequence: float
    per_sequence_choice: list[int]


def mmd(hypotheses: Sequence[Sequence], gts: Sequence[SceneAnnotation], iou_threshold: float = 0.5) -> MMDResult:
    """Best mAP over hypothesis indices.

    ``hypotheses[s][h]`` is the h-th hypothesis (a SceneHypothesis or a list of
    ScoredBox) for sequence s. ``value`` picks one index for the whole dataset;
    ``per_sequence`` lets each sequence pick its own best hypothesis.
    """
    counts = {len(h) for h in hypotheses}
    if len(counts) != 1 or 0 in counts:
        raise ValueError(f"every sequence needs the same non-zero hypothesis count, got {sorted(counts)}")
    n_h = counts.pop()

    def boxes(h):
        return list(getattr(h, "boxes", h))

    per_index = [
        average_precision([boxes(seq[h]) for seq in hypotheses], gts, iou_threshold).map for h in range(n_h)
    ]
    choice = []
    for seq, gt in zip(hypotheses, gts):
        scores = [average_precision([boxes(seq[h])], [gt], iou_threshold).map for h in range(n_h)]
        choice.append(int(np.argmax(scores)))
    per_seq = average_precision([boxes(seq[c]) for seq, c in zip(hypotheses, choice)], gts, iou_threshold).map
    best = int(np.argmax(per_index))
    return MMDResult(per_index[best], best, per_index, per_seq, choice)


def box_distance(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """Mean Euclidean distance between corresponding corners."""
    return float(np.linalg.norm(box_corners(a) - box_corners(b), axis=1).mean())


def tmd_object(classes: Sequence[int], boxes: Sequence[OrientedBox3D]) -> float:
    """[1 + entropy of labels (nats)] * [1 + (1/H) sum_p sum_q corner distance]."""
    h = len(boxes)
    if h == 0 or len(classes) != h:
        raise ValueError("need matching, non-empty class and box lists")
    freq = np.array(list(Counter(classes).values()), dtype=np.float64) / h
    entropy = float(-(freq * np.log(freq)).sum())
    corners = np.stack([box_corners(b) for b in boxes])
    dists = np.linalg.norm(corners[:, None] - corners[None], axis=-1).mean(-1)
    div = float(dists.sum()) / h
    return (1.0 + entropy) * (1.0 + div)


def tmd(per_object_hypotheses: Sequence[Sequence[tuple[int, OrientedBox3D]]]) -> float:
    """Mean TMD over objects; each entry is that object's list of (class, box) hypotheses."""
    if not per_object_hypotheses:
        return float("nan")
    values = [tmd_object([c for c, _ in obj], [b for _, b in obj]) for obj in per_object_hypotheses]
    return float(np.mean(values))


def _nearest(boxes: Sequence[ScoredBox], center: np.ndarray, radius: float):
    best, best_d = None, math.inf
    for b in boxes:
        d = float(np.linalg.norm(b.box.center - center))
        if d <= radius and d < best_d:
            best, best_d = b, d
    return best


def group_hypotheses_by_object(
    gt: SceneAnnotation,
    hypotheses: Sequence,
    ml_boxes: Sequence[ScoredBox] = (),
    radius: float = 1.0,
) -> list[list[tuple[int, OrientedBox3D]]]:
    """Collect, per ground-truth object, the nearest box (within ``radius``) of every hypothesis.

    Hypotheses without a match are filled with the object's maximum-likelihood
    box (or, failing that, its first matched hypothesis box). Objects matched by
    no hypothesis and no ML box are left out.
    """
    grouped = []
    for _, gbox in gt.objects:
        matches = [_nearest(list(getattr(h, "boxes", h)), gbox.center, radius) for h in hypotheses]
        fallback = _nearest(list(ml_boxes), gbox.center, radius)
        if fallback is None:
            fallback = next((m for m in matches if m is not None), None)
        if fallback is None:
            continue
        grouped.append([((m or fallback).class_id, (m or fallback).box) for m in matches])
    return grouped


@dataclass
class EvalReport:
    per_class_ap: dict[str, float]
    map50: float
    mmd: float
    mmd_per_sequence: float
    tmd: float
    counts: dict[str, int]
    num_sequences: int = 0
    num_hypotheses: int = 0
    notes: dict = field(default_factory=lambda: {
        "entropy": "natural log",
        "mmd": "max over hypothesis index across all sequences; per-sequence variant in mmd_per_sequence",
        "ap": "all-points interpolated precision envelope, IoU >= 0.5",
    })

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        width = max([len(k) for k in self.per_class_ap] + [10])
        lines = [f"{'class':<{width}}  {'#gt':>5}  {'AP@0.5':>7}"]
        for name, ap in self.per_class_ap.items():
            lines.append(f"{name:<{width}}  {self.counts.get(name, 0):>5}  {100 * ap:7.2f}")
        lines.append("-" * len(lines[0]))
        lines.append(f"{'mAP@0.5':<{width}}  {'':>5}  {100 * self.map50:7.2f}")
        lines.append(f"{'MMD':<{width}}  {'':>5}  {100 * self.mmd:7.2f}")
        lines.append(f"{'MMD/seq':<{width}}  {'':>5}  {100 * self.mmd_per_sequence:7.2f}")
        tmd_txt = "n/a" if math.isnan(self.tmd) else f"{self.tmd:7.3f}"
        lines.append(f"{'TMD':<{width}}  {'':>5}  {tmd_txt:>7}")
        return "\n".join(lines)
