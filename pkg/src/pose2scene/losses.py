"""Target assignment and the weighted six-term training loss."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .synthgen.scene import SceneAnnotation

__all__ = [
    "LossWeights",
    "TargetAssignment",
    "assign_targets",
    "huber",
    "total_loss",
    "POSITIVE",
    "NEGATIVE",
    "IGNORE",
]

log = logging.getLogger(__name__)

POSITIVE, NEGATIVE, IGNORE = 1, 0, -1
LOSS_TERMS = ("objectness", "class", "vote", "center", "size", "orientation")


@dataclass(frozen=True)
class LossWeights:
    objectness: float = 5.0
    cls: float = 1.0
    vote: float = 10.0
    center: float = 10.0
    size: float = 10.0
    orientation: float = 10.0

    def __post_init__(self):
        if min(asdict(self).values()) < 0:
            raise ValueError("loss weights must be non-negative")

    def as_terms(self) -> dict[str, float]:
        d = asdict(self)
        d["class"] = d.pop("cls")
        return d


@dataclass
class TargetAssignment:
    """Supervision for one batch.

    Seeds: vote_target (B, M, 3), vote_mask (B, M).
    Clusters: objectness_label (B, V) in {1, 0, -1}; class_target (B, V);
    center_target (B, V, 3) holds the matched ground-truth center (the offset
    target is this minus the cluster center); size_target (B, V, 3) is
    log-size; orientation_target (B, V, 2) is (sin, cos) of yaw.
    """

    vote_target: torch.Tensor
    vote_mask: torch.Tensor
    objectness_label: torch.Tensor
    class_target: torch.Tensor
    center_target: torch.Tensor
    size_target: torch.Tensor
    orientation_target: torch.Tensor


def _scene_arrays(scene: SceneAnnotation):
    centers = np.array([b.center for b in scene.boxes])
    log_sizes = np.log(np.array([b.size for b in scene.boxes]))
    yaw = np.array([b.yaw for b in scene.boxes])
    return centers, log_sizes, np.stack([np.sin(yaw), np.cos(yaw)], -1), np.array(scene.class_ids)


@torch.no_grad()
def assign_targets(
    seeds: torch.Tensor,
    cluster_centers: torch.Tensor,
    scenes: Sequence[SceneAnnotation],
    d_p: float = 1.0,
    bands: tuple[float, float] = (0.3, 0.6),
) -> TargetAssignment:
    """Assign seeds to nearby objects and label clusters by distance bands.

    A seed votes for the ground-truth center nearest in the ground plane if it
    lies within ``d_p``, otherwise it is masked. A cluster is positive when its
    center is within ``bands[0]`` of the nearest ground-truth center (3D), negative
    beyond ``bands[1]``, ignored in between.
    """
    b, m = seeds.shape[:2]
    v = cluster_centers.shape[1]
    s = seeds.detach().cpu().double().numpy()
    c = cluster_centers.detach().cpu().double().numpy()
    vote_target = np.zeros((b, m, 3))
    vote_mask = np.zeros((b, m), dtype=bool)
    label = np.full((b, v), NEGATIVE, dtype=np.int64)
    cls_t = np.zeros((b, v), dtype=np.int64)
    center_t = np.zeros((b, v, 3))
    size_t = np.zeros((b, v, 3))
    orient_t = np.zeros((b, v, 2))
    for i, scene in enumerate(scenes):
        if not scene.objects:
            raise ValueError("scene has no objects")
        centers, log_sizes, orient, classes = _scene_arrays(scene)
        seed_d = np.linalg.norm(s[i, :, None, :2] - centers[None, :, :2], axis=-1)
        nearest = seed_d.argmin(1)
        vote_mask[i] = seed_d[np.arange(m), nearest] <= d_p
        vote_target[i] = centers[nearest]
        clus_d = np.linalg.norm(c[i, :, None, :] - centers[None], axis=-1)
        near = clus_d.argmin(1)
        dist = clus_d[np.arange(v), near]
        label[i] = np.where(dist <= bands[0], POSITIVE, np.where(dist >= bands[1], NEGATIVE, IGNORE))
        cls_t[i] = classes[near]
        center_t[i] = centers[near]
        size_t[i] = log_sizes[near]
        orient_t[i] = orient[near]
    dtype = seeds.dtype
    return TargetAssignment(
        torch.as_tensor(vote_target, dtype=dtype),
        torch.as_tensor(vote_mask),
        torch.as_tensor(label),
        torch.as_tensor(cls_t),
        torch.as_tensor(center_t, dtype=dtype),
        torch.as_tensor(size_t, dtype=dtype),
        torch.as_tensor(orient_t, dtype=dtype),
    )


def huber(residual: torch.Tensor, delta: float = 1.0) -> torch.Tensor:
    """Per-row Huber loss summed over the last dimension (0.5 r^2 / delta inside the band)."""
    a = residual.abs()
    per = torch.where(a <= delta, 0.5 * a * a / delta, a - 0.5 * delta)
    return per.sum(-1)


def _masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    count = mask.sum()
    if count == 0:
        return values.sum() * 0.0
    return (values * mask).sum() / count


def total_loss(outputs: dict, assignment: TargetAssignment, weights: LossWeights = LossWeights(), delta: float = 1.0):
    """Weighted sum of the six terms; returns (total, {term: value})."""
    obj_logits = outputs["objectness_logits"]
    cls_logits = outputs["class_logits"]
    y = outputs["y"]
    label = assignment.objectness_label
    labelled = (label != IGNORE).to(obj_logits.dtype)
    positive = (label == POSITIVE).to(obj_logits.dtype)

    obj_ce = F.cross_entropy(obj_logits.flatten(0, 1), label.clamp(min=0).flatten(), reduction="none")
    cls_ce = F.cross_entropy(cls_logits.flatten(0, 1), assignment.class_target.flatten(), reduction="none")
    terms = {
        "objectness": _masked_mean(obj_ce, labelled.flatten()),
        "class": _masked_mean(cls_ce, positive.flatten()),
        "vote": _masked_mean(
            huber(outputs["votes"] - assignment.vote_target, delta),
            assignment.vote_mask.to(obj_logits.dtype),
        ),
        "center": _masked_mean(
            huber(outputs["box_centers"] - assignment.center_target, delta), positive
        ),
        "size": _masked_mean(huber(y["size"] - assignment.size_target, delta), positive),
        "orientation": _masked_mean(huber(y["orientation"] - assignment.orientation_target, delta), positive),
    }
    lam = weights.as_terms()
    total = sum(lam[k] * terms[k] for k in LOSS_TERMS)
    return total, terms
