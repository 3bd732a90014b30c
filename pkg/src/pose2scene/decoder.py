"""Probabilistic mixture decoder over box center offset, log-size and (sin, cos) yaw."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .geom import OrientedBox3D, ScoredBox, nms3d
from .layers import MLP

__all__ = [
    "TARGET_DIMS",
    "LOGVAR_RANGE",
    "MixtureDecoder",
    "SceneHypothesis",
    "decode_boxes",
    "postprocess",
    "propose_hypotheses",
    "hypothesis_generator",
]

TARGET_DIMS = {"center": 3, "size": 3, "orientation": 2}
LOGVAR_RANGE = (-10.0, 4.0)
NMS_IOU = 0.1
OBJECTNESS_THRESHOLD = 0.5


class MixtureDecoder(nn.Module):
    """Objectness/class heads plus a bank of P diagonal Gaussians per regression target.

    The Gaussian banks are free parameters shared by all clusters; each
    cluster only chooses per-mode weights in [0, 1] through a sigmoid head.
    """

    def __init__(self, d2: int, num_classes: int, num_modes: int, hidden: int = 128, logvar_init: float = -5.0):
        super().__init__()
        self.num_classes = num_classes
        self.num_modes = num_modes
        self.heads = MLP(d2, [hidden, hidden, 2 + num_classes])
        self.score_heads = nn.ModuleDict(
            {t: MLP(d2, [hidden, hidden, hidden, num_modes]) for t in TARGET_DIMS}
        )
        self.mode_mean = nn.ParameterDict(
            {t: nn.Parameter(0.1 * torch.randn(num_modes, d)) for t, d in TARGET_DIMS.items()}
        )
        self.mode_logvar = nn.ParameterDict(
            {t: nn.Parameter(torch.full((num_modes, d), logvar_init)) for t, d in TARGET_DIMS.items()}
        )

    def head_logits(self, pc: torch.Tensor):
        out = self.heads(pc)
        return out[..., :2], out[..., 2:]

    def head_probs(self, pc: torch.Tensor):
        obj, cls = self.head_logits(pc)
        return torch.softmax(obj, -1), torch.softmax(cls, -1)

    def mode_scores(self, pc: torch.Tensor) -> dict[str, torch.Tensor]:
        return {t: torch.sigmoid(head(pc)) for t, head in self.score_heads.items()}

    def mode_std(self, target: str) -> torch.Tensor:
        return torch.exp(0.5 * self.mode_logvar[target].clamp(*LOGVAR_RANGE))

    def decode_train(self, pc, scores=None, noise=None, generator=None) -> dict[str, torch.Tensor]:
        """y = sum_k f_k (mu_k + sigma_k * eps_k), one eps draw per cluster and mode."""
        scores = self.mode_scores(pc) if scores is None else scores
        out = {}
        for t, d in TARGET_DIMS.items():
            shape = (*pc.shape[:-1], self.num_modes, d)
            eps = noise[t] if noise is not None else torch.randn(shape, generator=generator, dtype=pc.dtype)
            draws = self.mode_mean[t] + self.mode_std(t) * eps
            out[t] = (scores[t][..., None] * draws).sum(-2)
        return out

    def decode_ml(self, pc, scores=None) -> dict[str, torch.Tensor]:
        scores = self.mode_scores(pc) if scores is None else scores
        return {t: scores[t] @ self.mode_mean[t] for t in TARGET_DIMS}

    def decode_sample(self, pc, generator=None, num_samples: int = 1, scores=None, return_masks: bool = False):
        """Bernoulli-masked mixture draws, shape (num_samples, ..., d) per target.

        With ``return_masks`` also returns the inclusion masks (num_samples, ..., P).
        """
        scores = self.mode_scores(pc) if scores is None else scores
        out, masks = {}, {}
        for t, d in TARGET_DIMS.items():
            f = scores[t].expand(num_samples, *scores[t].shape)
            keep = torch.bernoulli(f, generator=generator)
            eps = torch.randn((*f.shape, d), generator=generator, dtype=pc.dtype)
            draws = self.mode_mean[t] + self.mode_std(t) * eps
            out[t] = (keep[..., None] * draws).sum(-2)
            masks[t] = keep
        return (out, masks) if return_masks else out


@dataclass
class SceneHypothesis:
    boxes: list[ScoredBox]
    hypothesis_id: int = 0
    num_samples: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(b.objectness <= OBJECTNESS_THRESHOLD for b in self.boxes):
            raise ValueError("hypothesis boxes must clear the objectness threshold")


def _yaw(sin_cos) -> float:
    s, c = float(sin_cos[0]), float(sin_cos[1])
    if math.hypot(s, c) < 1e-12:
        return 0.0
    return math.atan2(s, c)


def decode_boxes(cluster_centers, y, objectness, class_probs, class_ids=None) -> list[ScoredBox]:
    """Turn raw regression vectors for V clusters into scored boxes.

    center = cluster center + y_center, size = exp(y_size), yaw = atan2(sin, cos).
    ``class_ids`` overrides the argmax class (used for sampled labels).
    """
    vc = np.asarray(cluster_centers, dtype=np.float64)
    yc = np.asarray(y["center"], dtype=np.float64)
    ys = np.asarray(y["size"], dtype=np.float64)
    yt = np.asarray(y["orientation"], dtype=np.float64)
    obj = np.asarray(objectness, dtype=np.float64)
    probs = np.asarray(class_probs, dtype=np.float64)
    probs = probs / probs.sum(-1, keepdims=True)
    if class_ids is None:
        class_ids = probs.argmax(-1)
    boxes = []
    for i in range(len(vc)):
        size = np.exp(np.clip(ys[i], -20.0, 20.0))
        box = OrientedBox3D(vc[i] + yc[i], np.maximum(size, 1e-9), _yaw(yt[i]))
        boxes.append(ScoredBox(box, int(class_ids[i]), float(np.clip(obj[i], 0.0, 1.0)), probs[i]))
    return boxes


def postprocess(boxes: list[ScoredBox], nms_iou: float = NMS_IOU, threshold: float = OBJECTNESS_THRESHOLD):
    """3D NMS, then drop boxes with objectness <= threshold."""
    return [b for b in nms3d(boxes, nms_iou) if b.objectness > threshold]


def hypothesis_generator(seed: int, hypothesis_id: int) -> torch.Generator:
    state = np.random.SeedSequence([seed, hypothesis_id]).generate_state(2, dtype=np.uint32)
    return torch.Generator().manual_seed(int(state[0]) << 32 | int(state[1]))


@torch.no_grad()
def propose_hypotheses(
    decoder: MixtureDecoder,
    cluster_centers: torch.Tensor,
    cluster_features: torch.Tensor,
    num_hypotheses: int,
    seed: int = 0,
    max_samples: int = 100,
    nms_iou: float = NMS_IOU,
    threshold: float = OBJECTNESS_THRESHOLD,
) -> list[SceneHypothesis]:
    """Sample scene hypotheses for one sequence (clusters V x 3, features V x d2).

    Each hypothesis averages N_s ~ U{1..max_samples} Bernoulli-masked draws
    per cluster, samples one class label per cluster, and is post-processed
    with NMS and the objectness threshold.
    """
    if num_hypotheses < 1:
        raise ValueError("num_hypotheses must be >= 1")
    obj, cls = decoder.head_probs(cluster_features)
    scores = decoder.mode_scores(cluster_features)
    centers = cluster_centers.cpu().numpy()
    out = []
    for h in range(num_hypotheses):
        gen = hypothesis_generator(seed, h)
        n_s = int(torch.randint(1, max_samples + 1, (1,), generator=gen))
        draws = decoder.decode_sample(cluster_features, gen, n_s, scores=scores)
        y = {t: v.mean(0).cpu().numpy() for t, v in draws.items()}
        labels = torch.multinomial(cls, 1, generator=gen).squeeze(-1).cpu().numpy()
        boxes = decode_boxes(centers, y, obj[:, 1].cpu().numpy(), cls.cpu().numpy(), labels)
        out.append(SceneHypothesis(postprocess(boxes, nms_iou, threshold), h, n_s))
    return out
