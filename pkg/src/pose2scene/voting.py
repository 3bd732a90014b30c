"""Seeds along the root track, vote regression and radius-based vote clustering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .layers import MLP
from .synthgen.motion import uniform_indices

__all__ = [
    "sample_seeds",
    "VotingModule",
    "farthest_point_sample",
    "Grouping",
    "group_votes",
    "ClusterModule",
]


def sample_seeds(root: torch.Tensor, pst: torch.Tensor, m: int):
    """Evenly spaced seeds over the frames: returns (indices, r_s, P_s)."""
    idx = torch.as_tensor(uniform_indices(root.shape[-2], m))
    return idx, root[..., idx, :], pst[..., idx, :]


class VotingModule(nn.Module):
    """votes = seeds + f3(P_s), vote features = P_s + f4(P_s); f3/f4 share a two-layer trunk."""

    def __init__(self, d2: int):
        super().__init__()
        self.trunk = MLP(d2, [d2, d2], activate_last=True)
        self.offset_head = nn.Linear(d2, 3)
        self.feature_head = nn.Linear(d2, d2)

    def forward(self, seeds: torch.Tensor, seed_features: torch.Tensor):
        h = self.trunk(seed_features)
        return seeds + self.offset_head(h), seed_features + self.feature_head(h)


def farthest_point_sample(points: np.ndarray, count: int) -> np.ndarray:
    """Greedy farthest point sampling starting from index 0; ties pick the lowest index."""
    n = len(points)
    count = min(count, n)
    chosen = np.zeros(count, dtype=np.int64)
    dist = np.full(n, np.inf)
    current = 0
    for i in range(count):
        chosen[i] = current
        dist = np.minimum(dist, np.sum((points - points[current]) ** 2, axis=1))
        current = int(np.argmax(dist))
    return chosen


@dataclass
class Grouping:
    """Discrete clustering decisions for a batch.

    center_idx: (B, V) vote indices of the cluster centers.
    members: (B, V, M) boolean membership of each vote in each cluster.
    """

    center_idx: torch.Tensor
    members: torch.Tensor

    @property
    def member_counts(self) -> torch.Tensor:
        return self.members.sum(-1)


@torch.no_grad()
def group_votes(votes: torch.Tensor, radius: float, v: int) -> Grouping:
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = votes.detach().cpu().double().numpy()
    centers, members = [], []
    for b in range(pts.shape[0]):
        idx = farthest_point_sample(pts[b], v)
        d = np.linalg.norm(pts[b][idx][:, None, :] - pts[b][None, :, :], axis=-1)
        centers.append(idx)
        members.append(d <= radius)
    return Grouping(torch.as_tensor(np.stack(centers)), torch.as_tensor(np.stack(members)))


class ClusterModule(nn.Module):
    """Shared MLP over [(vote - center) / radius, vote feature], max-pooled over cluster members."""

    def __init__(self, d2: int, radius: float):
        super().__init__()
        self.radius = radius
        self.mlp = MLP(d2 + 3, [d2, d2])

    def forward(self, votes, vote_features, grouping: Grouping):
        b, v = grouping.center_idx.shape
        batch = torch.arange(b)[:, None]
        centers = votes[batch, grouping.center_idx]  # B, V, 3
        bi, vi, mi = torch.nonzero(grouping.members, as_tuple=True)
        rel = (votes[bi, mi] - centers[bi, vi]) / self.radius
        h = self.mlp(torch.cat([rel, vote_features[bi, mi]], dim=-1))
        flat = bi * v + vi
        pooled = h.new_full((b * v, h.shape[-1]), -torch.inf)
        pooled = pooled.scatter_reduce(0, flat[:, None].expand_as(h), h, reduce="amax", include_self=True)
        return centers, pooled.reshape(b, v, -1)
