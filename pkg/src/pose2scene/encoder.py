"""Relative position encoding and the spatio-temporal pose encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .layers import MLP, ConfigurationError
from .synthgen.skeleton import SkeletonSpec

__all__ = [
    "EncoderConfig",
    "root_joints",
    "temporal_neighbors",
    "RelativePositionEncoder",
    "GraphConv",
    "STBlock",
    "STPoseEncoder",
    "normalized_adjacency",
]


@dataclass(frozen=True)
class EncoderConfig:
    d1: int = 64
    d2: int = 256
    k: int = 20
    blocks: int = 6
    temporal_kernel: int = 3

    def __post_init__(self):
        if min(self.d1, self.d2, self.k, self.blocks, self.temporal_kernel) <= 0:
            raise ConfigurationError("encoder sizes must be positive")
        if self.temporal_kernel % 2 == 0:
            raise ConfigurationError("temporal_kernel must be odd")


def root_joints(frames, skeleton: SkeletonSpec):
    """Per-frame centroid of the hip joints; works on numpy arrays and tensors (..., J, 3)."""
    hips = list(skeleton.hip_joint_ids)
    if max(hips) >= frames.shape[-2]:
        raise ConfigurationError("hip joint index exceeds joint count")
    return frames[..., hips, :].mean(-2)


def temporal_neighbors(n: int, k: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Indices (n, k) of each frame's k nearest frames in time, excluding itself.

    The window takes k//2 frames before and k - k//2 after and is clipped at
    the sequence ends. Clipped slots point back at the frame itself and carry
    zero weight; rows are normalized to sum to one. A frame with no neighbours
    averages over its own (zero) offset.
    """
    before = k // 2
    offsets = np.concatenate([np.arange(-before, 0), np.arange(1, k - before + 1)])
    idx = np.arange(n)[:, None] + offsets[None, :]
    valid = (idx >= 0) & (idx < n)
    idx = np.where(valid, idx, np.arange(n)[:, None])
    counts = valid.sum(axis=1, keepdims=True)
    weights = np.where(counts > 0, valid / np.maximum(counts, 1), 1.0 / k)
    return torch.as_tensor(idx), torch.as_tensor(weights)


class RelativePositionEncoder(nn.Module):
    """P^r = f2(T - r) + mean_k f1(N(r) - r), the second term broadcast over joints."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.f1 = MLP(3, [config.d1, config.d1])
        self.f2 = MLP(3, [config.d1, config.d1])

    def forward(self, frames: torch.Tensor, root: torch.Tensor) -> torch.Tensor:
        n = frames.shape[1]
        idx, w = temporal_neighbors(n, self.config.k)
        w = w.to(frames)
        neigh = root[:, idx] - root[:, :, None]  # B, N, k, 3
        q = (self.f1(neigh) * w[None, :, :, None]).sum(2)
        p = self.f2(frames - root[:, :, None])
        return p + q[:, :, None]


def normalized_adjacency(skeleton: SkeletonSpec) -> torch.Tensor:
    a = skeleton.adjacency() + np.eye(skeleton.joint_count)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return torch.as_tensor(a * d[:, None] * d[None, :], dtype=torch.float32)


class GraphConv(nn.Module):
    """ReLU(BN(A_hat X W)) over the skeleton graph, on (B, C, N, J) features."""

    def __init__(self, adjacency: torch.Tensor, channels: int):
        super().__init__()
        self.register_buffer("adjacency", adjacency)
        self.linear = nn.Conv2d(channels, channels, 1)
        self.norm = nn.BatchNorm2d(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.matmul(x, self.adjacency)  # adjacency is symmetric
        return torch.relu(self.norm(self.linear(h)))


class STBlock(nn.Module):
    """x + TemporalConv(GraphConv(x)); the temporal conv runs along frames for each joint."""

    def __init__(self, adjacency: torch.Tensor, channels: int, kernel: int):
        super().__init__()
        self.graph = GraphConv(adjacency, channels)
        self.temporal = nn.Conv2d(channels, channels, (kernel, 1), padding=(kernel // 2, 0))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.temporal(self.graph(x))


class STPoseEncoder(nn.Module):
    def __init__(self, skeleton: SkeletonSpec, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.num_joints = skeleton.joint_count
        adj = normalized_adjacency(skeleton)
        self.blocks = nn.ModuleList(
            STBlock(adj, config.d1, config.temporal_kernel) for _ in range(config.blocks)
        )
        self.out = MLP(self.num_joints * config.d1, [config.d2])

    def forward(self, pr: torch.Tensor) -> torch.Tensor:
        if pr.shape[2] != self.num_joints or pr.shape[3] != self.config.d1:
            raise ConfigurationError(
                f"pose features {tuple(pr.shape)} do not match skeleton J={self.num_joints}, d1={self.config.d1}"
            )
        x = pr.permute(0, 3, 1, 2)  # B, C, N, J
        for block in self.blocks:
            x = block(x)
        return self.out(x.permute(0, 2, 3, 1).flatten(2))
