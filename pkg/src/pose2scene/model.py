"""The full pose-trajectory-to-scene network: encoders, voting, clustering and decoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import torch
import torch.nn as nn

from .decoder import MixtureDecoder
from .encoder import EncoderConfig, RelativePositionEncoder, STPoseEncoder, root_joints
from .layers import ConfigurationError
from .synthgen.skeleton import SkeletonSpec, default_skeleton, paper_skeleton
from .voting import ClusterModule, Grouping, VotingModule, group_votes, sample_seeds

__all__ = ["ModelConfig", "PRESETS", "SceneFromPoseNet"]


@dataclass(frozen=True)
class ModelConfig:
    num_frames: int = 256
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(d1=32, d2=128, k=20, blocks=6))
    num_seeds: int = 128
    num_clusters: int = 32
    radius: float = 0.6
    num_modes: int = 20
    num_classes: int = 8
    hidden: int = 128

    def __post_init__(self):
        if self.num_clusters > self.num_seeds:
            raise ConfigurationError("num_clusters cannot exceed num_seeds")
        if min(self.num_frames, self.num_seeds, self.num_clusters, self.num_modes, self.num_classes) < 1:
            raise ConfigurationError("model sizes must be positive")
        if self.radius <= 0:
            raise ConfigurationError("radius must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d.get("encoder", {}))
        return cls(**d)

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


PRESETS = {
    "desk": ModelConfig(),
    "paper": ModelConfig(
        num_frames=768,
        encoder=EncoderConfig(d1=64, d2=256, k=20, blocks=6),
        num_seeds=512,
        num_clusters=128,
        num_modes=100,
        num_classes=17,
    ),
}
PRESET_SKELETONS = {"desk": default_skeleton, "paper": paper_skeleton}


class SceneFromPoseNet(nn.Module):
    def __init__(self, skeleton: SkeletonSpec, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.skeleton = skeleton
        self.config = config
        enc = config.encoder
        self.position_encoder = RelativePositionEncoder(enc)
        self.pose_encoder = STPoseEncoder(skeleton, enc)
        self.voting = VotingModule(enc.d2)
        self.cluster = ClusterModule(enc.d2, config.radius)
        self.decoder = MixtureDecoder(enc.d2, config.num_classes, config.num_modes, config.hidden)

    def encode(self, frames: torch.Tensor):
        root = root_joints(frames, self.skeleton)
        pr = self.position_encoder(frames, root)
        return root, self.pose_encoder(pr)

    def forward(
        self,
        frames: torch.Tensor,
        grouping: Grouping | None = None,
        noise: dict | None = None,
        generator: torch.Generator | None = None,
        decode: str = "train",
    ) -> dict:
        """Run the network on a batch of trajectories (B, N, J, 3).

        ``grouping`` fixes the clustering decisions (otherwise recomputed by
        FPS + radius search); ``noise`` fixes the reparameterization draws.
        ``decode`` selects "train" (noisy weighted sum) or "ml" (mode means).
        """
        if frames.dim() != 4 or frames.shape[2] != self.skeleton.joint_count:
            raise ConfigurationError(f"expected (B, N, {self.skeleton.joint_count}, 3), got {tuple(frames.shape)}")
        root, pst = self.encode(frames)
        seed_idx, seeds, seed_feat = sample_seeds(root, pst, self.config.num_seeds)
        votes, vote_feat = self.voting(seeds, seed_feat)
        if grouping is None:
            grouping = group_votes(votes, self.config.radius, self.config.num_clusters)
        centers, pc = self.cluster(votes, vote_feat, grouping)
        obj_logits, cls_logits = self.decoder.head_logits(pc)
        scores = self.decoder.mode_scores(pc)
        if decode == "train":
            y = self.decoder.decode_train(pc, scores, noise=noise, generator=generator)
        elif decode == "ml":
            y = self.decoder.decode_ml(pc, scores)
        else:
            raise ValueError(f"unknown decode mode {decode!r}")
        return {
            "root": root,
            "pose_features": pst,
            "seed_idx": seed_idx,
            "seeds": seeds,
            "votes": votes,
            "grouping": grouping,
            "cluster_centers": centers,
            "cluster_features": pc,
            "objectness_logits": obj_logits,
            "class_logits": cls_logits,
            "mode_scores": scores,
            "y": y,
            "box_centers": centers + y["center"],
        }
