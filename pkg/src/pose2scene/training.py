"""Training configuration, learning-rate schedule and the deterministic training loop."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .layers import ConfigurationError
from .losses import LossWeights, assign_targets, total_loss
from .model import ModelConfig, SceneFromPoseNet
from .synthgen.augment import augment
from .synthgen.dataset import Dataset
from .synthgen.motion import resample_frames

__all__ = [
    "TrainConfig",
    "TrainResult",
    "NumericalAbort",
    "lr_at_epoch",
    "batch_frames",
    "train",
]

log = logging.getLogger(__name__)


class NumericalAbort(RuntimeError):
    """Raised when the loss turns non-finite; ``dump_path`` holds the offending batch if saved."""

    def __init__(self, message: str, dump_path: Path | None = None):
        super().__init__(message)
        self.dump_path = dump_path


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 180
    lr: float = 1e-3
    lr_decay: float = 0.1
    decay_start: int = 80
    decay_every: int = 40
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    grad_clip: float = 10.0
    val_fraction: float = 0.1
    augment: bool = True
    seed: int = 0
    max_steps: int | None = None
    eval_every: int = 1
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if min(self.batch_size, self.epochs, self.decay_every, self.eval_every) < 1:
            raise ConfigurationError("batch_size, epochs, decay_every and eval_every must be positive")
        if self.lr <= 0 or self.grad_clip <= 0 or self.adam_eps <= 0:
            raise ConfigurationError("lr, grad_clip and adam_eps must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError("lr_decay must be in (0, 1] so the schedule never increases")
        if self.decay_start < 0 or not 0 <= self.val_fraction < 1:
            raise ConfigurationError("decay_start must be >= 0 and val_fraction in [0, 1)")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigurationError("max_steps must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["weights"] = asdict(self.weights)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown training options: {sorted(unknown)}")
        try:
            if "weights" in d:
                d["weights"] = LossWeights(**d["weights"])
            if "model" in d:
                d["model"] = ModelConfig.from_dict(d["model"])
            if "betas" in d:
                d["betas"] = tuple(d["betas"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def lr_at_epoch(epoch: int, config: TrainConfig = TrainConfig()) -> float:
    """Learning rate for a 1-based epoch: constant through ``decay_start``, then stepped."""
    if epoch < 1:
        raise ValueError("epochs are 1-based")
    if epoch <= config.decay_start:
        return config.lr
    steps = math.ceil((epoch - config.decay_start) / config.decay_every)
    return config.lr * config.lr_decay**steps


@dataclass
class TrainResult:
    model: SceneFromPoseNet
    optimizer: torch.optim.Optimizer
    history: list[dict]
    val_history: list[dict]
    epoch: int
    step: int
    best_path: Path | None = None
    last_path: Path | None = None


def batch_frames(trajectories, num_frames: int) -> torch.Tensor:
    return torch.as_tensor(
        np.stack([resample_frames(t, num_frames).frames for t in trajectories]), dtype=torch.float32
    )


def _validation_split(ids: Sequence[int], fraction: float, seed: int) -> tuple[list[int], list[int]]:
    ids = list(ids)
    n_val = int(round(fraction * len(ids)))
    if n_val == 0 or n_val >= len(ids):
        return ids, ids
    order = np.random.default_rng([seed, 7]).permutation(len(ids))
    val = sorted(ids[i] for i in order[:n_val])
    return [i for i in ids if i not in set(val)], val


def _dump_batch(out_dir: Path | None, step: int, ids, frames, terms) -> Path | None:
    if out_dir is None:
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"nan_batch_step{step}.npz"
    np.savez(path, sequence_ids=np.asarray(ids), frames=frames.detach().numpy(),
             terms=json.dumps({k: v.item() for k, v in terms.items()}))
    return path


def train(
    config: TrainConfig,
    dataset: Dataset,
    train_ids: Sequence[int] | None = None,
    out_dir: str | Path | None = None,
    on_step: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train from scratch; deterministic given (config, dataset, train_ids).

    A ``val_fraction`` slice of ``train_ids`` is held out for per-epoch mAP
    monitoring (the training ids themselves are used when the slice would be
    empty). With ``out_dir`` set, ``best.ckpt`` and ``last.ckpt`` are written.
    """
    from .checkpoint import save_checkpoint
    from .evaluation import evaluate_ml

    if dataset.num_classes != config.model.num_classes:
        raise ConfigurationError(
            f"model has {config.model.num_classes} classes but dataset has {dataset.num_classes}"
        )
    ids = list(train_ids) if train_ids is not None else [s.sequence_id for s in dataset.sequences]
    if not ids:
        raise ConfigurationError("no training sequences")
    fit_ids, val_ids = _validation_split(ids, config.val_fraction, config.seed)
    out = Path(out_dir) if out_dir is not None else None

    torch.manual_seed(config.seed)
    model = SceneFromPoseNet(dataset.skeleton, config.model)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr, betas=config.betas, eps=config.adam_eps)
    noise_gen = torch.Generator().manual_seed(config.seed)
    lookup = dataset.by_id()
    records = [lookup[i] for i in fit_ids]

    history, val_history = [], []
    step, best, epoch = 0, -1.0, 0
    best_path = last_path = None
    done = False
    for epoch in range(1, config.epochs + 1):
        lr = lr_at_epoch(epoch, config)
        for group in opt.param_groups:
            group["lr"] = lr
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(records))
        model.train()
        for start in range(0, len(order), config.batch_size):
            chunk = [records[i] for i in order[start:start + config.batch_size]]
            trajs, scenes = [], []
            for rec in chunk:
                traj, scene = rec.trajectory, rec.scene
                if config.augment:
                    traj, scene = augment(traj, scene, rng, dataset.skeleton)
                trajs.append(traj)
                scenes.append(scene)
            frames = batch_frames(trajs, config.model.num_frames)
            outputs = model(frames, generator=noise_gen)
            assignment = assign_targets(outputs["seeds"], outputs["cluster_centers"], scenes)
            loss, terms = total_loss(outputs, assignment, config.weights)
            step += 1
            if not torch.isfinite(loss):
                dump = _dump_batch(out, step, [r.sequence_id for r in chunk], frames, terms)
                raise NumericalAbort(f"non-finite loss at epoch {epoch}, step {step}: {terms}", dump)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            opt.step()
            record = {"step": step, "epoch": epoch, "lr": lr, "total": loss.item()}
            record.update({k: v.item() for k, v in terms.items()})
            history.append(record)
            log.debug("step", extra={"record": record})
            if on_step is not None:
                on_step(record)
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break
        if epoch % config.eval_every == 0 or done or epoch == config.epochs:
            report = evaluate_ml(model, dataset, val_ids)
            val_history.append({"epoch": epoch, "step": step, "map50": report.map})
            log.info("epoch %d step %d loss %.4f val mAP %.4f", epoch, step, history[-1]["total"], report.map)
            if out is not None:
                meta = {"history": history, "val_history": val_history}
                if report.map > best:
                    best = report.map
                    best_path = save_checkpoint(out / "best.ckpt", model, opt, config, dataset, epoch, step, meta)
                last_path = save_checkpoint(out / "last.ckpt", model, opt, config, dataset, epoch, step, meta)
        if done:
            break
    return TrainResult(model, opt, history, val_history, epoch, step, best_path, last_path)
