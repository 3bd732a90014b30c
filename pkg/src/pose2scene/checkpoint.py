"""Checkpoint archives: a zip holding a JSON manifest and raw little-endian tensor buffers.

Stored: model weights and batch-norm buffers, Adam state, epoch/step, torch
and numpy RNG state, the training config and its digest, the skeleton and class
names. Tensors keep their dtype so a reload reproduces forward outputs bitwise.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import torch

from .model import SceneFromPoseNet
from .synthgen.skeleton import SkeletonSpec

if TYPE_CHECKING:
    from .training import TrainConfig

__all__ = ["Checkpoint", "CheckpointError", "save_checkpoint", "load_checkpoint", "CHECKPOINT_VERSION"]

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: SceneFromPoseNet
    config: TrainConfig
    epoch: int
    step: int
    class_names: list[str]
    optimizer_state: dict | None = None
    torch_rng_state: torch.Tensor | None = None
    numpy_rng_state: dict | None = None
    config_digest: str = ""
    meta: dict = field(default_factory=dict)

    def make_optimizer(self) -> torch.optim.Adam:
        cfg = self.config
        opt = torch.optim.Adam(self.model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.adam_eps)
        if self.optimizer_state is not None:
            opt.load_state_dict(self.optimizer_state)
        return opt


def _put(zf: zipfile.ZipFile, entries: dict, name: str, tensor: torch.Tensor) -> None:
    arr = tensor.detach().cpu().contiguous().numpy()
    dtype = np.dtype(arr.dtype).newbyteorder("<")
    zf.writestr(f"tensors/{len(entries):05d}.bin", arr.astype(dtype, copy=False).tobytes())
    entries[name] = {"file": f"tensors/{len(entries):05d}.bin", "dtype": dtype.str, "shape": list(arr.shape)}


def _get(zf: zipfile.ZipFile, spec: dict) -> torch.Tensor:
    arr = np.frombuffer(zf.read(spec["file"]), dtype=np.dtype(spec["dtype"])).reshape(spec["shape"])
    return torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True))


def save_checkpoint(path, model, optimizer, config, dataset, epoch: int, step: int, meta: dict | None = None,
                    numpy_rng: np.random.Generator | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries: dict[str, dict] = {}
    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, t in model.state_dict().items():
            _put(zf, entries, f"model/{name}", t)
        optim_meta = None
        if optimizer is not None:
            sd = optimizer.state_dict()
            optim_meta = {"param_groups": sd["param_groups"], "state": {}}
            for pid, state in sd["state"].items():
                keys = []
                for k, v in state.items():
                    _put(zf, entries, f"optim/{pid}/{k}", torch.as_tensor(v))
                    keys.append(k)
                optim_meta["state"][str(pid)] = keys
        _put(zf, entries, "rng/torch", torch.get_rng_state())
        manifest = {
            "version": CHECKPOINT_VERSION,
            "epoch": epoch,
            "step": step,
            "config": config.to_dict(),
            "config_digest": config.digest(),
            "skeleton": dataset.skeleton.to_dict(),
            "class_names": list(dataset.class_names),
            "optimizer": optim_meta,
            "numpy_rng": None if numpy_rng is None else numpy_rng.bit_generator.state,
            "tensors": entries,
            "meta": meta or {},
        }
        zf.writestr("manifest.json", json.dumps(manifest))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    from .training import TrainConfig

    path = Path(path)
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"{path}: not a readable checkpoint ({exc})") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except (KeyError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: missing or corrupt manifest") from exc
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {manifest.get('version')!r}")
        config = TrainConfig.from_dict(manifest["config"])
        if config.digest() != manifest["config_digest"]:
            raise CheckpointError(f"{path}: config digest mismatch")
        skeleton = SkeletonSpec.from_dict(manifest["skeleton"])
        tensors = {name: _get(zf, spec) for name, spec in manifest["tensors"].items()}

    model = SceneFromPoseNet(skeleton, config.model)
    state = {k[len("model/"):]: v for k, v in tensors.items() if k.startswith("model/")}
    model.load_state_dict(state, strict=True)
    optim_state = None
    if manifest["optimizer"] is not None:
        om = manifest["optimizer"]
        optim_state = {
            "param_groups": om["param_groups"],
            "state": {int(pid): {k: tensors[f"optim/{pid}/{k}"] for k in keys} for pid, keys in om["state"].items()},
        }
    return Checkpoint(
        model=model,
        config=config,
        epoch=manifest["epoch"],
        step=manifest["step"],
        class_names=manifest["class_names"],
        optimizer_state=optim_state,
        torch_rng_state=tensors.get("rng/torch"),
        numpy_rng_state=manifest["numpy_rng"],
        config_digest=manifest["config_digest"],
        meta=manifest["meta"],
    )
