"""On-disk dataset format, dataset generation and train/test splits.

Layout::

    DIR/meta.json          {"version", "skeleton", "class_names", "frame_rate"}
    DIR/seq_<id>.json      {"sequence_id", "room_id", "room_size", "frames", "objects"}
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..geom import box_from_record, box_to_record
from .motion import FRAME_RATE, PoseTrajectory, UnreachableSceneError, generate_trajectory, templates_for
from .scene import DEFAULT_CLASSES, RoomSpec, SceneAnnotation, generate_scene
from .skeleton import SkeletonSpec, default_skeleton

__all__ = [
    "FORMAT_VERSION",
    "DatasetError",
    "UnsupportedVersionError",
    "SequenceRecord",
    "Dataset",
    "DatasetSplit",
    "write_dataset",
    "read_dataset",
    "generate_dataset",
    "make_splits",
]

FORMAT_VERSION = 1
log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


class UnsupportedVersionError(DatasetError):
    pass


@dataclass
class SequenceRecord:
    sequence_id: int
    trajectory: PoseTrajectory
    scene: SceneAnnotation

    @property
    def room_id(self) -> int:
        return self.scene.room_id


@dataclass
class Dataset:
    sequences: list[SequenceRecord]
    skeleton: SkeletonSpec = field(default_factory=default_skeleton)
    class_names: tuple[str, ...] = tuple(c.name for c in DEFAULT_CLASSES)
    frame_rate: float = FRAME_RATE

    def by_id(self) -> dict[int, SequenceRecord]:
        return {s.sequence_id: s for s in self.sequences}

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class DatasetSplit:
    kind: str
    train_ids: tuple[int, ...]
    test_ids: tuple[int, ...]

    def __post_init__(self):
        if set(self.train_ids) & set(self.test_ids):
            raise ValueError("train and test ids overlap")


def _sequence_to_dict(seq: SequenceRecord) -> dict:
    return {
        "sequence_id": seq.sequence_id,
        "room_id": seq.scene.room_id,
        "room_size": None if seq.scene.room_size is None else list(seq.scene.room_size),
        "frames": seq.trajectory.frames.tolist(),
        "objects": [box_to_record(box, cls) for cls, box in seq.scene.objects],
    }


def write_dataset(dataset: Dataset, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": FORMAT_VERSION,
        "skeleton": dataset.skeleton.to_dict(),
        "class_names": list(dataset.class_names),
        "frame_rate": dataset.frame_rate,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=1))
    for seq in dataset.sequences:
        # repr round-trips floats exactly
        (root / f"seq_{seq.sequence_id:05d}.json").write_text(json.dumps(_sequence_to_dict(seq)))


def _load_json(file: Path):
    try:
        return json.loads(file.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{file}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise DatasetError(f"{file}: cannot read ({exc})") from exc


def _parse_sequence(file: Path, raw: dict, frame_rate: float, num_joints: int) -> SequenceRecord:
    try:
        frames = np.asarray(raw["frames"], dtype=np.float64)
        if frames.ndim != 3 or frames.shape[1:] != (num_joints, 3):
            raise DatasetError(f"{file}: frames have shape {frames.shape}, expected N x {num_joints} x 3")
        objects = []
        for i, rec in enumerate(raw["objects"]):
            try:
                box, cls, _ = box_from_record(rec)
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{file}: object record {i} invalid ({exc!r})") from exc
            objects.append((cls, box))
        room_size = raw.get("room_size")
        scene = SceneAnnotation(
            objects,
            int(raw["room_id"]),
            int(raw["sequence_id"]),
            None if room_size is None else tuple(room_size),
        )
        return SequenceRecord(int(raw["sequence_id"]), PoseTrajectory(frames, frame_rate), scene)
    except DatasetError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{file}: invalid sequence record ({exc!r})") from exc


def read_dataset(path) -> Dataset:
    root = Path(path)
    meta_file = root / "meta.json"
    if not meta_file.exists():
        raise DatasetError(f"{root}: missing meta.json")
    meta = _load_json(meta_file)
    version = meta.get("version") if isinstance(meta, dict) else None
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{meta_file}: unsupported dataset version {version!r} (expected {FORMAT_VERSION})")
    try:
        skeleton = SkeletonSpec.from_dict(meta["skeleton"])
        class_names = tuple(meta["class_names"])
        frame_rate = float(meta["frame_rate"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{meta_file}: invalid metadata ({exc!r})") from exc
    sequences = []
    for file in sorted(root.glob("seq_*.json")):
        raw = _load_json(file)
        if not isinstance(raw, dict):
            raise DatasetError(f"{file}: expected a JSON object")
        sequences.append(_parse_sequence(file, raw, frame_rate, skeleton.joint_count))
    return Dataset(sequences, skeleton, class_names, frame_rate)


def generate_dataset(
    rooms: int,
    sequences_per_room: int,
    seed: int,
    class_set=DEFAULT_CLASSES,
    skeleton: SkeletonSpec | None = None,
    max_objects: int = 10,
    room_objects: int = 10,
    room_size_range: tuple[float, float] = (4.0, 7.0),
    noise_std: float = 0.0,
) -> Dataset:
    """Generate ``rooms * sequences_per_room`` sequences.

    Each room gets a fixed furniture layout; each sequence visits a random
    subset of at most ``max_objects`` of its objects. Every sequence draws from
    its own stream seeded by ``(seed, sequence_id)``.
    """
    skeleton = skeleton or default_skeleton()
    templates = templates_for(class_set)
    sequences = []
    for r in range(rooms):
        room_rng = np.random.default_rng([seed, 1_000_003, r])
        spec = RoomSpec(r, *room_rng.uniform(*room_size_range, size=2))
        layout = generate_scene(spec, class_set, room_rng, room_objects)
        if layout.placement_warning:
            log.warning("room %d: placed only %d objects", r, len(layout.objects))
        for k in range(sequences_per_room):
            seq_id = r * sequences_per_room + k
            rng = np.random.default_rng([seed, seq_id])
            for _ in range(100):
                count = int(rng.integers(1, min(max_objects, len(layout.objects)) + 1))
                chosen = sorted(rng.choice(len(layout.objects), size=count, replace=False).tolist())
                scene = layout.subset(chosen)
                scene.sequence_id = seq_id
                try:
                    traj, visited = generate_trajectory(scene, skeleton, templates, rng, noise_std)
                except UnreachableSceneError:
                    continue
                break
            else:
                raise UnreachableSceneError(f"sequence {seq_id}: no reachable object subset")
            visited.sequence_id = seq_id
            sequences.append(SequenceRecord(seq_id, traj, visited))
    return Dataset(sequences, skeleton, tuple(c.name for c in class_set), FRAME_RATE)


def make_splits(dataset: Dataset | Sequence[SequenceRecord], kind: str, ratio: float, rng: np.random.Generator) -> DatasetSplit:
    """Sequence-level (``"sequence"``) or room-level (``"room"``) train/test partition.

    ``ratio`` is the train fraction for sequence-level splits; room-level splits
    hold out ceil(10%) of the rooms, at least one.
    """
    seqs = dataset.sequences if isinstance(dataset, Dataset) else list(dataset)
    ids = np.array(sorted(s.sequence_id for s in seqs))
    if kind == "sequence":
        perm = rng.permutation(ids)
        n_train = int(round(len(ids) * ratio))
        return DatasetSplit(kind, tuple(sorted(perm[:n_train].tolist())), tuple(sorted(perm[n_train:].tolist())))
    if kind == "room":
        rooms = np.array(sorted({s.room_id for s in seqs}))
        n_test = max(1, math.ceil(0.1 * len(rooms)))
        test_rooms = set(rng.permutation(rooms)[:n_test].tolist())
        train = tuple(s.sequence_id for s in sorted(seqs, key=lambda s: s.sequence_id) if s.room_id not in test_rooms)
        test = tuple(s.sequence_id for s in sorted(seqs, key=lambda s: s.sequence_id) if s.room_id in test_rooms)
        return DatasetSplit(kind, train, test)
    raise ValueError(f"unknown split kind {kind!r}")
