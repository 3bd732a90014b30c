"""Procedural rooms, scripted interaction walks and the on-disk dataset format."""

from .augment import apply_rigid, augment
from .dataset import (
    Dataset,
    DatasetError,
    DatasetSplit,
    SequenceRecord,
    UnsupportedVersionError,
    generate_dataset,
    make_splits,
    read_dataset,
    write_dataset,
)
from .motion import (
    DEFAULT_TEMPLATES,
    FRAME_RATE,
    MotionTemplate,
    PoseTrajectory,
    UnreachableSceneError,
    generate_trajectory,
    resample_frames,
    templates_for,
    uniform_indices,
)
from .scene import (
    DEFAULT_CLASSES,
    TOY_CLASSES,
    ObjectClass,
    RoomSpec,
    SceneAnnotation,
    front_normal,
    generate_scene,
)
from .skeleton import SkeletonSpec, default_skeleton, paper_skeleton

__all__ = [
    "apply_rigid",
    "augment",
    "Dataset",
    "DatasetError",
    "DatasetSplit",
    "SequenceRecord",
    "UnsupportedVersionError",
    "generate_dataset",
    "make_splits",
    "read_dataset",
    "write_dataset",
    "DEFAULT_TEMPLATES",
    "FRAME_RATE",
    "MotionTemplate",
    "PoseTrajectory",
    "UnreachableSceneError",
    "generate_trajectory",
    "resample_frames",
    "templates_for",
    "uniform_indices",
    "DEFAULT_CLASSES",
    "TOY_CLASSES",
    "ObjectClass",
    "RoomSpec",
    "SceneAnnotation",
    "front_normal",
    "generate_scene",
    "SkeletonSpec",
    "default_skeleton",
    "paper_skeleton",
]
