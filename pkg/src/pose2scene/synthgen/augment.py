from __future__ import annotations

import math

import numpy as np

from ..geom import OrientedBox3D
from .motion import PoseTrajectory
from .scene import SceneAnnotation
from .skeleton import SkeletonSpec

__all__ = ["apply_rigid", "augment"]


def apply_rigid(
    traj: PoseTrajectory,
    scene: SceneAnnotation,
    skeleton: SkeletonSpec,
    flip: bool = False,
    angle: float = 0.0,
    shift=(0.0, 0.0),
) -> tuple[PoseTrajectory, SceneAnnotation]:
    """Mirror x -> -x (optional), rotate about z by ``angle``, then shift horizontally.

    Mirroring also swaps left/right joint labels and negates box yaw, so an
    object's front face stays its front face.
    """
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    offset = np.array([shift[0], shift[1], 0.0])
    mirror = np.diag([-1.0, 1.0, 1.0]) if flip else np.eye(3)
    lin = rot @ mirror

    frames = traj.frames
    if flip:
        frames = frames[:, list(skeleton.mirror)]
    frames = frames @ lin.T + offset

    objects = []
    for cls, box in scene.objects:
        yaw = -box.yaw if flip else box.yaw
        objects.append((cls, OrientedBox3D(lin @ box.center + offset, box.size, yaw + angle)))
    identity = not flip and angle == 0.0 and not np.any(offset)
    room_size = scene.room_size if identity else None
    out_scene = SceneAnnotation(objects, scene.room_id, scene.sequence_id, room_size)
    return PoseTrajectory(frames, traj.frame_rate), out_scene


def augment(
    traj: PoseTrajectory,
    scene: SceneAnnotation,
    rng: np.random.Generator,
    skeleton: SkeletonSpec,
) -> tuple[PoseTrajectory, SceneAnnotation]:
    flip = bool(rng.uniform() < 0.5)
    angle = float(rng.uniform(-math.pi, math.pi))
    shift = rng.uniform(-1.0, 1.0, size=2)
    return apply_rigid(traj, scene, skeleton, flip, angle, shift)
