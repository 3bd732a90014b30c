"""Procedural, template-driven animation of an agent visiting scene objects."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from shapely.geometry import LineString, Point, Polygon

from ..geom import footprint
from .scene import SceneAnnotation, front_normal
from .skeleton import SkeletonSpec

__all__ = [
    "PoseTrajectory",
    "MotionTemplate",
    "DEFAULT_TEMPLATES",
    "templates_for",
    "body_pose",
    "generate_trajectory",
    "resample_frames",
    "uniform_indices",
    "UnreachableSceneError",
    "FRAME_RATE",
]

FRAME_RATE = 5.0
HIP_HEIGHT = 0.93
THIGH = SHIN = 0.45
WALK_CLEARANCE = 0.2
STANDOFF = 0.35


class UnreachableSceneError(RuntimeError):
    pass


@dataclass
class PoseTrajectory:
    frames: np.ndarray
    frame_rate: float = FRAME_RATE

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must be N x J x 3, got {self.frames.shape}")
        if self.frames.shape[0] < 2:
            raise ValueError("a trajectory needs at least two frames")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("frames contain NaN or inf")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def root(self, skeleton: SkeletonSpec) -> np.ndarray:
        return self.frames[:, list(skeleton.hip_joint_ids)].mean(axis=1)


@dataclass(frozen=True)
class MotionTemplate:
    """A parametric interaction clip anchored to an object's front face.

    kind is one of ``sit``, ``lie`` or ``operate``. ``seat_offset`` is the
    fraction of object depth, measured from the center towards the front, where
    the hips come to rest; ``height_frac``/``height_add`` set the seat, hand or
    body height relative to the object height.
    """

    name: str
    kind: str
    hold: tuple[int, int] = (5, 9)
    seat_offset: float = 0.1
    height_frac: float = 0.5
    height_add: float = 0.0


DEFAULT_TEMPLATES: dict[str, tuple[MotionTemplate, ...]] = {
    "bed": (
        MotionTemplate("lie", "lie", (6, 10), 0.0, 1.0, 0.1),
        MotionTemplate("sit_edge", "sit", (4, 8), 0.35, 1.0, 0.0),
    ),
    "cabinet": (
        MotionTemplate("open_low", "operate", (4, 8), height_frac=0.45),
        MotionTemplate("open_high", "operate", (4, 8), height_frac=0.9),
    ),
    "chair": (MotionTemplate("sit", "sit", (5, 10), 0.1, 0.5),),
    "desk": (MotionTemplate("type", "operate", (6, 10), height_frac=1.0, height_add=0.05),),
    "fridge": (MotionTemplate("open", "operate", (4, 8), height_frac=0.55),),
    "sofa": (MotionTemplate("sit", "sit", (6, 10), 0.05, 0.55),),
    "stove": (MotionTemplate("cook", "operate", (6, 10), height_frac=1.0, height_add=0.1),),
    "toilet": (MotionTemplate("sit", "sit", (5, 9), 0.05, 0.52),),
}


def templates_for(class_set) -> dict[int, tuple[MotionTemplate, ...]]:
    return {i: DEFAULT_TEMPLATES[c.name] for i, c in enumerate(class_set)}


def body_pose(
    phase: float = 0.0,
    stride: float = 0.0,
    sit: float = 0.0,
    seat_z: float = 0.45,
    reach: float = 0.0,
    reach_z: float = 1.0,
    lie: float = 0.0,
    lie_z: float = 0.65,
) -> np.ndarray:
    """17 base joints in the body frame: x right, y forward, z up, pelvis above the origin."""
    pelvis_z = (1 - sit) * HIP_HEIGHT + sit * (seat_z + 0.1)
    j = np.zeros((17, 3))
    j[0] = (0.0, 0.0, pelvis_z)
    for hip, knee, ankle, side, ph in ((1, 2, 3, 1.0, phase), (4, 5, 6, -1.0, phase + math.pi)):
        thigh = stride * math.sin(ph) + sit * math.pi / 2
        flex = sit * math.pi / 2 + 0.5 * stride * (1 - math.cos(ph))
        j[hip] = (0.1 * side, 0.0, pelvis_z)
        j[knee] = j[hip] + THIGH * np.array([0.0, math.sin(thigh), -math.cos(thigh)])
        j[ankle] = j[knee] + SHIN * np.array([0.0, math.sin(thigh - flex), -math.cos(thigh - flex)])
    j[7] = j[0] + (0.0, 0.0, 0.2)
    j[8] = j[7] + (0.0, 0.02, 0.2)
    j[9] = j[8] + (0.0, 0.02, 0.12)
    j[10] = j[9] + (0.0, 0.05, 0.13)
    for shoulder, elbow, wrist, side, ph in ((14, 15, 16, 1.0, phase + math.pi), (11, 12, 13, -1.0, phase)):
        j[shoulder] = j[8] + (0.18 * side, 0.0, 0.05)
        swing = 0.6 * stride * math.sin(ph)
        rest_elbow = j[shoulder] + 0.28 * np.array([0.0, math.sin(swing), -math.cos(swing)])
        bend = swing + 0.2 * abs(stride)
        rest_wrist = rest_elbow + 0.26 * np.array([0.0, math.sin(bend), -math.cos(bend)])
        reach_wrist = np.array([0.15 * side, 0.5, reach_z])
        reach_elbow = 0.5 * (j[shoulder] + reach_wrist) + (0.05 * side, 0.0, -0.05)
        j[elbow] = (1 - reach) * rest_elbow + reach * reach_elbow
        j[wrist] = (1 - reach) * rest_wrist + reach * reach_wrist
    if lie > 0:
        a = lie * math.pi / 2
        rel = j - j[0]
        y = rel[:, 1] * math.cos(a) - rel[:, 2] * math.sin(a)
        z = rel[:, 1] * math.sin(a) + rel[:, 2] * math.cos(a)
        target_z = (1 - lie) * pelvis_z + lie * lie_z
        j = np.stack([rel[:, 0], y, z + target_z], axis=1)
    return j


def heading_towards(direction) -> float:
    """Heading whose forward vector R(psi) (0, 1) points along ``direction``."""
    return math.atan2(-direction[0], direction[1])


class _Animator:
    def __init__(self, skeleton: SkeletonSpec, rng: np.random.Generator, noise_std: float):
        self.skeleton = skeleton
        self.rng = rng
        self.noise_std = noise_std
        self.frames: list[np.ndarray] = []
        self.xy = np.zeros(2)
        self.psi = 0.0
        self.phase = 0.0

    def emit(self, xy, psi, **posture):
        self.xy, self.psi = np.asarray(xy, dtype=np.float64), float(psi)
        local = body_pose(**posture)
        c, s = math.cos(psi), math.sin(psi)
        world = local.copy()
        world[:, 0] = c * local[:, 0] - s * local[:, 1] + self.xy[0]
        world[:, 1] = s * local[:, 0] + c * local[:, 1] + self.xy[1]
        world = self.skeleton.expand(world)
        if self.noise_std > 0:
            world = world + self.noise_std * self.rng.standard_normal(world.shape)
        self.frames.append(world)

    def walk_to(self, goal, speed: float):
        goal = np.asarray(goal, dtype=np.float64)
        delta = goal - self.xy
        dist = float(np.linalg.norm(delta))
        if dist < 1e-9:
            return
        psi = heading_towards(delta)
        self.turn_to(psi)
        steps = max(1, math.ceil(dist / (speed / FRAME_RATE)))
        start = self.xy.copy()
        for i in range(1, steps + 1):
            self.phase += 2 * math.pi * speed / FRAME_RATE / 1.3
            self.emit(start + delta * i / steps, psi, phase=self.phase, stride=0.35)

    def turn_to(self, psi: float, frames: int = 2):
        diff = math.remainder(psi - self.psi, 2 * math.pi)
        if abs(diff) < 1e-6:
            return
        start = self.psi
        for i in range(1, frames + 1):
            self.emit(self.xy, start + diff * i / frames)

    def hold(self, frames: int, **posture):
        for _ in range(frames):
            self.emit(self.xy, self.psi, **posture)


def _blend(n: int):
    return [(i + 1) / n for i in range(n)]


def _play_clip(anim: _Animator, template: MotionTemplate, box, front_xy, rng):
    n = front_normal(box.yaw)
    height = float(box.size[2])
    hold = int(rng.integers(template.hold[0], template.hold[1] + 1))
    target_z = template.height_frac * height + template.height_add
    anim.turn_to(box.yaw + math.pi)
    if template.kind == "operate":
        for t in _blend(2):
            anim.emit(front_xy, anim.psi, reach=t, reach_z=target_z)
        for _ in range(hold):
            wobble = 1.0 - 0.15 * rng.uniform()
            anim.emit(front_xy, anim.psi, reach=wobble, reach_z=target_z + 0.05 * rng.standard_normal())
        for t in _blend(2):
            anim.emit(front_xy, anim.psi, reach=1 - t, reach_z=target_z)
        return
    seat_xy = box.center[:2] + n * template.seat_offset * box.size[1]
    anim.turn_to(box.yaw)
    key = "sit" if template.kind == "sit" else "lie"
    extra = {"seat_z": target_z} if key == "sit" else {"lie_z": target_z}
    moves = 3 if key == "sit" else 4
    for t in _blend(moves):
        anim.emit(front_xy + t * (seat_xy - front_xy), anim.psi, **{key: t}, **extra)
    for _ in range(hold):
        anim.emit(seat_xy + 0.02 * rng.standard_normal(2), anim.psi, **{key: 1.0}, **extra)
    for t in _blend(moves):
        anim.emit(seat_xy + t * (front_xy - seat_xy), anim.psi, **{key: 1 - t}, **extra)


def _clear(path: LineString, polys: Sequence[Polygon], clearance: float) -> bool:
    return all(path.distance(p) >= clearance for p in polys)


def _plan(start, goal, polys, inside, clearance=WALK_CLEARANCE):
    """Straight line, or a single detour waypoint around the blocking footprints."""
    if _clear(LineString([start, goal]), polys, clearance):
        return [goal]
    best, best_len = None, math.inf
    for poly in polys:
        ring = poly.buffer(clearance + 0.15, join_style=2).exterior.coords[:-1]
        for w in ring:
            w = np.asarray(w)
            if not inside(w):
                continue
            if not (
                _clear(LineString([start, w]), polys, clearance)
                and _clear(LineString([w, goal]), polys, clearance)
            ):
                continue
            length = np.linalg.norm(w - start) + np.linalg.norm(goal - w)
            if length < best_len:
                best, best_len = w, length
    return None if best is None else [best, goal]


def generate_trajectory(
    scene: SceneAnnotation,
    skeleton: SkeletonSpec,
    motion_templates: Mapping[int, Sequence[MotionTemplate]],
    rng: np.random.Generator,
    noise_std: float = 0.0,
) -> tuple[PoseTrajectory, SceneAnnotation]:
    """Animate an agent visiting every object of ``scene`` in random order.

    Returns the trajectory and the scene restricted to objects that were
    actually reached; unreachable objects are skipped.
    """
    if not motion_templates:
        raise ValueError("motion_templates is empty")
    for cls in set(scene.class_ids):
        if not motion_templates.get(cls):
            raise ValueError(f"no interaction template for class {cls}")

    polys = [Polygon(footprint(b)) for b in scene.boxes]
    if scene.room_size is not None:
        lo, hi = np.zeros(2), np.asarray(scene.room_size, dtype=np.float64)
    else:
        pts = np.vstack([footprint(b) for b in scene.boxes])
        lo, hi = pts.min(axis=0) - 2.0, pts.max(axis=0) + 2.0

    def inside(p, margin=0.15):
        return bool(np.all(p >= lo + margin) and np.all(p <= hi - margin))

    anim = _Animator(skeleton, rng, noise_std)
    for _ in range(1000):
        start = rng.uniform(lo + 0.3, hi - 0.3)
        if all(p.distance(Point(start)) >= 0.3 for p in polys):
            break
    else:
        raise UnreachableSceneError("no free start location")
    anim.emit(start, float(rng.uniform(-math.pi, math.pi)))

    visited = []
    for idx in rng.permutation(len(scene.objects)):
        cls, box = scene.objects[idx]
        front_xy = box.center[:2] + front_normal(box.yaw) * (box.size[1] / 2 + STANDOFF)
        if not inside(front_xy) or any(p.distance(Point(front_xy)) < WALK_CLEARANCE for p in polys):
            continue
        route = _plan(anim.xy, front_xy, polys, inside)
        if route is None:
            continue
        speed = float(rng.uniform(0.9, 1.2))
        for waypoint in route:
            anim.walk_to(waypoint, speed)
        templates = motion_templates[cls]
        _play_clip(anim, templates[int(rng.integers(len(templates)))], box, front_xy, rng)
        visited.append(int(idx))
    if not visited:
        raise UnreachableSceneError("no object could be reached")
    visited.sort()
    return PoseTrajectory(np.stack(anim.frames), FRAME_RATE), scene.subset(visited)


def uniform_indices(n: int, count: int) -> np.ndarray:
    """``count`` evenly spaced indices over [0, n - 1], rounded half up."""
    if n < 1 or count < 1:
        raise ValueError("need n >= 1 and count >= 1")
    if count == 1:
        return np.zeros(1, dtype=np.int64)
    return np.floor(np.linspace(0.0, n - 1, count) + 0.5).astype(np.int64)


def resample_frames(traj: PoseTrajectory, n_target: int) -> PoseTrajectory:
    if n_target < 2:
        raise ValueError("n_target must be >= 2")
    return PoseTrajectory(traj.frames[uniform_indices(traj.num_frames, n_target)], traj.frame_rate)
