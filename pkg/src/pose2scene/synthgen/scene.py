from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Point, Polygon

from ..geom import OrientedBox3D, footprint

__all__ = [
    "ObjectClass",
    "RoomSpec",
    "SceneAnnotation",
    "DEFAULT_CLASSES",
    "TOY_CLASSES",
    "generate_scene",
    "front_normal",
]

MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class ObjectClass:
    name: str
    size_mean: tuple[float, float, float]
    size_std: tuple[float, float, float]


@dataclass(frozen=True)
class RoomSpec:
    room_id: int
    width: float
    depth: float

    def contains(self, xy, margin: float = 0.0) -> bool:
        x, y = xy
        return margin <= x <= self.width - margin and margin <= y <= self.depth - margin


@dataclass
class SceneAnnotation:
    objects: list[tuple[int, OrientedBox3D]]
    room_id: int
    sequence_id: int = -1
    room_size: tuple[float, float] | None = None
    placement_warning: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not 1 <= len(self.objects) <= 10:
            raise ValueError(f"a scene holds 1..10 objects, got {len(self.objects)}")

    @property
    def class_ids(self) -> list[int]:
        return [c for c, _ in self.objects]

    @property
    def boxes(self) -> list[OrientedBox3D]:
        return [b for _, b in self.objects]

    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.boxes]).reshape(-1, 3)

    def subset(self, keep) -> "SceneAnnotation":
        return SceneAnnotation(
            [self.objects[i] for i in keep], self.room_id, self.sequence_id, self.room_size
        )


DEFAULT_CLASSES = (
    ObjectClass("bed", (1.5, 2.0, 0.55), (0.15, 0.1, 0.05)),
    ObjectClass("cabinet", (0.9, 0.5, 1.0), (0.15, 0.08, 0.15)),
    ObjectClass("chair", (0.5, 0.52, 0.9), (0.05, 0.05, 0.05)),
    ObjectClass("desk", (1.2, 0.7, 0.75), (0.15, 0.08, 0.03)),
    ObjectClass("fridge", (0.8, 0.7, 1.8), (0.08, 0.05, 0.1)),
    ObjectClass("sofa", (1.9, 0.9, 0.8), (0.2, 0.08, 0.05)),
    ObjectClass("stove", (0.75, 0.65, 0.9), (0.06, 0.05, 0.03)),
    ObjectClass("toilet", (0.42, 0.7, 0.8), (0.03, 0.05, 0.04)),
)
TOY_CLASSES = tuple(c for c in DEFAULT_CLASSES if c.name in ("bed", "cabinet", "chair"))


def front_normal(yaw: float) -> np.ndarray:
    """Unit ground-plane normal of a box's front (local +y) face."""
    return np.array([-math.sin(yaw), math.cos(yaw)])


def generate_scene(
    room: RoomSpec,
    class_set,
    rng: np.random.Generator,
    max_objects: int = 10,
    clearance: float = 0.5,
    front_space: float = 0.7,
) -> SceneAnnotation:
    """Rejection-sample non-overlapping boxes on the room floor.

    Footprints keep ``clearance`` metres between each other and the front face
    of every object has ``front_space`` metres of free floor inside the room.
    Sizes are drawn per class and clamped to two standard deviations.
    """
    if not class_set:
        raise ValueError("class_set is empty")
    target = int(rng.integers(1, max_objects + 1))
    objects: list[tuple[int, OrientedBox3D]] = []
    polys: list[Polygon] = []
    fronts: list[Point] = []
    warning = False
    for _ in range(target):
        placed = False
        for _ in range(MAX_REJECTIONS):
            cls = int(rng.integers(len(class_set)))
            spec = class_set[cls]
            mean, std = np.asarray(spec.size_mean), np.asarray(spec.size_std)
            size = np.clip(mean + std * rng.standard_normal(3), mean - 2 * std, mean + 2 * std)
            yaw = float(rng.uniform(-math.pi, math.pi))
            xy = rng.uniform((0.0, 0.0), (room.width, room.depth))
            box = OrientedBox3D((xy[0], xy[1], size[2] / 2), size, yaw)
            fp = footprint(box)
            if not all(room.contains(p, 0.05) for p in fp):
                continue
            front = xy + front_normal(yaw) * (size[1] / 2 + front_space)
            if not room.contains(front, 0.2):
                continue
            poly = Polygon(fp)
            if any(poly.distance(other) < clearance for other in polys):
                continue
            if any(other.distance(Point(front)) < 0.3 for other in polys):
                continue
            if any(poly.distance(f) < 0.3 for f in fronts):
                continue
            objects.append((cls, box))
            polys.append(poly)
            fronts.append(Point(front))
            placed = True
            break
        if not placed:
            warning = True
            break
    if not objects:
        raise RuntimeError(f"could not place any object in room {room.room_id}")
    return SceneAnnotation(objects, room.room_id, room_size=(room.width, room.depth), placement_warning=warning)
