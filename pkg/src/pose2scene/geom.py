"""Oriented 3D boxes: corners, exact IoU, a Monte-Carlo IoU estimate and 3D NMS.

Coordinates are right-handed with z pointing up. A box is rotated about z by
``yaw``; its local x axis carries ``size[0]`` (width), local y carries
``size[1]`` (depth) and z carries ``size[2]`` (height). The local +y face is
treated as the object's front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "InvalidBoxError",
    "OrientedBox3D",
    "ScoredBox",
    "wrap_angle",
    "box_corners",
    "footprint",
    "polygon_area",
    "clip_convex",
    "bev_intersection_area",
    "oriented_iou",
    "iou_oracle",
    "nms3d",
    "box_to_record",
    "box_from_record",
]

_EPS = 1e-12

# bottom face counter-clockwise seen from above, starting at (-,-); then top face
_CORNER_SIGNS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=np.float64,
)


class InvalidBoxError(ValueError):
    pass


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    wrapped = math.remainder(float(theta), 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class OrientedBox3D:
    center: np.ndarray
    size: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        size = np.asarray(self.size, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(center)) or not np.all(np.isfinite(size)):
            raise InvalidBoxError(f"non-finite box parameters: {center}, {size}")
        if np.any(size <= 0):
            raise InvalidBoxError(f"box size must be strictly positive, got {size}")
        center.setflags(write=False)
        size.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def z_range(self) -> tuple[float, float]:
        half = 0.5 * self.size[2]
        return self.center[2] - half, self.center[2] + half

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of which (n, 3) points lie inside the box."""
        local = (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation()
        return np.all(np.abs(local) <= 0.5 * self.size, axis=-1)

    def __eq__(self, other):
        if not isinstance(other, OrientedBox3D):
            return NotImplemented
        return (
            np.array_equal(self.center, other.center)
            and np.array_equal(self.size, other.size)
            and self.yaw == other.yaw
        )

    def __hash__(self):
        return hash((tuple(self.center), tuple(self.size), self.yaw))


@dataclass(frozen=True)
class ScoredBox:
    box: OrientedBox3D
    class_id: int
    objectness: float = 1.0
    class_probs: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness must lie in [0, 1], got {self.objectness}")
        if self.class_probs is not None:
            probs = np.asarray(self.class_probs, dtype=np.float64)
            if abs(probs.sum() - 1.0) > 1e-6 or np.any(probs < 0):
                raise ValueError("class_probs must be a probability vector")
            object.__setattr__(self, "class_probs", probs)


def box_corners(box: OrientedBox3D) -> np.ndarray:
    """(8, 3) corners in the fixed order described by ``_CORNER_SIGNS``."""
    if not isinstance(box, OrientedBox3D):
        raise InvalidBoxError(f"expected OrientedBox3D, got {type(box).__name__}")
    local = _CORNER_SIGNS * (0.5 * box.size)
    return local @ box.rotation().T + box.center


def footprint(box: OrientedBox3D) -> np.ndarray:
    """(4, 2) counter-clockwise footprint polygon in the ground plane."""
    return box_corners(box)[:4, :2]


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by a counter-clockwise convex ``clipper``."""
    output = [np.asarray(p, dtype=np.float64) for p in subject]
    n = len(clipper)
    for i in range(n):
        if not output:
            break
        a, b = clipper[i], clipper[(i + 1) % n]
        edge = b - a

        def side(p):
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])

        inputs, output = output, []
        prev = inputs[-1]
        prev_side = side(prev)
        for cur in inputs:
            cur_side = side(cur)
            if cur_side >= 0:
                if prev_side < 0:
                    t = prev_side / (prev_side - cur_side)
                    output.append(prev + t * (cur - prev))
                output.append(cur)
            elif prev_side >= 0:
                t = prev_side / (prev_side - cur_side)
                output.append(prev + t * (cur - prev))
            prev, prev_side = cur, cur_side
    return np.array(output).reshape(-1, 2)


def bev_intersection_area(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """Area of the intersection of two box footprints."""
    fa, fb = footprint(a), footprint(b)
    if polygon_area(fa) < _EPS or polygon_area(fb) < _EPS:
        return 0.0
    return max(polygon_area(clip_convex(fa, fb)), 0.0)


def oriented_iou(a: OrientedBox3D, b: OrientedBox3D) -> float:
    za0, za1 = a.z_range()
    zb0, zb1 = b.z_range()
    dz = min(za1, zb1) - max(za0, zb0)
    if dz <= 0:
        return 0.0
    inter = bev_intersection_area(a, b) * dz
    union = a.volume + b.volume - inter
    if union < _EPS:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def iou_oracle(
    a: OrientedBox3D,
    b: OrientedBox3D,
    samples: int = 1_000_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte-Carlo IoU estimate from uniform samples over the joint bounding region."""
    rng = np.random.default_rng(0) if rng is None else rng
    corners = np.vstack([box_corners(a), box_corners(b)])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    inter = union = 0
    chunk = 200_000
    remaining = samples
    while remaining > 0:
        n = min(chunk, remaining)
        pts = rng.uniform(lo, hi, size=(n, 3))
        in_a, in_b = a.contains(pts), b.contains(pts)
        inter += int(np.count_nonzero(in_a & in_b))
        union += int(np.count_nonzero(in_a | in_b))
        remaining -= n
    return inter / union if union else 0.0


def nms3d(proposals: Sequence[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Class-agnostic greedy NMS; equal scores keep the lower input index first."""
    if not proposals:
        return []
    scores = np.array([p.objectness for p in proposals])
    order = np.argsort(-scores, kind="stable")
    kept: list[ScoredBox] = []
    for idx in order:
        cand = proposals[idx]
        if all(oriented_iou(cand.box, k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def box_to_record(box: OrientedBox3D, class_id: int, objectness: float = 1.0) -> dict:
    return {
        "center": [float(v) for v in box.center],
        "size": [float(v) for v in box.size],
        "yaw": float(box.yaw),
        "class_id": int(class_id),
        "objectness": float(objectness),
    }


def box_from_record(record: dict) -> tuple[OrientedBox3D, int, float]:
    box = OrientedBox3D(record["center"], record["size"], record["yaw"])
    return box, int(record["class_id"]), float(record.get("objectness", 1.0))
