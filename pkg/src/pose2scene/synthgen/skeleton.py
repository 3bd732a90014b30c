from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SkeletonSpec", "default_skeleton", "paper_skeleton", "BASE_JOINTS"]

# 17-joint body layout used by the procedural animator
BASE_JOINTS = (
    "pelvis",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "spine",
    "thorax",
    "neck",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
)
_BASE_BONES = (
    (0, 1), (1, 2), (2, 3),
    (0, 4), (4, 5), (5, 6),
    (0, 7), (7, 8), (8, 9), (9, 10),
    (8, 11), (11, 12), (12, 13),
    (8, 14), (14, 15), (15, 16),
)  # fmt: skip
_BASE_MIRROR = (0, 4, 5, 6, 1, 2, 3, 7, 8, 9, 10, 14, 15, 16, 11, 12, 13)


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint graph of the input poses.

    ``mirror`` is the joint permutation that swaps left and right labels.
    ``derived`` lists extra joints placed at ``a + t * (b - a)`` for base joints
    ``a`` and ``b``; they let larger skeletons reuse the 17-joint animator.
    """

    joint_names: tuple[str, ...]
    bone_edges: tuple[tuple[int, int], ...]
    hip_joint_ids: tuple[int, ...]
    mirror: tuple[int, ...]
    derived: tuple[tuple[int, int, float], ...] = field(default=())

    def __post_init__(self):
        j = len(self.joint_names)
        if not self.hip_joint_ids:
            raise ValueError("hip_joint_ids must be non-empty")
        if any(not 0 <= h < j for h in self.hip_joint_ids):
            raise ValueError("hip joint index out of range")
        if len(self.bone_edges) != j - 1:
            raise ValueError(f"a tree over {j} joints needs {j - 1} edges, got {len(self.bone_edges)}")
        parent = list(range(j))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.bone_edges:
            if not (0 <= a < j and 0 <= b < j):
                raise ValueError(f"bone ({a}, {b}) out of range")
            ra, rb = find(a), find(b)
            if ra == rb:
                raise ValueError("bone_edges contain a cycle")
            parent[ra] = rb
        if sorted(self.mirror) != list(range(j)):
            raise ValueError("mirror must be a permutation of joint indices")
        if len(self.derived) != j - len(BASE_JOINTS) and self.derived:
            raise ValueError("derived joints must fill the joints after the base 17")

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    def adjacency(self) -> np.ndarray:
        """Symmetric 0/1 bone adjacency without self-loops."""
        adj = np.zeros((self.joint_count, self.joint_count))
        for a, b in self.bone_edges:
            adj[a, b] = adj[b, a] = 1.0
        return adj

    def expand(self, base: np.ndarray) -> np.ndarray:
        """Extend (..., 17, 3) base joints with the derived joints."""
        if not self.derived:
            return base
        extra = [base[..., a, :] + t * (base[..., b, :] - base[..., a, :]) for a, b, t in self.derived]
        return np.concatenate([base, np.stack(extra, axis=-2)], axis=-2)

    def to_dict(self) -> dict:
        return {
            "joint_names": list(self.joint_names),
            "bone_edges": [list(e) for e in self.bone_edges],
            "hip_joint_ids": list(self.hip_joint_ids),
            "mirror": list(self.mirror),
            "derived": [list(d) for d in self.derived],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkeletonSpec":
        return cls(
            joint_names=tuple(d["joint_names"]),
            bone_edges=tuple(tuple(e) for e in d["bone_edges"]),
            hip_joint_ids=tuple(d["hip_joint_ids"]),
            mirror=tuple(d["mirror"]),
            derived=tuple((int(a), int(b), float(t)) for a, b, t in d.get("derived", [])),
        )


def default_skeleton() -> SkeletonSpec:
    return SkeletonSpec(BASE_JOINTS, _BASE_BONES, (1, 4), _BASE_MIRROR)


def paper_skeleton() -> SkeletonSpec:
    """53-joint preset: the 17 base joints plus 36 filler joints hung off the base bones."""
    names = list(BASE_JOINTS)
    edges = list(_BASE_BONES)
    derived = []
    index_of = {}
    for a, b in _BASE_BONES:
        for t in (1 / 3, 2 / 3):
            index_of[(a, b, t)] = len(names)
            names.append(f"{BASE_JOINTS[a]}-{BASE_JOINTS[b]}@{t:.2f}")
            edges.append((a, len(names) - 1))
            derived.append((a, b, t))
    for a, b in ((12, 13), (15, 16), (2, 3), (5, 6)):
        index_of[(a, b, 1.25)] = len(names)
        names.append(f"{BASE_JOINTS[b]}_tip")
        edges.append((b, len(names) - 1))
        derived.append((a, b, 1.25))
    mirror = list(_BASE_MIRROR)
    for a, b, t in derived:
        mirror.append(index_of[(_BASE_MIRROR[a], _BASE_MIRROR[b], t)])
    return SkeletonSpec(tuple(names), tuple(edges), (1, 4), tuple(mirror), tuple(derived))
