"""Body topology: a 16-joint tree rooted at the head.

The head is the root because the sensor rides on it: joint positions are
expressed in the camera frame, with the body hanging roughly along +z.
Bone lengths are millimetres. The topology is deliberately minimal - a
joint-name tuple, a parent->child bone list forming a tree, and per-bone
rest lengths - everything else (rest directions, motion) lives with the
synthesizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

JOINT_NAMES = (
    "head", "neck",
    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
    "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle",
    "l_foot", "r_foot",
)


@dataclass(frozen=True)
class SkeletonTopology:
    joints: tuple[str, ...]
    bones: tuple[tuple[int, int], ...]  # (parent, child) index pairs
    rest_lengths: np.ndarray            # mm, one per bone

    def __post_init__(self):
        j = len(self.joints)
        if len(self.rest_lengths) != len(self.bones):
            raise ValueError("one rest length per bone required")
        if np.any(np.asarray(self.rest_lengths) <= 0):
            raise ValueError("bone lengths must be positive")
        seen = {0}  # the root (index 0) needs no bone
        for parent, child in self.bones:
            if not (0 <= parent < j and 0 <= child < j):
                raise ValueError("bone endpoint out of joint range")
            if child in seen:
                raise ValueError(f"joint {child} has multiple parents")
            if parent not in seen:
                raise ValueError("bones must be listed root-down (tree order)")
            seen.add(child)
        if len(seen) != j:
            raise ValueError("bones do not span every joint")

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    def bone_index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(parents, children) as int arrays, for vectorised bone math."""
        b = np.asarray(self.bones, dtype=np.int64)
        return b[:, 0], b[:, 1]

    def bone_lengths(self, pose: np.ndarray) -> np.ndarray:
        """Bone lengths of a (..., J, 3) pose, shape (..., B)."""
        parents, children = self.bone_index_arrays()
        diff = pose[..., children, :] - pose[..., parents, :]
        return np.linalg.norm(diff, axis=-1)


def default_topology() -> SkeletonTopology:
    """The standard 16-joint body with humanlike rest lengths (mm)."""
    idx = {name: i for i, name in enumerate(JOINT_NAMES)}
    spec = [
        ("head", "neck", 160.0),
        ("neck", "l_shoulder", 190.0),
        ("neck", "r_shoulder", 190.0),
        ("l_shoulder", "l_elbow", 280.0),
        ("r_shoulder", "r_elbow", 280.0),
        ("l_elbow", "l_wrist", 250.0),
        ("r_elbow", "r_wrist", 250.0),
        ("neck", "l_hip", 560.0),
        ("neck", "r_hip", 560.0),
        ("l_hip", "l_knee", 420.0),
        ("r_hip", "r_knee", 420.0),
        ("l_knee", "l_ankle", 400.0),
        ("r_knee", "r_ankle", 400.0),
        ("l_ankle", "l_foot", 180.0),
        ("r_ankle", "r_foot", 180.0),
    ]
    bones = tuple((idx[p], idx[c]) for p, c, _ in spec)
    lengths = np.array([length for _, _, length in spec], dtype=np.float64)
    return SkeletonTopology(JOINT_NAMES, bones, lengths)


# Unit rest direction of each bone in the camera frame (+z down the body,
# +x to the body's left on screen, +y forward). Indexed like default bones.
_REST_DIRECTIONS = np.array([
    [0.00, 0.00, 1.00],   # head -> neck
    [-0.97, 0.00, 0.26],  # neck -> l_shoulder
    [0.97, 0.00, 0.26],   # neck -> r_shoulder
    [-0.17, 0.10, 0.98],  # l_shoulder -> l_elbow
    [0.17, 0.10, 0.98],   # r_shoulder -> r_elbow
    [0.00, 0.17, 0.99],   # l_elbow -> l_wrist
    [0.00, 0.17, 0.99],   # r_elbow -> r_wrist
    [-0.20, 0.00, 0.98],  # neck -> l_hip
    [0.20, 0.00, 0.98],   # neck -> r_hip
    [0.00, 0.05, 1.00],   # l_hip -> l_knee
    [0.00, 0.05, 1.00],   # r_hip -> r_knee
    [0.00, -0.05, 1.00],  # l_knee -> l_ankle
    [0.00, -0.05, 1.00],  # r_knee -> r_ankle
    [0.00, 0.92, 0.39],   # l_ankle -> l_foot
    [0.00, 0.92, 0.39],   # r_ankle -> r_foot
], dtype=np.float64)

# Camera sits just above the forehead; the head joint is slightly below it.
HEAD_OFFSET_MM = np.array([0.0, 0.0, 180.0])

# Joints whose projected convex hull stands in for the torso when deciding
# occlusion: head, neck, both shoulders, both hips.
TORSO_JOINTS = (0, 1, 2, 3, 8, 9)


def rest_directions() -> np.ndarray:
    d = _REST_DIRECTIONS.copy()
    return d / np.linalg.norm(d, axis=1, keepdims=True)
