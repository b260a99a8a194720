# Copyright 2023 the thermoreflect authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""The emitter ops model the heat-emitting person as an articulated skeleton
of capsules driven by a pose latent.

The skeleton is a tree of joints. Each non-root joint carries an offset from
its parent in the parent's frame and the radius of the capsule ("bone") that
joins it to its parent. A pose latent holds one axis-angle rotation per
non-root joint. Forward kinematics composes R_j = R_parent · Rot(z_j) and
places children at P_c = P_j + R_j · offset_c.
"""
import functools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np
import torch

from thermoreflect.exceptions import DomainError
from thermoreflect.geometry_ops import (
    DTYPE,
    Se3Scale,
    TensorLike,
    TriMesh,
    as_tensor,
    axis_angle_to_matrix,
)

# Joint rotations are bounded to this magnitude.
MAX_JOINT_ANGLE = np.pi


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int
    offset: Tuple[float, float, float]
    radius: float


@dataclass(frozen=True)
class Skeleton:
    """A kinematic tree. Joint 0 is the root and parents precede children."""

    joints: Tuple[Joint, ...]

    def __post_init__(self):
        joints = tuple(
            Joint(j.name, int(j.parent), tuple(float(x) for x in j.offset), float(j.radius))
            for j in self.joints
        )
        object.__setattr__(self, "joints", joints)
        if len(joints) < 2:
            raise DomainError("A skeleton requires a root and at least one child")
        if joints[0].parent != -1:
            raise DomainError(f"Root joint `{joints[0].name}` must have parent -1")
        names = [j.name for j in joints]
        if len(set(names)) != len(names):
            raise DomainError("Joint names must be unique")
        for index, joint in enumerate(joints[1:], start=1):
            if not 0 <= joint.parent < index:
                raise DomainError(
                    f"Joint `{joint.name}` must have a parent among the preceding "
                    f"joints, got {joint.parent}"
                )
            if np.linalg.norm(joint.offset) <= 0:
                raise DomainError(f"Joint `{joint.name}` has a zero-length bone")
        for joint in joints:
            if not joint.radius > 0:
                raise DomainError(
                    f"Joint `{joint.name}` requires a positive capsule radius"
                )

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def latent_size(self) -> int:
        return 3 * (self.num_joints - 1)

    @property
    def names(self) -> List[str]:
        return [j.name for j in self.joints]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError as e:
            raise DomainError(f"Unknown joint `{name}`") from e

    def graph(self) -> nx.DiGraph:
        return _skeleton_graph(self)

    def subtree(self, joint: int) -> Set[int]:
        """The joint and all of its descendants."""
        return {joint} | nx.descendants(self.graph(), joint)

    def with_leaf(self, name: str, parent: int, offset, radius: float) -> "Skeleton":
        return Skeleton(self.joints + (Joint(name, parent, tuple(offset), radius),))


@functools.lru_cache(maxsize=32)
def _skeleton_graph(skeleton: Skeleton) -> nx.DiGraph:
    graph = nx.DiGraph()
    for index, joint in enumerate(skeleton.joints):
        graph.add_node(index, name=joint.name)
        if joint.parent >= 0:
            graph.add_edge(joint.parent, index)
    return graph


def default_skeleton() -> Skeleton:
    """A 17-joint human of about 1.7 m, y up, arms down, pelvis at the origin."""
    joints = [
        Joint("pelvis", -1, (0.0, 0.0, 0.0), 0.12),
        Joint("spine", 0, (0.0, 0.12, 0.0), 0.11),
        Joint("chest", 1, (0.0, 0.22, 0.0), 0.12),
        Joint("neck", 2, (0.0, 0.2, 0.0), 0.05),
        Joint("head", 3, (0.0, 0.12, 0.0), 0.09),
    ]
    for side, sign in (("l", 1.0), ("r", -1.0)):
        shoulder = len(joints)
        joints += [
            Joint(f"{side}_shoulder", 2, (sign * 0.17, 0.15, 0.0), 0.05),
            Joint(f"{side}_elbow", shoulder, (0.0, -0.28, 0.0), 0.045),
            Joint(f"{side}_wrist", shoulder + 1, (0.0, -0.25, 0.0), 0.04),
        ]
    for side, sign in (("l", 1.0), ("r", -1.0)):
        hip = len(joints)
        joints += [
            Joint(f"{side}_hip", 0, (sign * 0.09, -0.05, 0.0), 0.07),
            Joint(f"{side}_knee", hip, (0.0, -0.42, 0.0), 0.06),
            Joint(f"{side}_ankle", hip + 1, (0.0, -0.4, 0.0), 0.05),
        ]
    return Skeleton(tuple(joints))


@dataclass(frozen=True)
class EmitterModel:
    """An articulated emitter: a skeleton, a pose latent, and a rigid placement."""

    skeleton: Skeleton = field(default_factory=default_skeleton)
    pose_latent: Optional[torch.Tensor] = None
    placement: Se3Scale = field(default_factory=Se3Scale)

    def __post_init__(self):
        if self.pose_latent is None:
            latent = torch.zeros(self.skeleton.latent_size, dtype=DTYPE)
        else:
            latent = as_tensor(self.pose_latent).reshape(-1)
        if len(latent) != self.skeleton.latent_size:
            raise DomainError(
                f"Pose latent of a {self.skeleton.num_joints}-joint skeleton takes "
                f"{self.skeleton.latent_size} values, got {len(latent)}"
            )
        angles = torch.linalg.norm(latent.detach().reshape(-1, 3), dim=-1)
        if bool((angles > MAX_JOINT_ANGLE + 1e-9).any()):
            raise DomainError(
                f"Joint rotations must not exceed π, got {float(angles.max()):.6f}"
            )
        if abs(float(self.placement.scale) - 1) > 1e-12:
            raise DomainError("Emitter placement must be rigid (scale 1)")
        object.__setattr__(self, "pose_latent", latent)

    def with_params(self, pose_latent=None, placement=None) -> "EmitterModel":
        return EmitterModel(
            self.skeleton,
            self.pose_latent if pose_latent is None else pose_latent,
            self.placement if placement is None else placement,
        )

    def detach(self) -> "EmitterModel":
        return EmitterModel(self.skeleton, self.pose_latent.detach(), self.placement.detach())


def project_pose_latent(latent: TensorLike) -> torch.Tensor:
    """Shrink every joint rotation with magnitude above π back to π."""
    z = as_tensor(latent).detach().reshape(-1, 3)
    angles = torch.linalg.norm(z, dim=-1, keepdim=True)
    factor = torch.where(angles > MAX_JOINT_ANGLE, MAX_JOINT_ANGLE / angles, torch.ones_like(angles))
    return (z * factor).reshape(-1)


def forward_kinematics(model: EmitterModel) -> Tuple[List[torch.Tensor], List[torch.Tensor]]:
    """Joint rotations and positions in the emitter's local frame.

    :return: A tuple of per-joint (3, 3) rotations and (3,) positions.
    """
    skeleton = model.skeleton
    local_rotations = axis_angle_to_matrix(model.pose_latent.reshape(-1, 3))
    rotations = [torch.eye(3, dtype=DTYPE)]
    positions = [torch.zeros(3, dtype=DTYPE)]
    for index, joint in enumerate(skeleton.joints[1:], start=1):
        parent_rotation = rotations[joint.parent]
        offset = torch.tensor(joint.offset, dtype=DTYPE)
        positions.append(positions[joint.parent] + parent_rotation @ offset)
        rotations.append(parent_rotation @ local_rotations[index - 1])
    return rotations, positions


def joint_positions(model: EmitterModel) -> torch.Tensor:
    """World positions of all joints, shape (J, 3)."""
    _, positions = forward_kinematics(model)
    return model.placement.apply(torch.stack(positions))


def pose_prior(model: EmitterModel) -> torch.Tensor:
    """The squared norm of the pose latent."""
    return (model.pose_latent * model.pose_latent).sum()


def capsule_counts(segments: int) -> Tuple[int, int]:
    """Vertices and triangles of a single capsule tessellation."""
    rings = segments // 2
    return 2 * segments * rings + 2, 4 * segments * rings


def _capsule(offset: np.ndarray, radius: float, segments: int) -> Tuple[np.ndarray, np.ndarray]:
    """A capsule from the origin to offset, as local vertices and triangles."""
    length = np.linalg.norm(offset)
    axis = offset / length
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(axis, helper)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(axis, b1)
    rings = segments // 2
    phi = 2 * np.pi * np.arange(segments) / segments
    circle = np.cos(phi)[:, None] * b1 + np.sin(phi)[:, None] * b2

    polar = 0.5 * np.pi * np.arange(1, rings + 1) / rings
    ring_vertices = []
    # Top hemisphere from near the pole down to the equator at the far end.
    for theta in polar:
        center = offset + radius * np.cos(theta) * axis
        ring_vertices.append(center + radius * np.sin(theta) * circle)
    # Bottom hemisphere from the equator at the origin down to near the pole.
    for theta in polar[::-1]:
        center = -radius * np.cos(theta) * axis
        ring_vertices.append(center + radius * np.sin(theta) * circle)
    top = offset + radius * axis
    bottom = -radius * axis
    vertices = np.concatenate([top[None], np.concatenate(ring_vertices), bottom[None]])

    def ring(i: int, j: np.ndarray) -> np.ndarray:
        return 1 + i * segments + (j % segments)

    j = np.arange(segments)
    triangles = [np.stack([np.zeros(segments, dtype=np.int64), ring(0, j), ring(0, j + 1)], 1)]
    for i in range(2 * rings - 1):
        triangles.append(np.stack([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)], 1))
        triangles.append(np.stack([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)], 1))
    last = len(vertices) - 1
    triangles.append(
        np.stack([np.full(segments, last), ring(2 * rings - 1, j + 1), ring(2 * rings - 1, j)], 1)
    )
    return vertices, np.concatenate(triangles).astype(np.int64)


@functools.lru_cache(maxsize=16)
def _capsule_templates(
    skeleton: Skeleton, segments: int
) -> Tuple[Tuple[torch.Tensor, ...], np.ndarray, np.ndarray]:
    locals_, triangles, parts = [], [], []
    vertex_offset = 0
    for index, joint in enumerate(skeleton.joints[1:], start=1):
        vertices, faces = _capsule(np.asarray(joint.offset, dtype=np.float64), joint.radius, segments)
        locals_.append(torch.from_numpy(vertices))
        triangles.append(faces + vertex_offset)
        parts.append(np.full(len(faces), index - 1, dtype=np.int64))
        vertex_offset += len(vertices)
    return tuple(locals_), np.concatenate(triangles), np.concatenate(parts)


def build_emitter_mesh(model: EmitterModel, segments: int = 8) -> TriMesh:
    """Tessellate the posed emitter into a world-space triangle mesh.

    Each bone is a capsule of two hemispheres with segments//2 rings of
    segments vertices each, plus two poles. The mesh is differentiable with
    respect to the pose latent and the placement. Triangles are labelled with
    their bone index.

    :param model: The emitter.
    :param segments: Vertices per ring, even and at least 6.
    :return: The mesh.
    :raises DomainError: If segments is odd or below 6.
    """
    if segments < 6 or segments % 2:
        raise DomainError(f"Capsule segments must be even and at least 6, got {segments}")
    rotations, positions = forward_kinematics(model)
    templates, triangles, parts = _capsule_templates(model.skeleton, segments)
    vertices = []
    for index, joint in enumerate(model.skeleton.joints[1:], start=1):
        parent = joint.parent
        vertices.append(positions[parent] + templates[index - 1] @ rotations[parent].T)
    world = model.placement.apply(torch.cat(vertices))
    return TriMesh(world, triangles, parts)


def bone_vertex_ranges(skeleton: Skeleton, segments: int) -> List[Tuple[int, int]]:
    """The [start, end) vertex range of every bone in build_emitter_mesh."""
    per_bone, _ = capsule_counts(segments)
    return [(i * per_bone, (i + 1) * per_bone) for i in range(skeleton.num_joints - 1)]


def bones_in_subtree(skeleton: Skeleton, joint: int) -> Sequence[int]:
    """Bones moved by rotating a joint: those ending at a strict descendant."""
    return sorted(c - 1 for c in skeleton.subtree(joint) if c != joint)


def subtree(skeleton: Skeleton, joint: int) -> Set[int]:
    """The joint and all of its descendants."""
    return skeleton.subtree(joint)
