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
"""The geometry ops provide rigid transforms, the pinhole camera, triangle
meshes, and the batched ray-triangle intersection and distance kernels used by
the reflection renderer.

All tensors are float64. Points and directions are tensors of shape (..., 3).
The camera frame is x right, y down, z forward.
"""
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from thermoreflect.exceptions import DomainError

DTYPE = torch.float64

TensorLike = Union[torch.Tensor, np.ndarray, Sequence[float], float]

# Triangles with a smaller area are dropped when a mesh is constructed.
MIN_TRIANGLE_AREA = 1e-12

# Tolerance on barycentric coordinates of the closed intersection test.
BARYCENTRIC_TOLERANCE = 1e-12


def as_tensor(value: TensorLike) -> torch.Tensor:
    """Convert a value to a float64 tensor, preserving autograd history."""
    if isinstance(value, torch.Tensor):
        return value.to(DTYPE)
    return torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=DTYPE)


def _dot(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a * b).sum(-1)


def safe_norm(x: torch.Tensor, dim: int = -1, keepdim: bool = False) -> torch.Tensor:
    """Euclidean norm with a finite gradient at the origin."""
    return torch.sqrt((x * x).sum(dim, keepdim=keepdim) + 1e-30)


def normalize(x: torch.Tensor) -> torch.Tensor:
    return x / safe_norm(x, keepdim=True)


# Quaternions are stored (w, x, y, z).


def quaternion_from_axis_angle(axis_angle: TensorLike) -> torch.Tensor:
    """Convert axis-angle vectors of shape (..., 3) to unit quaternions.

    The conversion is differentiable everywhere, including the zero rotation.
    """
    aa = as_tensor(axis_angle)
    angle2 = (aa * aa).sum(-1, keepdim=True)
    angle = torch.sqrt(angle2 + 1e-30)
    small = angle < 1e-6
    safe_angle = torch.where(small, torch.ones_like(angle), angle)
    k = torch.where(
        small, 0.5 - angle2 / 48.0, torch.sin(0.5 * safe_angle) / safe_angle
    )
    return torch.cat([torch.cos(0.5 * angle), aa * k], dim=-1)


def quaternion_multiply(a: TensorLike, b: TensorLike) -> torch.Tensor:
    """Hamilton product a ⊗ b, which rotates by b first and then by a."""
    a, b = as_tensor(a), as_tensor(b)
    aw, ax, ay, az = a.unbind(-1)
    bw, bx, by, bz = b.unbind(-1)
    return torch.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        dim=-1,
    )


def quaternion_to_matrix(quaternion: TensorLike) -> torch.Tensor:
    """Convert unit quaternions of shape (..., 4) to rotation matrices."""
    q = as_tensor(quaternion)
    w, x, y, z = q.unbind(-1)
    rows = [
        torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ]
    return torch.stack(rows, dim=-2)


def axis_angle_to_matrix(axis_angle: TensorLike) -> torch.Tensor:
    return quaternion_to_matrix(quaternion_from_axis_angle(axis_angle))


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Draw a rotation uniformly from SO(3)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def _identity_quaternion() -> torch.Tensor:
    return torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=DTYPE)


def _zero_vector() -> torch.Tensor:
    return torch.zeros(3, dtype=DTYPE)


@dataclass(frozen=True)
class Se3Scale:
    """A similarity transform mapping p to R(s·p) + T.

    The rotation is a unit quaternion (w, x, y, z) and the scale is a positive
    scalar.
    """

    rotation: torch.Tensor = field(default_factory=_identity_quaternion)
    translation: torch.Tensor = field(default_factory=_zero_vector)
    scale: torch.Tensor = field(default_factory=lambda: torch.tensor(1.0, dtype=DTYPE))

    def __post_init__(self):
        rotation = as_tensor(self.rotation).reshape(4)
        translation = as_tensor(self.translation).reshape(3)
        scale = as_tensor(self.scale).reshape(())
        if abs(float(torch.linalg.norm(rotation.detach())) - 1) > 1e-9:
            raise DomainError(
                f"Rotation quaternion must have unit norm, got {rotation.tolist()}"
            )
        if not float(scale.detach()) > 0:
            raise DomainError(f"Scale must be positive, got {float(scale)}")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls) -> "Se3Scale":
        return cls()

    @classmethod
    def from_axis_angle(
        cls,
        axis_angle: TensorLike,
        translation: TensorLike = (0.0, 0.0, 0.0),
        scale: TensorLike = 1.0,
    ) -> "Se3Scale":
        return cls(quaternion_from_axis_angle(axis_angle), translation, scale)

    def matrix(self) -> torch.Tensor:
        return quaternion_to_matrix(self.rotation)

    def apply(self, points: TensorLike) -> torch.Tensor:
        """Map points from the local frame into the world frame."""
        p = as_tensor(points)
        return self.scale * (p @ self.matrix().T) + self.translation

    def inverse_apply(self, points: TensorLike) -> torch.Tensor:
        """Map points from the world frame into the local frame."""
        p = as_tensor(points)
        return ((p - self.translation) @ self.matrix()) / self.scale

    def rotate(self, directions: TensorLike) -> torch.Tensor:
        return as_tensor(directions) @ self.matrix().T

    def detach(self) -> "Se3Scale":
        return Se3Scale(
            self.rotation.detach(), self.translation.detach(), self.scale.detach()
        )


def se3_apply(transform: Se3Scale, points: TensorLike) -> torch.Tensor:
    """Apply a similarity transform to points of shape (..., 3).

    :param transform: The transform.
    :param points: The points in the local frame.
    :return: The points in the world frame.
    """
    return transform.apply(points)


@dataclass(frozen=True)
class Ray:
    """A ray, or a batch of rays. Directions are normalized on construction."""

    origin: torch.Tensor
    direction: torch.Tensor

    def __post_init__(self):
        origin = as_tensor(self.origin)
        direction = as_tensor(self.direction)
        norm = torch.linalg.norm(direction, dim=-1, keepdim=True)
        if bool((norm.detach() == 0).any()):
            raise DomainError("Ray direction must be non-zero")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction / norm)

    def __len__(self) -> int:
        return self.direction.shape[0] if self.direction.dim() > 1 else 1

    def at(self, t: TensorLike) -> torch.Tensor:
        """Points along the ray at parameters t."""
        return self.origin + as_tensor(t)[..., None] * self.direction

    def select(self, index) -> "Ray":
        return Ray(self.origin[index], self.direction[index])


@dataclass(frozen=True)
class Camera:
    """A pinhole camera with intrinsics and a rigid pose (camera to world)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: Se3Scale = field(default_factory=Se3Scale)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DomainError(
                f"Camera resolution must be positive, got {self.width}x{self.height}"
            )
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError(
                f"Focal lengths must be positive, got fx={self.fx} fy={self.fy}"
            )
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError(
                f"Principal point ({self.cx}, {self.cy}) lies outside the "
                f"{self.width}x{self.height} image"
            )
        if abs(float(self.pose.scale) - 1) > 1e-12:
            raise DomainError("Camera pose must be rigid (scale 1)")

    @property
    def center(self) -> torch.Tensor:
        return self.pose.translation

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    def pixel_grid(self) -> np.ndarray:
        """All pixel coordinates as (column, row) pairs in row-major order."""
        rows, cols = np.meshgrid(
            np.arange(self.height), np.arange(self.width), indexing="ij"
        )
        return np.stack([cols.ravel(), rows.ravel()], axis=1).astype(np.int64)

    def in_bounds(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.asarray(pixels)
        return (
            (pixels[..., 0] >= 0)
            & (pixels[..., 0] < self.width)
            & (pixels[..., 1] >= 0)
            & (pixels[..., 1] < self.height)
        )


def camera_rays(camera: Camera, pixels: TensorLike) -> Ray:
    """Generate world-space rays through pixel centers.

    Pixels are (column, row) pairs of shape (N, 2). Coordinates are not bounds
    checked, which permits sub-pixel and off-image samples.

    :param camera: The camera.
    :param pixels: The pixel coordinates.
    :return: A batch of N rays starting at the camera center.
    """
    px = as_tensor(pixels).reshape(-1, 2)
    directions = torch.stack(
        [
            (px[:, 0] - camera.cx) / camera.fx,
            (px[:, 1] - camera.cy) / camera.fy,
            torch.ones_like(px[:, 0]),
        ],
        dim=-1,
    )
    directions = camera.pose.rotate(directions)
    origins = camera.center.expand_as(directions)
    return Ray(origins, directions)


def camera_ray(camera: Camera, px: float, py: float) -> Ray:
    """Generate the world-space ray through a single pixel.

    :param camera: The camera.
    :param px: The pixel column.
    :param py: The pixel row.
    :return: A unit ray starting at the camera center.
    :raises DomainError: If the pixel lies outside the image.
    """
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise DomainError(
            f"Pixel ({px}, {py}) lies outside the {camera.width}x{camera.height} image"
        )
    rays = camera_rays(camera, [[px, py]])
    return Ray(rays.origin[0], rays.direction[0])


def project_points(camera: Camera, points: TensorLike) -> Tuple[torch.Tensor, torch.Tensor]:
    """Project world points to pixel coordinates.

    :return: A tuple of (N, 2) pixel coordinates and an (N,) boolean tensor
        which is true for points in front of the camera.
    """
    p = camera.pose.inverse_apply(as_tensor(points).reshape(-1, 3))
    z = p[:, 2]
    safe_z = torch.where(z > 0, z, torch.ones_like(z))
    uv = torch.stack(
        [camera.fx * p[:, 0] / safe_z + camera.cx, camera.fy * p[:, 1] / safe_z + camera.cy],
        dim=-1,
    )
    return uv, z > 0


def mirror_points(
    points: TensorLike, plane_point: TensorLike, plane_normal: TensorLike
) -> torch.Tensor:
    """Reflect points across a plane."""
    p = as_tensor(points)
    n = as_tensor(plane_normal)
    n = n / torch.linalg.norm(n)
    return p - 2 * _dot(p - as_tensor(plane_point), n)[..., None] * n


@dataclass(frozen=True)
class TriMesh:
    """A triangle mesh.

    Vertices are a (V, 3) tensor, triangles a (M, 3) integer array. Optional
    per-triangle part labels group triangles into rigid pieces. Triangles with
    area below MIN_TRIANGLE_AREA are dropped on construction.
    """

    vertices: torch.Tensor
    triangles: np.ndarray
    parts: Optional[np.ndarray] = None

    def __post_init__(self):
        vertices = as_tensor(self.vertices).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        parts = None if self.parts is None else np.asarray(self.parts, dtype=np.int64)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise DomainError(
                f"Triangle indices must lie in [0, {len(vertices)}), "
                f"got range [{triangles.min()}, {triangles.max()}]"
            )
        if parts is not None and len(parts) != len(triangles):
            raise DomainError(
                f"Expected {len(triangles)} part labels, got {len(parts)}"
            )
        if triangles.size:
            with torch.no_grad():
                corners = vertices[torch.from_numpy(triangles)]
                area = 0.5 * torch.linalg.norm(
                    torch.linalg.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0], dim=-1),
                    dim=-1,
                )
            keep = (area >= MIN_TRIANGLE_AREA).numpy()
            if not keep.all():
                triangles = triangles[keep]
                parts = None if parts is None else parts[keep]
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "parts", parts)

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(torch.zeros((0, 3), dtype=DTYPE), np.zeros((0, 3), dtype=np.int64))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def triangle_vertices(self) -> torch.Tensor:
        """The corners of every triangle, shape (M, 3, 3)."""
        return self.vertices[torch.from_numpy(self.triangles)]

    def areas(self) -> torch.Tensor:
        corners = self.triangle_vertices()
        return 0.5 * torch.linalg.norm(
            torch.linalg.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0], dim=-1),
            dim=-1,
        )

    def surface_area(self) -> float:
        return float(self.areas().sum()) if self.num_triangles else 0.0

    def bounding_sphere(self) -> Tuple[torch.Tensor, torch.Tensor]:
        """A detached bounding sphere around the box center of the vertices."""
        v = self.vertices.detach()
        if not len(v):
            raise DomainError("Cannot bound an empty mesh")
        center = 0.5 * (v.min(0).values + v.max(0).values)
        return center, torch.linalg.norm(v - center, dim=-1).max()

    def part_bounding_spheres(self) -> Tuple[np.ndarray, torch.Tensor, torch.Tensor]:
        """Detached bounding spheres of every part.

        :return: A tuple of (part labels, (P, 3) centers, (P,) radii).
        """
        parts = (
            np.zeros(self.num_triangles, dtype=np.int64) if self.parts is None else self.parts
        )
        labels = np.unique(parts)
        v = self.vertices.detach()
        centers, radii = [], []
        for label in labels:
            indices = np.unique(self.triangles[parts == label])
            pv = v[torch.from_numpy(indices)]
            center = 0.5 * (pv.min(0).values + pv.max(0).values)
            centers.append(center)
            radii.append(torch.linalg.norm(pv - center, dim=-1).max())
        return labels, torch.stack(centers), torch.stack(radii)

    def euler_characteristic(self) -> int:
        """V - E + F over the vertices referenced by triangles."""
        if not self.num_triangles:
            return 0
        edges = np.sort(
            np.concatenate(
                [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
            ),
            axis=1,
        )
        num_edges = len(np.unique(edges, axis=0))
        num_vertices = len(np.unique(self.triangles))
        return num_vertices - num_edges + self.num_triangles

    def transformed(self, transform: Se3Scale) -> "TriMesh":
        return TriMesh(transform.apply(self.vertices), self.triangles, self.parts)

    def detach(self) -> "TriMesh":
        return TriMesh(self.vertices.detach(), self.triangles, self.parts)


def concatenate_meshes(meshes: Iterable[TriMesh]) -> TriMesh:
    """Merge meshes into one, keeping the part labels of each input distinct."""
    meshes = list(meshes)
    if not meshes:
        return TriMesh.empty()
    vertices, triangles, parts = [], [], []
    vertex_offset = part_offset = 0
    for mesh in meshes:
        vertices.append(mesh.vertices)
        triangles.append(mesh.triangles + vertex_offset)
        mesh_parts = (
            np.zeros(mesh.num_triangles, dtype=np.int64) if mesh.parts is None else mesh.parts
        )
        parts.append(mesh_parts + part_offset)
        vertex_offset += mesh.num_vertices
        part_offset += int(mesh_parts.max()) + 1 if len(mesh_parts) else 0
    return TriMesh(torch.cat(vertices), np.concatenate(triangles), np.concatenate(parts))


# Elementwise kernels. Arguments broadcast against each other: o and d are ray
# origins and unit directions, a, b, c are triangle corners.


def _point_segment_sq(p, a, b):
    ab = b - a
    denom = _dot(ab, ab)
    u = (_dot(p - a, ab) / denom).clamp(0.0, 1.0)
    diff = p - (a + u[..., None] * ab)
    return _dot(diff, diff)


def _point_ray_sq(p, o, d):
    s = _dot(p - o, d).clamp(min=0.0)
    diff = o + s[..., None] * d - p
    return _dot(diff, diff)


def _ray_segment_sq(o, d, a, b):
    e = b - a
    w = o - a
    c = _dot(e, e)
    bb = _dot(d, e)
    dw = _dot(d, w)
    ew = _dot(e, w)
    denom = c - bb * bb
    ok = denom > 1e-12 * c
    safe = torch.where(ok, denom, torch.ones_like(denom))
    u = (ew - bb * dw) / safe
    s = u * bb - dw
    inside = ok & (u >= 0) & (u <= 1) & (s >= 0)
    diff = w + s[..., None] * d - u[..., None] * e
    interior = torch.where(inside, _dot(diff, diff), torch.full_like(denom, float("inf")))
    endpoints = torch.minimum(_point_ray_sq(a, o, d), _point_ray_sq(b, o, d))
    return torch.minimum(torch.minimum(interior, _point_segment_sq(o, a, b)), endpoints)


def _point_triangle_sq(p, a, b, c):
    n = torch.linalg.cross(b - a, c - a, dim=-1)
    nn = _dot(n, n)
    height = _dot(p - a, n)
    proj = p - (height / nn)[..., None] * n
    inside = (
        (_dot(torch.linalg.cross(b - a, proj - a, dim=-1), n) >= 0)
        & (_dot(torch.linalg.cross(c - b, proj - b, dim=-1), n) >= 0)
        & (_dot(torch.linalg.cross(a - c, proj - c, dim=-1), n) >= 0)
    )
    edges = torch.minimum(
        torch.minimum(_point_segment_sq(p, a, b), _point_segment_sq(p, b, c)),
        _point_segment_sq(p, c, a),
    )
    return torch.where(inside, height * height / nn, edges)


def _ray_triangle_hit(o, d, a, b, c, t_min: float = 0.0):
    """Closed Möller–Trumbore test. Returns (hit, t), never differentiable."""
    with torch.no_grad():
        e1 = b - a
        e2 = c - a
        pvec = torch.linalg.cross(d, e2, dim=-1)
        det = _dot(e1, pvec)
        scale = torch.linalg.norm(e1, dim=-1) * torch.linalg.norm(e2, dim=-1)
        ok = det.abs() > 1e-12 * scale
        inv = 1.0 / torch.where(ok, det, torch.ones_like(det))
        tvec = o - a
        u = _dot(tvec, pvec) * inv
        qvec = torch.linalg.cross(tvec, e1, dim=-1)
        v = _dot(d, qvec) * inv
        t = _dot(e2, qvec) * inv
        tol = BARYCENTRIC_TOLERANCE
        hit = ok & (u >= -tol) & (v >= -tol) & (u + v <= 1 + tol) & (t >= t_min - tol)
    return hit, t


def _ray_triangle_sq_distance(o, d, a, b, c, hit=None):
    sq = torch.minimum(
        torch.minimum(_ray_segment_sq(o, d, a, b), _ray_segment_sq(o, d, b, c)),
        torch.minimum(_ray_segment_sq(o, d, c, a), _point_triangle_sq(o, a, b, c)),
    )
    if hit is None:
        hit, _ = _ray_triangle_hit(o, d, a, b, c)
    return torch.where(hit, torch.zeros_like(sq), sq)


def _sqrt_positive(sq: torch.Tensor) -> torch.Tensor:
    positive = sq > 0
    return torch.where(
        positive, torch.sqrt(torch.where(positive, sq, torch.ones_like(sq))), torch.zeros_like(sq)
    )


def ray_triangle_intersect(ray: Ray, triangle: TensorLike) -> Tuple[bool, float]:
    """Closed ray-triangle intersection test.

    :param ray: A single ray.
    :param triangle: The (3, 3) triangle corners.
    :return: A tuple of (hit, t) where t is the ray parameter of the hit point,
        or infinity if there is no hit. Boundary contacts count as hits.
    """
    tri = as_tensor(triangle).reshape(3, 3)
    hit, t = _ray_triangle_hit(ray.origin, ray.direction, tri[0], tri[1], tri[2])
    hit = bool(hit)
    return hit, float(t) if hit else float("inf")


def ray_triangle_distance(ray: Ray, triangle: TensorLike) -> torch.Tensor:
    """Minimum distance between a ray and a triangle.

    The distance is zero exactly when the ray intersects the triangle.
    Otherwise it is the smallest of the point-triangle distance from the ray
    origin and the ray-segment distances to the three edges. The result is
    differentiable with respect to the ray and the triangle.

    :param ray: A single ray.
    :param triangle: The (3, 3) triangle corners.
    :return: A scalar tensor.
    """
    tri = as_tensor(triangle).reshape(3, 3)
    sq = _ray_triangle_sq_distance(ray.origin, ray.direction, tri[0], tri[1], tri[2])
    return _sqrt_positive(sq)


def ray_triangle_intersect_matrix(
    origins: torch.Tensor, directions: torch.Tensor, triangles: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Intersect N rays against M triangles.

    :param origins: (N, 3) ray origins.
    :param directions: (N, 3) unit ray directions.
    :param triangles: (M, 3, 3) triangle corners.
    :return: A tuple of (N, M) boolean hits and (N, M) ray parameters.
    """
    o, d = origins[:, None, :], directions[:, None, :]
    a, b, c = (triangles[None, :, k, :] for k in range(3))
    return _ray_triangle_hit(o, d, a, b, c)


def ray_triangle_distance_matrix(
    origins: torch.Tensor,
    directions: torch.Tensor,
    triangles: torch.Tensor,
    hits: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Squared ray-triangle distances for N rays against M triangles.

    :return: An (N, M) tensor which is zero where a ray hits a triangle.
    """
    o, d = origins[:, None, :], directions[:, None, :]
    a, b, c = (triangles[None, :, k, :] for k in range(3))
    return _ray_triangle_sq_distance(o, d, a, b, c, hits)


def ray_triangle_pairs(
    origins: torch.Tensor, directions: torch.Tensor, triangles: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Hits and squared distances for P paired rays and triangles.

    :param origins: (P, 3) ray origins.
    :param directions: (P, 3) unit ray directions.
    :param triangles: (P, 3, 3) triangle corners.
    :return: A tuple of (P,) boolean hits and (P,) squared distances.
    """
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    hit, _ = _ray_triangle_hit(origins, directions, a, b, c)
    return hit, _ray_triangle_sq_distance(origins, directions, a, b, c, hit)


def point_ray_distance_sq(points: torch.Tensor, origins: torch.Tensor, directions: torch.Tensor) -> torch.Tensor:
    """Squared distance from points to rays, broadcasting over leading dims."""
    return _point_ray_sq(points, origins, directions)


def _ray_triangle_inside_sq(o, d, a, b, c):
    """Squared distance from the ray's crossing of the triangle plane to the
    nearest triangle edge. Meaningful only for rays which hit the triangle."""
    e1 = b - a
    e2 = c - a
    n = torch.linalg.cross(e1, e2, dim=-1)
    denom = _dot(d, n)
    safe = torch.where(denom.abs() > 0, denom, torch.ones_like(denom))
    t = _dot(a - o, n) / safe
    x = o + t[..., None] * d
    return torch.minimum(
        torch.minimum(_point_segment_sq(x, a, b), _point_segment_sq(x, b, c)),
        _point_segment_sq(x, c, a),
    )


def ray_triangle_signed_pairs(
    origins: torch.Tensor, directions: torch.Tensor, triangles: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Hits and influence distances for P paired rays and triangles.

    Missing pairs report the squared ray-triangle distance. Hitting pairs
    report the squared distance from the crossing point to the triangle
    boundary, so that both sides of a silhouette edge approach zero distance.

    :return: A tuple of (P,) boolean hits and (P,) squared distances.
    """
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    hit, _ = _ray_triangle_hit(origins, directions, a, b, c)
    outside = _ray_triangle_sq_distance(origins, directions, a, b, c, hit)
    inside = _ray_triangle_inside_sq(origins, directions, a, b, c)
    return hit, torch.where(hit, inside, outside)
