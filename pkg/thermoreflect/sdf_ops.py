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
"""The SDF ops evaluate parametric signed distance fields, trace rays against
them, and extract meshes from them.

A shape is a family-specific base field f placed in the world by a similarity
transform, giving G(p) = s·f(R⁻¹(p − T)/s). Fields are negative inside.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple, Union

import numpy as np
import torch
from absl import logging
from skimage import measure

from thermoreflect.exceptions import DomainError
from thermoreflect.geometry_ops import (
    DTYPE,
    Ray,
    Se3Scale,
    TensorLike,
    TriMesh,
    as_tensor,
    safe_norm,
)

# Number of latent values per analytic family. Grid shapes store one value per
# grid node instead.
LATENT_SIZES = {
    "sphere": 1,
    "ellipsoid": 3,
    "rounded-box": 4,
    "bowl": 3,
    "plane": 0,
}

FAMILIES = ("sphere", "ellipsoid", "rounded-box", "bowl", "grid", "plane")

MIN_GRID_RESOLUTION = 8

# Radius of the rounded bowl rim, capped at half the shell thickness.
BOWL_RIM_ROUNDING = 5e-3

# Rays with |∇G·d| below this are treated as grazing and not converged.
GRAZING_THRESHOLD = 1e-9

SdfField = Callable[[torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class SdfGrid:
    """Grid geometry of a sampled SDF: node counts and the local bounding box.

    Node values are stored in the shape's latent, x varying fastest.
    """

    resolution: Tuple[int, int, int]
    box_min: Tuple[float, float, float]
    box_max: Tuple[float, float, float]

    def __post_init__(self):
        if len(self.resolution) != 3 or min(self.resolution) < MIN_GRID_RESOLUTION:
            raise DomainError(
                f"Grid resolution must be at least {MIN_GRID_RESOLUTION} per axis, "
                f"got {tuple(self.resolution)}"
            )
        if not all(hi > lo for lo, hi in zip(self.box_min, self.box_max)):
            raise DomainError(
                f"Grid bounding box must have positive extent, got "
                f"{tuple(self.box_min)} to {tuple(self.box_max)}"
            )

    @property
    def size(self) -> int:
        nx, ny, nz = self.resolution
        return nx * ny * nz

    def contains(self, local_points: torch.Tensor) -> torch.Tensor:
        lo = torch.tensor(self.box_min, dtype=DTYPE)
        hi = torch.tensor(self.box_max, dtype=DTYPE)
        return ((local_points >= lo) & (local_points <= hi)).all(-1)


@dataclass(frozen=True)
class SdfShape:
    """A parametric SDF shape: a family, its latent, and its placement.

    Latent layouts:
        sphere: [radius]
        ellipsoid: [rx, ry, rz]
        rounded-box: [hx, hy, hz, rounding]
        bowl: [outer radius, inner radius, rim height]
        plane: []
        grid: the node values, x varying fastest
    """

    family: str
    latent: torch.Tensor
    placement: Se3Scale = field(default_factory=Se3Scale)
    grid: Optional[SdfGrid] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(
                f"Unsupported SDF family `{self.family}`. "
                f"Supported families: {', '.join(FAMILIES)}"
            )
        latent = as_tensor(self.latent).reshape(-1)
        object.__setattr__(self, "latent", latent)
        if self.family == "grid":
            if self.grid is None:
                raise DomainError("Grid shapes require grid geometry")
            if len(latent) != self.grid.size:
                raise DomainError(
                    f"Grid of resolution {tuple(self.grid.resolution)} requires "
                    f"{self.grid.size} values, got {len(latent)}"
                )
        else:
            expected = LATENT_SIZES[self.family]
            if len(latent) != expected:
                raise DomainError(
                    f"Family `{self.family}` takes {expected} latent values, "
                    f"got {len(latent)}"
                )
            _check_sizes(self.family, latent.detach())

    @property
    def local_scale(self) -> float:
        """A length scale of the shape in its local frame."""
        if self.family == "grid":
            return float(np.linalg.norm(np.subtract(self.grid.box_max, self.grid.box_min)))
        if self.family == "plane":
            return 1.0
        return float(self.latent.detach().max())

    def with_params(
        self,
        latent: Optional[TensorLike] = None,
        placement: Optional[Se3Scale] = None,
    ) -> "SdfShape":
        return replace(
            self,
            latent=self.latent if latent is None else latent,
            placement=self.placement if placement is None else placement,
        )

    def detach(self) -> "SdfShape":
        return SdfShape(self.family, self.latent.detach(), self.placement.detach(), self.grid)


def _check_sizes(family: str, z: torch.Tensor) -> None:
    values = z.tolist()
    if family in ("sphere", "ellipsoid") and min(values) <= 0:
        raise DomainError(f"Family `{family}` requires positive radii, got {values}")
    if family == "rounded-box":
        hx, hy, hz, rounding = values
        if min(hx, hy, hz) <= 0 or not 0 < rounding < min(hx, hy, hz):
            raise DomainError(
                "Family `rounded-box` requires positive half extents and a rounding "
                f"radius in (0, min half extent), got {values}"
            )
    if family == "bowl":
        outer, inner, rim = values
        if not outer > inner > 0:
            raise DomainError(
                "Family `bowl` requires outer radius > inner radius > 0, "
                f"got {values}"
            )
        if abs(rim) >= 0.5 * (outer + inner):
            raise DomainError(
                "Family `bowl` requires |rim height| below the mid-wall radius, "
                f"got {values}"
            )


def project_latent(family: str, latent: torch.Tensor) -> torch.Tensor:
    """Clamp a latent into the valid domain of its family.

    Used after optimizer steps, which may step outside the domain.
    """
    z = latent.detach().clone()
    floor = 1e-3
    if family in ("sphere", "ellipsoid"):
        z = z.clamp(min=floor)
    elif family == "rounded-box":
        z[:3] = z[:3].clamp(min=floor)
        z[3] = z[3].clamp(min=floor * 0.1, max=0.9 * float(z[:3].min()))
    elif family == "bowl":
        z[1] = z[1].clamp(min=floor)
        z[0] = torch.maximum(z[0], z[1] + floor)
        limit = 0.45 * float(z[0] + z[1])
        z[2] = z[2].clamp(min=-limit, max=limit)
    return z


# Base fields, evaluated in the local frame.


def _sphere(q: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    return safe_norm(q) - z[0]


def _ellipsoid(q: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    return (safe_norm(q / z) - 1.0) * z.min()


def _rounded_box(q: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    half, rounding = z[:3], z[3]
    d = q.abs() - (half - rounding)
    outside = safe_norm(d.clamp(min=0.0))
    inside = d.max(-1).values.clamp(max=0.0)
    return outside + inside - rounding


def _bowl(q: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    # The shell between the inner and outer spheres, cut by the plane y = rim
    # height with the part below kept, so the opening faces +y. The cut shell
    # is shrunk by the rounding radius and grown back, which rounds the rim.
    outer, inner, h = z[0], z[1], z[2]
    rounding = torch.clamp(0.5 * (outer - inner), max=BOWL_RIM_ROUNDING)
    r_in, r_out, cap = inner + rounding, outer - rounding, h - rounding
    qx = safe_norm(q[..., [0, 2]])
    qy = q[..., 1]
    length = torch.sqrt(qx * qx + qy * qy + 1e-30)
    distances = []
    for radius in (r_in, r_out):
        # Nearest point on the sphere counts only if it lies below the cut.
        below = qy * radius <= cap * length
        far = torch.full_like(length, np.inf)
        distances.append(torch.where(below, (length - radius).abs(), far))
    x_in = torch.sqrt(torch.clamp(r_in * r_in - cap * cap, min=0.0))
    x_out = torch.sqrt(torch.clamp(r_out * r_out - cap * cap, min=0.0))
    cx = torch.minimum(torch.maximum(qx, x_in), x_out)
    distances.append(torch.sqrt((qx - cx) ** 2 + (qy - cap) ** 2 + 1e-30))
    unsigned = torch.stack(distances).min(0).values
    inside = (length >= r_in) & (length <= r_out) & (qy <= cap)
    return torch.where(inside, -unsigned, unsigned) - rounding


def _plane(q: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    return q[..., 2]


def _trilinear(grid: SdfGrid, values: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    nx, ny, nz = grid.resolution
    volume = values.reshape(nz, ny, nx)
    lo = torch.tensor(grid.box_min, dtype=DTYPE)
    hi = torch.tensor(grid.box_max, dtype=DTYPE)
    counts = torch.tensor([nx, ny, nz], dtype=DTYPE)
    g = (q - lo) / (hi - lo) * (counts - 1)
    base = torch.minimum(g.detach().floor().clamp(min=0), counts - 2)
    frac = g - base
    i0 = base.long()
    out = torch.zeros(q.shape[:-1], dtype=DTYPE)
    for dx in (0, 1):
        wx = frac[..., 0] if dx else 1 - frac[..., 0]
        for dy in (0, 1):
            wy = frac[..., 1] if dy else 1 - frac[..., 1]
            for dz in (0, 1):
                wz = frac[..., 2] if dz else 1 - frac[..., 2]
                corner = volume[i0[..., 2] + dz, i0[..., 1] + dy, i0[..., 0] + dx]
                out = out + wx * wy * wz * corner
    return out


def _grid(grid: SdfGrid, values: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    # Outside the box the field continues as the value at the nearest box point
    # plus the distance to the box.
    lo = torch.tensor(grid.box_min, dtype=DTYPE)
    hi = torch.tensor(grid.box_max, dtype=DTYPE)
    clamped = torch.maximum(torch.minimum(q, hi), lo)
    outside = q - clamped
    gap = torch.where(
        (outside != 0).any(-1), safe_norm(outside), torch.zeros(q.shape[:-1], dtype=DTYPE)
    )
    return _trilinear(grid, values, clamped) + gap


_BASE_FIELDS = {
    "sphere": _sphere,
    "ellipsoid": _ellipsoid,
    "rounded-box": _rounded_box,
    "bowl": _bowl,
    "plane": _plane,
}


def sdf_eval(shape: SdfShape, points: TensorLike) -> torch.Tensor:
    """Evaluate the signed distance of a shape at world points.

    :param shape: The shape.
    :param points: World points of shape (..., 3).
    :return: A tensor of shape (...), negative inside the shape. The result is
        differentiable with respect to the points, the latent, and the
        placement.
    """
    p = as_tensor(points)
    s = shape.placement.scale
    q = shape.placement.inverse_apply(p)
    if shape.family == "grid":
        return s * _grid(shape.grid, shape.latent, q)
    return s * _BASE_FIELDS[shape.family](q, shape.latent)


def field_gradient(
    sdf: SdfField, points: torch.Tensor, create_graph: bool = False
) -> torch.Tensor:
    """The spatial gradient of a field by automatic differentiation.

    If create_graph is set, the result remains differentiable with respect to
    whatever the points and the field depend on.
    """
    with torch.enable_grad():
        p = points if points.requires_grad else points.detach().requires_grad_(True)
        values = sdf(p)
        (grad,) = torch.autograd.grad(values.sum(), p, create_graph=create_graph)
    return grad


def sdf_gradient(shape: SdfShape, points: TensorLike, create_graph: bool = False) -> torch.Tensor:
    """The spatial gradient of a shape's signed distance at world points.

    :param shape: The shape.
    :param points: World points of shape (..., 3).
    :param create_graph: Keep the result differentiable.
    :return: A tensor of shape (..., 3).
    :raises DomainError: If a grid shape is queried outside its bounding box.
    """
    p = as_tensor(points)
    if shape.family == "grid":
        with torch.no_grad():
            inside = shape.grid.contains(shape.placement.inverse_apply(p.detach()))
        if not bool(inside.all()):
            raise DomainError("Gradient queried outside the grid bounding box")
    return field_gradient(lambda x: sdf_eval(shape, x), p, create_graph)


def as_field(shape: Union[SdfShape, SdfField]) -> SdfField:
    if isinstance(shape, SdfShape):
        return lambda p: sdf_eval(shape, p)
    return shape


@dataclass(frozen=True)
class SdfHit:
    """The result of tracing a batch of rays against a field.

    Points, depths, and normals are differentiable for converged rays by
    implicit differentiation of G(o + t·d) = 0. Values of rays which did not
    converge are undefined.
    """

    point: torch.Tensor
    depth: torch.Tensor
    normal: torch.Tensor
    converged: torch.Tensor
    residual: torch.Tensor


def march(
    sdf: SdfField,
    origins: torch.Tensor,
    directions: torch.Tensor,
    t_start: torch.Tensor,
    max_steps: int,
    eps: float,
    max_depth: float,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Sphere trace without gradients.

    :return: A tuple of (t, G at t, t of the smallest |G| seen along the ray).
    """
    with torch.no_grad():
        o, d = origins.detach(), directions.detach()
        t = t_start.detach().clone()
        values = sdf(o + t[..., None] * d)
        t_best = t.clone()
        best = values.abs()
        for _ in range(max_steps):
            active = (values.abs() > eps) & (t <= max_depth)
            if not bool(active.any()):
                break
            t = torch.where(active, t + values, t)
            values = sdf(o + t[..., None] * d)
            closer = values.abs() < best
            best = torch.where(closer, values.abs(), best)
            t_best = torch.where(closer, t, t_best)
    return t, values, t_best


def finish_hit(sdf: SdfField, ray: Ray, t: torch.Tensor, converged: torch.Tensor) -> SdfHit:
    """Build a differentiable hit record from detached ray parameters."""
    t = t.detach()
    with torch.no_grad():
        p0 = ray.origin.detach() + t[..., None] * ray.direction.detach()
    grad0 = field_gradient(sdf, p0).detach()
    slope = (grad0 * ray.direction.detach()).sum(-1)
    converged = converged & (slope.abs() >= GRAZING_THRESHOLD)
    if torch.is_grad_enabled():
        live = sdf(ray.origin + t[..., None] * ray.direction)
        safe_slope = torch.where(converged, slope, torch.ones_like(slope))
        t_live = torch.where(converged, t - (live - live.detach()) / safe_slope, t)
    else:
        t_live = t
    point = ray.origin + t_live[..., None] * ray.direction
    grad = field_gradient(sdf, point, create_graph=torch.is_grad_enabled())
    normal = grad / safe_norm(grad, keepdim=True)
    with torch.no_grad():
        residual = sdf(p0).abs()
    return SdfHit(point, t_live, normal, converged, residual)


def sphere_trace(
    shape: Union[SdfShape, SdfField],
    ray: Ray,
    max_steps: int = 64,
    eps: float = 1e-4,
    t_start: TensorLike = 0.0,
    max_depth: float = 20.0,
) -> SdfHit:
    """Trace rays against a shape by sphere tracing.

    The march itself carries no gradient. Converged hits are made
    differentiable by implicit differentiation, so the hit depth responds to
    changes of the ray and of the shape as dt = -dG / (∇G·d).

    :param shape: A shape, or any callable mapping points to signed distances.
    :param ray: A single ray or a batch of rays.
    :param max_steps: The maximum number of march steps.
    :param eps: Convergence threshold on |G|.
    :param t_start: Ray parameter to start marching from.
    :param max_depth: Rays marching beyond this parameter escape.
    :return: The hit record. Grazing rays, with |∇G·d| < 1e-9 at the final
        point, are reported as not converged.
    """
    sdf = as_field(shape)
    batch = ray.direction.shape[:-1]
    t0 = as_tensor(t_start).expand(batch).clone()
    t, values, _ = march(sdf, ray.origin, ray.direction, t0, max_steps, eps, max_depth)
    converged = (values.abs() <= eps) & (t <= max_depth) & (t >= 0)
    return finish_hit(sdf, ray, t, converged)


def marching_cubes(
    shape: SdfShape,
    bounds: Tuple[TensorLike, TensorLike],
    resolution: int,
    chunk: int = 65536,
) -> TriMesh:
    """Extract the zero level set of a shape as a triangle mesh.

    :param shape: The shape.
    :param bounds: The (min corner, max corner) of the sampling box.
    :param resolution: Samples per axis.
    :return: The mesh, empty if the field does not cross zero in the box.
    """
    if resolution < MIN_GRID_RESOLUTION:
        raise DomainError(
            f"Marching cubes resolution must be at least {MIN_GRID_RESOLUTION}, got {resolution}"
        )
    lo = np.asarray(bounds[0], dtype=np.float64).reshape(3)
    hi = np.asarray(bounds[1], dtype=np.float64).reshape(3)
    if not (hi > lo).all():
        raise DomainError(f"Empty sampling box {lo.tolist()} to {hi.tolist()}")
    axes = [np.linspace(lo[k], hi[k], resolution) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    with torch.no_grad():
        points = torch.from_numpy(grid)
        values = torch.cat(
            [sdf_eval(shape.detach(), points[i : i + chunk]) for i in range(0, len(points), chunk)]
        )
    volume = values.numpy().reshape(resolution, resolution, resolution)
    if volume.min() > 0 or volume.max() < 0:
        logging.debug("Field does not cross zero in the sampling box")
        return TriMesh.empty()
    spacing = tuple((hi - lo) / (resolution - 1))
    try:
        vertices, faces, _, _ = measure.marching_cubes(volume, level=0.0, spacing=spacing)
    except (ValueError, RuntimeError) as e:
        logging.debug("Marching cubes found no surface: %s", e)
        return TriMesh.empty()
    return TriMesh(vertices + lo, faces)


def shape_bounds(shape: SdfShape, margin: float = 0.1) -> Tuple[np.ndarray, np.ndarray]:
    """A world-space box which encloses a bounded shape."""
    if shape.family == "plane":
        raise DomainError("Planes are unbounded")
    if shape.family == "grid":
        corners = np.array(
            [[x, y, z] for x in (shape.grid.box_min[0], shape.grid.box_max[0])
             for y in (shape.grid.box_min[1], shape.grid.box_max[1])
             for z in (shape.grid.box_min[2], shape.grid.box_max[2])]
        )
        radius = float(np.linalg.norm(corners, axis=1).max())
    elif shape.family == "rounded-box":
        radius = float(torch.linalg.norm(shape.latent.detach()[:3]))
    else:
        radius = float(shape.latent.detach()[:2].max()) if shape.family == "bowl" else float(
            shape.latent.detach().max()
        )
    radius = radius * float(shape.placement.scale) * (1 + margin)
    center = shape.placement.translation.detach().numpy()
    return center - radius, center + radius


def normal_coherence(
    shape: SdfShape,
    point: TensorLike,
    half_extent: float = 8e-3,
    step: float = 2e-4,
    projection_steps: int = 3,
) -> np.ndarray:
    """Surface normal agreement over a small tangent patch.

    Points of a square tangent grid around a surface point are projected onto
    the surface by Newton steps. Each entry of the result is the dot product of
    the normal there with the normal at the centre point.

    :return: A square array with side 2·round(half_extent/step) + 1.
    """
    p0 = as_tensor(point).reshape(3).detach()
    n0 = sdf_gradient(shape, p0[None])[0]
    n0 = n0 / torch.linalg.norm(n0)
    helper = torch.tensor([1.0, 0.0, 0.0], dtype=DTYPE)
    if float(n0[0].abs()) > 0.9:
        helper = torch.tensor([0.0, 1.0, 0.0], dtype=DTYPE)
    e1 = torch.linalg.cross(n0, helper)
    e1 = e1 / torch.linalg.norm(e1)
    e2 = torch.linalg.cross(n0, e1)
    k = int(round(half_extent / step))
    offsets = torch.arange(-k, k + 1, dtype=DTYPE) * step
    u, v = torch.meshgrid(offsets, offsets, indexing="ij")
    q = p0 + u[..., None] * e1 + v[..., None] * e2
    q = q.reshape(-1, 3)
    sdf = as_field(shape)
    for _ in range(projection_steps):
        grad = field_gradient(sdf, q)
        with torch.no_grad():
            q = q - (sdf(q) / (grad * grad).sum(-1))[..., None] * grad
    grad = field_gradient(sdf, q)
    normals = grad / torch.linalg.norm(grad, dim=-1, keepdim=True)
    return (normals @ n0).reshape(2 * k + 1, 2 * k + 1).numpy()
