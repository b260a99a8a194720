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
"""The render ops form images of a scene.

Two renderers are provided. The reflection renderer traces camera rays to the
mirror objects, reflects them, and measures a soft occupancy of the emitter
mesh along each reflected ray. The depth-and-mask renderer traces camera rays
against each object to produce depth maps and soft object masks. Both are
differentiable with respect to every scene parameter.
"""
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from absl import logging

from thermoreflect.emitter_ops import build_emitter_mesh
from thermoreflect.exceptions import DomainError
from thermoreflect.geometry_ops import (
    DTYPE,
    Camera,
    Ray,
    TensorLike,
    TriMesh,
    as_tensor,
    camera_rays,
    mirror_points,
    point_ray_distance_sq,
    ray_triangle_intersect_matrix,
    ray_triangle_signed_pairs,
    safe_norm,
)
from thermoreflect.scene import Scene, scene_field, scene_sdf
from thermoreflect.sdf_ops import SdfHit, SdfField, finish_hit, march

# Ray-part pairs whose normalized squared gap over sigma exceeds this are
# skipped. Their influence is below sigmoid(-30).
CULL_THRESHOLD = 30.0

# A ray whose hit test converges farther than this many march_eps beyond the
# refined point has passed the bracketed surface and hit another one.
FARTHER_HIT_MARGIN = 10.0

NEIGHBOUR_OFFSETS = (
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
)


@dataclass(frozen=True)
class RenderConfig:
    """Settings of both renderers.

    sigma is the softness of the occupancy, in units of squared distance
    normalized by the emitter's bounding radius. It is annealed by
    sigma_decay every sigma_decay_every iterations down to sigma_floor.

    Primary rays first march up to march_steps steps until |G| ≤ march_eps,
    then refine the hit point with sphere_steps further steps, stopping early
    below eps. A ray counts as a hit if marching on reaches |G| ≤ eps.

    The edge sampling curriculum draws a fraction u(k) = max(u_floor,
    1 - k / u_horizon) of rays uniformly and the rest near silhouette edges
    with a Gaussian bandwidth b(k) = max(b_floor, b_start · b_decay^k) pixels.
    """

    sigma: float = 1e-2
    sigma_decay: float = 0.5
    sigma_decay_every: int = 200
    sigma_floor: float = 1e-4
    sphere_steps: int = 3
    eps: float = 1e-4
    march_steps: int = 128
    march_eps: float = 3e-3
    max_depth: float = 20.0
    smoothing: bool = True
    smoothing_offset: float = 0.5
    edge_sampling: bool = True
    edge_uniform_floor: float = 0.1
    edge_uniform_horizon: int = 500
    edge_bandwidth_start: float = 8.0
    edge_bandwidth_decay: float = 0.99
    edge_bandwidth_floor: float = 1.0
    ray_budget: int = 1024
    ray_chunk: int = 128
    mask_sigma: float = 1e-3
    segments: int = 8
    debug: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.sigma_floor <= self.sigma:
            raise DomainError(
                f"sigma_floor must lie in (0, sigma], got {self.sigma_floor}"
            )
        if not 0 < self.sigma_decay <= 1 or self.sigma_decay_every < 1:
            raise DomainError("Invalid sigma annealing schedule")
        if self.sphere_steps < 1:
            raise DomainError(f"sphere_steps must be at least 1, got {self.sphere_steps}")
        if self.march_steps < 1:
            raise DomainError(f"march_steps must be at least 1, got {self.march_steps}")
        if not (self.eps > 0 and self.march_eps > 0 and self.max_depth > 0):
            raise DomainError("Tracing tolerances and max_depth must be positive")
        if self.ray_budget < 1:
            raise DomainError(f"ray_budget must be at least 1, got {self.ray_budget}")
        if self.ray_chunk < 1:
            raise DomainError(f"ray_chunk must be at least 1, got {self.ray_chunk}")
        if not self.mask_sigma > 0:
            raise DomainError(f"mask_sigma must be positive, got {self.mask_sigma}")
        if not 0 <= self.edge_uniform_floor <= 1 or self.edge_uniform_horizon < 1:
            raise DomainError("Invalid edge sampling mixing schedule")
        if not 0 < self.edge_bandwidth_floor <= self.edge_bandwidth_start:
            raise DomainError("Invalid edge sampling bandwidth schedule")

    def sigma_at(self, iteration: int) -> float:
        return max(
            self.sigma_floor,
            self.sigma * self.sigma_decay ** (iteration // self.sigma_decay_every),
        )

    def edge_uniform_weight(self, iteration: int) -> float:
        return max(self.edge_uniform_floor, 1.0 - iteration / self.edge_uniform_horizon)

    def edge_bandwidth(self, iteration: int) -> float:
        return max(
            self.edge_bandwidth_floor,
            self.edge_bandwidth_start * self.edge_bandwidth_decay ** iteration,
        )


@dataclass(frozen=True)
class SoftImage:
    """A single-channel image with values in [0, 1].

    Only the pixels flagged in `sampled` carry rendered values. The others are
    zero and excluded from losses.
    """

    values: torch.Tensor
    sampled: Optional[np.ndarray] = None

    def __post_init__(self):
        values = as_tensor(self.values)
        if values.dim() != 2:
            raise DomainError(f"Images must be two-dimensional, got shape {tuple(values.shape)}")
        sampled = (
            np.ones(values.shape, dtype=bool)
            if self.sampled is None
            else np.asarray(self.sampled, dtype=bool)
        )
        if sampled.shape != tuple(values.shape):
            raise DomainError("Sample mask must match the image shape")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sampled", sampled)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_samples(
        cls, camera: Camera, pixels: np.ndarray, samples: torch.Tensor
    ) -> "SoftImage":
        linear = torch.from_numpy(pixels[:, 1] * camera.width + pixels[:, 0])
        flat = torch.zeros(camera.num_pixels, dtype=DTYPE).index_copy(0, linear, samples)
        sampled = np.zeros(camera.num_pixels, dtype=bool)
        sampled[linear.numpy()] = True
        return cls(
            flat.reshape(camera.height, camera.width),
            sampled.reshape(camera.height, camera.width),
        )

    def binarized(self, threshold: float = 0.5) -> np.ndarray:
        return self.values.detach().numpy() >= threshold

    def detach(self) -> "SoftImage":
        return SoftImage(self.values.detach(), self.sampled)


@dataclass(frozen=True)
class MirrorHits:
    """Per-pixel records of camera rays traced to the mirror objects."""

    width: int
    pixels: np.ndarray
    hit: torch.Tensor
    point: torch.Tensor
    normal: torch.Tensor
    incident: torch.Tensor
    reflected: torch.Tensor
    object_index: torch.Tensor

    def select(self, pixels: np.ndarray) -> "MirrorHits":
        """Restrict the records to a subset of their pixels."""
        own = self.pixels[:, 1] * self.width + self.pixels[:, 0]
        query = pixels[:, 1] * self.width + pixels[:, 0]
        order = np.argsort(own)
        position = np.searchsorted(own[order], query)
        position = np.minimum(position, len(own) - 1)
        rows = order[position]
        if not (own[rows] == query).all():
            raise DomainError("Requested pixels are not covered by the traced mirror")
        index = torch.from_numpy(rows)
        return MirrorHits(
            self.width,
            pixels,
            self.hit[index],
            self.point[index],
            self.normal[index],
            self.incident[index],
            self.reflected[index],
            self.object_index[index],
        )

    def detach(self) -> "MirrorHits":
        return MirrorHits(
            self.width,
            self.pixels,
            self.hit,
            self.point.detach(),
            self.normal.detach(),
            self.incident.detach(),
            self.reflected.detach(),
            self.object_index,
        )


@dataclass(frozen=True)
class DepthMaskRender:
    """Depth maps and soft masks.

    depth is the nearest hit depth over all rendered objects, +inf where no
    object is hit. identity holds the index of the nearest object, or -1.
    """

    depth: torch.Tensor
    object_depth: torch.Tensor
    masks: torch.Tensor
    identity: np.ndarray
    objects: Tuple[int, ...]

    def object_mask(self, index: int) -> torch.Tensor:
        return self.masks[self.objects.index(index)]

    def depth_of(self, index: int) -> torch.Tensor:
        return self.object_depth[self.objects.index(index)]


def _as_pixels(camera: Camera, pixels: Optional[np.ndarray]) -> np.ndarray:
    if pixels is None:
        return camera.pixel_grid()
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if not len(pixels):
        raise DomainError("At least one pixel must be rendered")
    if not camera.in_bounds(pixels).all():
        raise DomainError("Pixels must lie inside the image")
    return np.unique(pixels[:, ::-1], axis=0)[:, ::-1].copy()


def reflect(direction: TensorLike, normal: TensorLike) -> torch.Tensor:
    """Mirror-reflect directions about normals: r' = r - 2(r·n̂)n̂.

    :param direction: Incident directions of shape (..., 3).
    :param normal: Surface normals of shape (..., 3), normalized internally.
    :return: The reflected directions.
    :raises DomainError: If a normal is zero.
    """
    r = as_tensor(direction)
    n = as_tensor(normal)
    norm = torch.linalg.norm(n, dim=-1, keepdim=True)
    if bool((norm.detach() == 0).any()):
        raise DomainError("Cannot reflect about a zero normal")
    n = n / norm
    return r - 2 * (r * n).sum(-1, keepdim=True) * n


def check_reflection_law(
    incident: torch.Tensor, normal: torch.Tensor, reflected: torch.Tensor, tol: float = 1e-9
) -> None:
    """Raise DomainError unless reflected rays obey the law of reflection."""
    with torch.no_grad():
        n = normal / torch.linalg.norm(normal, dim=-1, keepdim=True)
        d = incident / torch.linalg.norm(incident, dim=-1, keepdim=True)
        unit = (torch.linalg.norm(reflected, dim=-1) - 1).abs().max()
        angle = ((d * n).sum(-1) + (reflected * n).sum(-1)).abs().max()
        coplanar = (torch.linalg.cross(d, n, dim=-1) * reflected).sum(-1).abs().max()
    if len(incident) and max(float(unit), float(angle), float(coplanar)) > tol:
        raise DomainError(
            f"Reflection law violated: unit={float(unit):.3g} "
            f"angle={float(angle):.3g} coplanar={float(coplanar):.3g}"
        )


def soft_influence(d: TensorLike, lam: TensorLike, sigma: float) -> torch.Tensor:
    """The soft influence of a triangle on a ray: sigmoid(λ·d²/σ).

    :param d: Non-negative distances.
    :param lam: +1 where the ray hits the triangle, -1 elsewhere.
    :param sigma: Positive softness.
    :return: Influences in (0, 1), 0.5 exactly where d = 0.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    d = as_tensor(d)
    return torch.sigmoid(as_tensor(lam) * d * d / sigma)


def aggregate_occupancy(influences: TensorLike, dim: int = -1) -> torch.Tensor:
    """Combine per-triangle influences into an occupancy: 1 - Π(1 - x).

    An empty sequence aggregates to 0, and any influence of 1 absorbs.
    """
    x = as_tensor(influences)
    if not bool(((x.detach() >= 0) & (x.detach() <= 1)).all()):
        raise DomainError("Influences must lie in [0, 1]")
    return 1 - torch.prod(1 - x, dim=dim)


def reflection_occupancy(
    origins: torch.Tensor,
    directions: torch.Tensor,
    mesh: TriMesh,
    sigma: float,
    hard: bool = False,
    chunk: int = 128,
) -> torch.Tensor:
    """Soft occupancy of a mesh along each of N rays.

    Distances are normalized by the mesh's bounding radius. Rays are processed
    in chunks, and ray-part pairs whose bounding sphere is too far away to
    matter are skipped. The aggregation is evaluated in log space.

    :return: An (N,) tensor of occupancies in [0, 1], or of 0/1 hits if hard.
    """
    n = len(origins)
    if not n or not mesh.num_triangles:
        return torch.zeros(n, dtype=DTYPE)
    _, radius = mesh.bounding_sphere()
    labels, centers, radii = mesh.part_bounding_spheres()
    parts = (
        np.zeros(mesh.num_triangles, dtype=np.int64) if mesh.parts is None else mesh.parts
    )
    part_triangles = [np.nonzero(parts == label)[0] for label in labels]
    triangles = mesh.triangle_vertices()

    out = []
    for start in range(0, n, chunk):
        o = origins[start : start + chunk]
        d = directions[start : start + chunk]
        m = len(o)
        with torch.no_grad():
            gap_sq = point_ray_distance_sq(
                centers[None], o.detach()[:, None], d.detach()[:, None]
            )
            gap = (torch.sqrt(gap_sq) - radii).clamp(min=0) / radius
            keep = gap == 0 if hard else gap * gap / sigma <= CULL_THRESHOLD
        ray_index, part_index = np.nonzero(keep.numpy())
        if not len(ray_index):
            out.append(torch.zeros(m, dtype=DTYPE))
            continue
        counts = [len(part_triangles[p]) for p in part_index]
        pair_ray = torch.from_numpy(np.repeat(ray_index, counts))
        pair_triangle = torch.from_numpy(
            np.concatenate([part_triangles[p] for p in part_index])
        )
        if hard:
            with torch.no_grad():
                hit, _ = ray_triangle_signed_pairs(
                    o[pair_ray], d[pair_ray], triangles[pair_triangle]
                )
                count = torch.zeros(m, dtype=DTYPE).index_add(0, pair_ray, hit.to(DTYPE))
            out.append((count > 0).to(DTYPE))
            continue
        hit, sq = ray_triangle_signed_pairs(o[pair_ray], d[pair_ray], triangles[pair_triangle])
        lam = 2 * hit.to(DTYPE) - 1
        # log(1 - sigmoid(x)) = logsigmoid(-x)
        log_miss = F.logsigmoid(-lam * sq / (radius * radius) / sigma)
        total = torch.zeros(m, dtype=DTYPE).index_add(0, pair_ray, log_miss)
        out.append(1 - torch.exp(total))
    return torch.cat(out)


def _trace_surface(sdf: SdfField, rays: Ray, config: RenderConfig) -> Tuple[SdfHit, torch.Tensor]:
    """Coarse march, refinement and hit test.

    The coarse march brackets the surface to march_eps and the hit point is
    refined from there by sphere_steps steps. Whether a ray hits at all is
    decided by marching on until |G| ≤ eps, so sphere_steps only sets the
    accuracy of the hit point. A ray which passes the bracket and converges
    farther along reports that farther hit.

    :return: A tuple of the hit record and the ray parameter of the smallest
        |G| seen along each ray.
    """
    n = rays.direction.shape[0]
    o, d = rays.origin, rays.direction
    t0 = torch.zeros(n, dtype=DTYPE)
    t, values, t_best = march(sdf, o, d, t0, config.march_steps, config.march_eps, config.max_depth)
    bracketed = (values.abs() <= config.march_eps) & (t <= config.max_depth) & (t >= 0)
    t_refined, _, _ = march(sdf, o, d, t, config.sphere_steps, config.eps, config.max_depth)
    t_exact, exact_values, _ = march(
        sdf, o, d, t_refined, config.march_steps, config.eps, config.max_depth
    )
    converged = bracketed & (exact_values.abs() <= config.eps) & (t_exact <= config.max_depth)
    elsewhere = t_exact - t_refined > FARTHER_HIT_MARGIN * config.march_eps
    return finish_hit(sdf, rays, torch.where(elsewhere, t_exact, t_refined), converged), t_best


def _smooth_normals(
    scene: Scene,
    camera: Camera,
    pixels: np.ndarray,
    hit: SdfHit,
    object_index: torch.Tensor,
    config: RenderConfig,
) -> torch.Tensor:
    sdf = scene_field(scene)
    converged = hit.converged[:, None]
    total = torch.where(converged, hit.normal, torch.zeros_like(hit.normal))
    for dx, dy in NEIGHBOUR_OFFSETS:
        shifted = pixels + np.array([dx, dy]) * config.smoothing_offset
        inside = torch.from_numpy(camera.in_bounds(shifted))
        neighbour, _ = _trace_surface(sdf, camera_rays(camera, shifted), config)
        with torch.no_grad():
            _, index = scene_sdf(scene, neighbour.point.detach())
        use = hit.converged & neighbour.converged & inside & (index == object_index)
        total = total + torch.where(use[:, None], neighbour.normal, torch.zeros_like(total))
    return total / safe_norm(total, keepdim=True)


def smoothed_normal(
    scene: Scene, camera: Camera, px: int, py: int, config: RenderConfig = RenderConfig()
) -> torch.Tensor:
    """The smoothed surface normal seen through a single pixel.

    :raises DomainError: If the pixel ray misses every object.
    """
    mirror = trace_mirror(scene, camera, replace(config, smoothing=True), [[px, py]])
    if not bool(mirror.hit[0]):
        raise DomainError(f"Pixel ({px}, {py}) does not see a mirror object")
    return mirror.normal[0]


def trace_mirror(
    scene: Scene,
    camera: Camera,
    config: RenderConfig = RenderConfig(),
    pixels: Optional[np.ndarray] = None,
) -> MirrorHits:
    """Trace camera rays to the mirror objects and reflect them.

    The nearest object along each ray wins. Rays which do not converge on a
    surface are marked as misses and carry zero reflected directions.

    :param scene: The scene.
    :param camera: The camera.
    :param config: The render settings.
    :param pixels: Optional (N, 2) pixel coordinates. Defaults to all pixels.
    :return: The per-pixel hit records.
    """
    pixels = _as_pixels(camera, pixels)
    rays = camera_rays(camera, pixels)
    hit, _ = _trace_surface(scene_field(scene), rays, config)
    with torch.no_grad():
        _, object_index = scene_sdf(scene, hit.point.detach())
    normal = hit.normal
    if config.smoothing:
        normal = _smooth_normals(scene, camera, pixels, hit, object_index, config)
    converged = hit.converged[:, None]
    safe_normal = torch.where(converged, normal, rays.direction)
    reflected = torch.where(
        converged, reflect(rays.direction, safe_normal), torch.zeros_like(rays.direction)
    )
    if config.debug:
        mask = hit.converged
        check_reflection_law(rays.direction[mask], safe_normal[mask], reflected[mask])
    return MirrorHits(
        camera.width,
        pixels,
        hit.converged,
        hit.point,
        safe_normal,
        rays.direction,
        reflected,
        torch.where(hit.converged, object_index, torch.full_like(object_index, -1)),
    )


def render_reflection(
    scene: Scene,
    camera: Camera,
    config: RenderConfig = RenderConfig(),
    pixels: Optional[np.ndarray] = None,
    mirror: Optional[MirrorHits] = None,
    hard: bool = False,
    sigma: Optional[float] = None,
) -> SoftImage:
    """Render the soft occupancy image of the emitter as seen in the mirrors.

    :param scene: The scene.
    :param camera: The camera.
    :param config: The render settings.
    :param pixels: Optional (N, 2) pixel coordinates to render. Duplicates
        are rendered once. Defaults to all pixels.
    :param mirror: Optional cached mirror records covering the pixels. When
        given, the mirror objects are not traced again and the image carries
        no gradient with respect to them.
    :param hard: Render binary hit/miss values instead of soft occupancies.
    :param sigma: Softness override, e.g. from an annealing schedule.
    :return: The image. Unrendered pixels are flagged as not sampled.
    """
    sigma = config.sigma if sigma is None else sigma
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    pixels = _as_pixels(camera, pixels)
    if mirror is None:
        mirror = trace_mirror(scene, camera, config, pixels)
    else:
        mirror = mirror.select(pixels)
    mesh = build_emitter_mesh(scene.emitter, config.segments)
    values = torch.zeros(len(pixels), dtype=DTYPE)
    index = torch.nonzero(mirror.hit).reshape(-1)
    if len(index):
        directions = mirror.reflected[index]
        origins = mirror.point[index] + config.eps * directions
        occupancy = reflection_occupancy(
            origins, directions, mesh, sigma, hard=hard, chunk=config.ray_chunk
        )
        values = values.index_copy(0, index, occupancy)
    logging.log_every_n_seconds(
        logging.DEBUG,
        "Rendered %d pixels, %d mirror hits, %d emitter triangles",
        60,
        len(pixels),
        len(index),
        mesh.num_triangles,
    )
    return SoftImage.from_samples(camera, pixels, values)


def render_depth_mask(
    scene: Scene,
    camera: Camera,
    config: RenderConfig = RenderConfig(),
    objects: Optional[Sequence[int]] = None,
) -> DepthMaskRender:
    """Render per-object depth maps and soft masks.

    Each object is traced on its own. Depth is the hit depth along the ray,
    +inf where the object is missed. The soft mask is 1 on hits and
    sigmoid(-G_min / mask_sigma) elsewhere, where G_min is the signed distance
    at the point of closest approach along the ray.

    :param scene: The scene.
    :param camera: The camera.
    :param config: The render settings.
    :param objects: Optional object indices to render. Defaults to all.
    :return: The depth and mask render.
    """
    objects = tuple(range(scene.num_objects) if objects is None else objects)
    rays = camera_rays(camera, camera.pixel_grid())
    depths, masks = [], []
    for index in objects:
        sdf = scene_field(scene, [index])
        hit, t_best = _trace_surface(sdf, rays, config)
        depth = torch.where(hit.converged, hit.depth, torch.full_like(hit.depth, float("inf")))
        closest = sdf(rays.origin + t_best[:, None] * rays.direction)
        soft = torch.sigmoid(-closest / config.mask_sigma)
        masks.append(torch.where(hit.converged, torch.ones_like(soft), soft))
        depths.append(depth)
    shape = (len(objects), camera.height, camera.width)
    object_depth = torch.stack(depths).reshape(shape)
    masks = torch.stack(masks).reshape(shape)
    depth, nearest = object_depth.min(0)
    lookup = torch.tensor(objects, dtype=torch.long)
    labels = lookup[nearest]
    identity = torch.where(torch.isfinite(depth), labels, torch.full_like(labels, -1)).numpy()
    return DepthMaskRender(depth, object_depth, masks, identity, objects)


def render_virtual_image(
    mesh: TriMesh, camera: Camera, plane_point: TensorLike, plane_normal: TensorLike
) -> SoftImage:
    """Binary image of a mesh mirrored across a plane, rendered directly.

    This is the image a planar mirror shows of the mesh.
    """
    virtual = TriMesh(mirror_points(mesh.vertices.detach(), plane_point, plane_normal), mesh.triangles)
    rays = camera_rays(camera, camera.pixel_grid())
    triangles = virtual.triangle_vertices()
    hits = torch.zeros(camera.num_pixels, dtype=torch.bool)
    for start in range(0, camera.num_pixels, 1024):
        hit, _ = ray_triangle_intersect_matrix(
            rays.origin[start : start + 1024], rays.direction[start : start + 1024], triangles
        )
        hits[start : start + 1024] = hit.any(-1)
    return SoftImage(hits.to(DTYPE).reshape(camera.height, camera.width))


def silhouette_edges(mask: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbour of a different value."""
    m = np.asarray(mask, dtype=bool)
    edges = np.zeros_like(m)
    horizontal = m[:, 1:] != m[:, :-1]
    vertical = m[1:, :] != m[:-1, :]
    edges[:, 1:] |= horizontal
    edges[:, :-1] |= horizontal
    edges[1:, :] |= vertical
    edges[:-1, :] |= vertical
    return edges


def edge_sample_rays(
    observed: SoftImage,
    iteration: int,
    config: RenderConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw the pixels to render at an optimizer iteration.

    A fraction u(k) of the ray budget is drawn uniformly over the image and the
    rest around edge pixels of the observed silhouette, displaced by Gaussian
    noise of bandwidth b(k). Without edges every ray is uniform.

    :return: A (ray_budget, 2) integer array of (column, row) pixels, which may
        contain duplicates.
    """
    mask = observed.binarized()
    height, width = mask.shape
    edges = np.argwhere(silhouette_edges(mask))
    budget = config.ray_budget
    u = config.edge_uniform_weight(iteration) if len(edges) else 1.0
    uniform = rng.random(budget) < u
    n_uniform = int(uniform.sum())
    n_edge = budget - n_uniform
    columns = rng.integers(0, width, size=n_uniform)
    rows = rng.integers(0, height, size=n_uniform)
    samples = [np.stack([columns, rows], axis=1)]
    if n_edge:
        picks = edges[rng.integers(0, len(edges), size=n_edge)]
        jitter = rng.normal(0.0, config.edge_bandwidth(iteration), size=(n_edge, 2))
        rows = np.clip(np.rint(picks[:, 0] + jitter[:, 0]), 0, height - 1)
        columns = np.clip(np.rint(picks[:, 1] + jitter[:, 1]), 0, width - 1)
        samples.append(np.stack([columns, rows], axis=1))
    return np.concatenate(samples).astype(np.int64)


def uniform_sample_rays(camera: Camera, budget: int, rng: np.random.Generator) -> np.ndarray:
    return np.stack(
        [rng.integers(0, camera.width, size=budget), rng.integers(0, camera.height, size=budget)],
        axis=1,
    ).astype(np.int64)
