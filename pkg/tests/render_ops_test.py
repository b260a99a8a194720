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
"""Unit tests for //thermoreflect:render_ops."""
from dataclasses import replace

import numpy as np
import pytest
import torch
from scipy import ndimage

from tests.plugins.scenes import PLANE_DEPTH
from tests.test_main import main
from thermoreflect import render_ops
from thermoreflect.ablation_ops import variant_config
from thermoreflect.emitter_ops import EmitterModel, build_emitter_mesh
from thermoreflect.exceptions import DomainError
from thermoreflect.geometry_ops import DTYPE, Camera, Se3Scale, TriMesh, quaternion_multiply
from thermoreflect.gradcheck_ops import gradcheck
from thermoreflect.metric_ops import silhouette_iou
from thermoreflect.optimize_ops import loss_silhouette
from thermoreflect.params import ParamVector
from thermoreflect.render_ops import RenderConfig, SoftImage
from thermoreflect.scene import Scene
from thermoreflect.scene_ops import build_scene
from thermoreflect.sdf_ops import SdfShape
from thermoreflect.synthetic_ops import FLIP_X, preset_camera

pytest_plugins = ["tests.plugins.scenes"]


def _disk(size: int = 64, radius: float = 15.0) -> np.ndarray:
    rows, cols = np.mgrid[:size, :size]
    return (rows - size / 2) ** 2 + (cols - size / 2) ** 2 <= radius ** 2


def _in_image(pixels: np.ndarray, width: int, height: int) -> bool:
    return bool(
        (pixels[:, 0] >= 0).all()
        and (pixels[:, 0] < width).all()
        and (pixels[:, 1] >= 0).all()
        and (pixels[:, 1] < height).all()
    )


def test_reflect_normal_incidence():
    np.testing.assert_allclose(render_ops.reflect([0, 0, 1], [0, 0, -1]).numpy(), [0, 0, -1])


def test_reflect_45_degrees():
    r = np.array([1, 0, 1]) / np.sqrt(2)
    np.testing.assert_allclose(
        render_ops.reflect(r, [0, 0, -1]).numpy(), np.array([1, 0, -1]) / np.sqrt(2), atol=1e-15
    )


def test_reflect_normalizes_normal():
    np.testing.assert_allclose(render_ops.reflect([0, 0, 1], [0, 0, -7]).numpy(), [0, 0, -1])


def test_reflect_zero_normal():
    with pytest.raises(DomainError):
        render_ops.reflect([0, 0, 1], [0, 0, 0])


def test_reflection_law_on_random_pairs():
    generator = torch.Generator().manual_seed(0)
    r = torch.randn(100000, 3, dtype=DTYPE, generator=generator)
    r = r / torch.linalg.norm(r, dim=-1, keepdim=True)
    n = torch.randn(100000, 3, dtype=DTYPE, generator=generator)
    reflected = render_ops.reflect(r, n)
    render_ops.check_reflection_law(r, n, reflected, tol=1e-9)
    np.testing.assert_allclose(render_ops.reflect(reflected, n).numpy(), r.numpy(), atol=1e-9)


def test_check_reflection_law_rejects_wrong_direction():
    with pytest.raises(DomainError, match="Reflection law violated"):
        render_ops.check_reflection_law(
            torch.tensor([[0.0, 0.0, 1.0]], dtype=DTYPE),
            torch.tensor([[0.0, 0.0, -1.0]], dtype=DTYPE),
            torch.tensor([[0.0, 1.0, 0.0]], dtype=DTYPE),
        )


def test_soft_influence_values():
    assert float(render_ops.soft_influence(0.0, 1.0, 0.01)) == 0.5
    sigma = 0.01
    assert float(render_ops.soft_influence(np.sqrt(sigma), -1.0, sigma)) == pytest.approx(
        0.2689414213699951
    )
    assert float(render_ops.soft_influence(1e3, -1.0, sigma)) == pytest.approx(0.0)
    assert float(render_ops.soft_influence(1e3, 1.0, sigma)) == pytest.approx(1.0)


def test_soft_influence_rejects_non_positive_sigma():
    with pytest.raises(DomainError):
        render_ops.soft_influence(0.0, 1.0, 0.0)


def test_aggregate_occupancy_values():
    assert float(render_ops.aggregate_occupancy(torch.zeros(0, dtype=DTYPE))) == 0
    assert float(render_ops.aggregate_occupancy([0.5, 0.5])) == 0.75
    assert float(render_ops.aggregate_occupancy([0.1, 1.0, 0.3])) == 1


def test_aggregate_occupancy_rejects_out_of_range():
    with pytest.raises(DomainError):
        render_ops.aggregate_occupancy([0.5, 1.5])


def test_aggregate_occupancy_is_monotone():
    rng = np.random.default_rng(0)
    lengths = rng.integers(0, 20, size=10000)
    for length in lengths[:2000]:
        x = torch.from_numpy(rng.random(length))
        extra = torch.from_numpy(rng.random(1))
        before = render_ops.aggregate_occupancy(x)
        after = render_ops.aggregate_occupancy(torch.cat([x, extra]))
        assert float(after) >= float(before)
        assert 0 <= float(after) <= 1
    batch = torch.from_numpy(rng.random((10000, 8)))
    more = torch.cat([batch, torch.from_numpy(rng.random((10000, 1)))], dim=1)
    assert bool(
        (render_ops.aggregate_occupancy(more) >= render_ops.aggregate_occupancy(batch)).all()
    )


def test_reflection_occupancy_of_empty_mesh():
    origins = torch.zeros(5, 3, dtype=DTYPE)
    directions = torch.tensor([[0.0, 0.0, 1.0]] * 5, dtype=DTYPE)
    occupancy = render_ops.reflection_occupancy(origins, directions, TriMesh.empty(), 0.01)
    assert occupancy.tolist() == [0.0] * 5


def test_reflection_occupancy_matches_direct_aggregation():
    mesh = build_emitter_mesh(EmitterModel(placement=Se3Scale(translation=(0, 0, 3))), 6)
    rng = np.random.default_rng(0)
    origins = torch.zeros(6, 3, dtype=DTYPE)
    directions = torch.from_numpy(np.c_[rng.uniform(-0.3, 0.3, size=(6, 2)), np.ones(6)])
    directions = directions / torch.linalg.norm(directions, dim=-1, keepdim=True)
    sigma = 0.05
    occupancy = render_ops.reflection_occupancy(origins, directions, mesh, sigma)

    _, radius = mesh.bounding_sphere()
    triangles = mesh.triangle_vertices()
    for i in range(6):
        hit, sq = render_ops.ray_triangle_signed_pairs(
            origins[i].expand(len(triangles), 3), directions[i].expand(len(triangles), 3), triangles
        )
        lam = 2 * hit.to(DTYPE) - 1
        influence = torch.sigmoid(lam * sq / radius ** 2 / sigma)
        expected = render_ops.aggregate_occupancy(influence)
        assert float(occupancy[i]) == pytest.approx(float(expected), abs=1e-9)


def test_render_config_validation():
    with pytest.raises(DomainError):
        RenderConfig(sigma=0)
    with pytest.raises(DomainError):
        RenderConfig(sigma=1e-2, sigma_floor=1e-1)
    with pytest.raises(DomainError):
        RenderConfig(sphere_steps=0)
    with pytest.raises(DomainError):
        RenderConfig(ray_budget=0)


def test_render_config_schedules():
    config = RenderConfig(sigma=1e-2, sigma_decay=0.5, sigma_decay_every=200, sigma_floor=1e-3)
    assert config.sigma_at(0) == 1e-2
    assert config.sigma_at(199) == 1e-2
    assert config.sigma_at(200) == 5e-3
    assert config.sigma_at(10000) == 1e-3
    assert config.edge_uniform_weight(0) == 1.0
    assert config.edge_uniform_weight(10000) == config.edge_uniform_floor
    assert config.edge_bandwidth(0) == config.edge_bandwidth_start
    assert config.edge_bandwidth(10000) == config.edge_bandwidth_floor


def test_soft_image_validation():
    with pytest.raises(DomainError):
        SoftImage(torch.zeros(2, 2, 2, dtype=DTYPE))
    with pytest.raises(DomainError):
        SoftImage(torch.zeros(2, 2, dtype=DTYPE), np.ones((3, 3), dtype=bool))


def test_soft_image_from_samples():
    camera = Camera(10, 10, 2, 1, 4, 3)
    pixels = np.array([[1, 0], [3, 2]])
    image = SoftImage.from_samples(camera, pixels, torch.tensor([0.25, 0.75], dtype=DTYPE))
    assert image.values.shape == (3, 4)
    assert float(image.values[0, 1]) == 0.25
    assert float(image.values[2, 3]) == 0.75
    assert image.sampled.sum() == 2
    assert image.binarized().sum() == 1


def test_trace_mirror_on_plane(plane_scene, camera):
    mirror = render_ops.trace_mirror(plane_scene, camera, RenderConfig(debug=True))
    assert bool(mirror.hit.all())
    np.testing.assert_allclose(mirror.point[:, 2].detach().numpy(), PLANE_DEPTH, atol=1e-9)
    np.testing.assert_allclose(
        mirror.reflected.detach().numpy(),
        mirror.incident.detach().numpy() * [1, 1, -1],
        atol=1e-9,
    )
    assert (mirror.object_index.numpy() == 0).all()


def test_trace_mirror_select_uncovered_pixels(plane_scene, camera):
    mirror = render_ops.trace_mirror(plane_scene, camera, RenderConfig(), [[0, 0], [5, 5]])
    assert len(mirror.select(np.array([[5, 5]])).pixels) == 1
    with pytest.raises(DomainError, match="not covered"):
        mirror.select(np.array([[6, 6]]))


def test_smoothed_normal_at_sphere_center(sphere_scene, camera):
    normal = render_ops.smoothed_normal(sphere_scene, camera, 32, 32)
    np.testing.assert_allclose(normal.detach().numpy(), [0, 0, -1], atol=1e-8)


def test_smoothed_normal_of_missed_pixel(sphere_scene, camera):
    with pytest.raises(DomainError, match="does not see a mirror"):
        render_ops.smoothed_normal(sphere_scene, camera, 0, 0)


def test_rays_missing_every_object_render_zero(sphere_scene):
    camera = Camera(48, 48, 16, 16, 32, 32, Se3Scale.from_axis_angle((0, np.pi, 0)))
    with torch.no_grad():
        image = render_ops.render_reflection(sphere_scene, camera)
    assert float(image.values.abs().max()) == 0


def test_render_reflection_rejects_empty_pixels(plane_scene, camera):
    with pytest.raises(DomainError, match="At least one pixel"):
        render_ops.render_reflection(plane_scene, camera, pixels=np.zeros((0, 2)))


def test_render_reflection_pixel_subset(plane_scene, camera):
    pixels = np.array([[32, 32], [32, 32], [10, 40], [63, 0]])
    with torch.no_grad():
        image = render_ops.render_reflection(plane_scene, camera, pixels=pixels)
    assert image.sampled.sum() == 3
    assert image.sampled[32, 32] and image.sampled[40, 10] and image.sampled[0, 63]
    assert float(image.values[~torch.from_numpy(image.sampled)].abs().max()) == 0
    # The pelvis of the emitter reflects into the image center.
    assert float(image.values[32, 32]) > 0.5


def test_cached_mirror_renders_identically(plane_scene, camera):
    config = RenderConfig()
    pixels = camera.pixel_grid()[::7]
    with torch.no_grad():
        mirror = render_ops.trace_mirror(plane_scene, camera, config)
        direct = render_ops.render_reflection(plane_scene, camera, config, pixels=pixels)
        cached = render_ops.render_reflection(
            plane_scene, camera, config, pixels=pixels, mirror=mirror
        )
    np.testing.assert_allclose(cached.values.numpy(), direct.values.numpy(), atol=1e-12)


def test_hard_hits_have_soft_occupancy_above_half(plane_scene, camera):
    config = RenderConfig()
    pixels = camera.pixel_grid()[::3]
    with torch.no_grad():
        soft = render_ops.render_reflection(plane_scene, camera, config, pixels=pixels)
        hard = render_ops.render_reflection(plane_scene, camera, config, pixels=pixels, hard=True)
    hits = hard.binarized() & hard.sampled
    assert hits.any()
    assert (soft.values.numpy()[hits] >= 0.5).all()
    assert set(np.unique(hard.values.numpy())) <= {0.0, 1.0}


def _plane_mirror_iou(scene: Scene, camera: Camera) -> float:
    with torch.no_grad():
        hard = render_ops.render_reflection(scene, camera, RenderConfig(), hard=True)
    mesh = build_emitter_mesh(scene.emitter, RenderConfig().segments)
    virtual = render_ops.render_virtual_image(mesh, camera, [0, 0, PLANE_DEPTH], [0, 0, 1])
    assert virtual.binarized().any()
    return silhouette_iou(hard.values.numpy(), virtual.values.numpy())


def test_plane_mirror_matches_virtual_image(plane_scene, camera):
    assert _plane_mirror_iou(plane_scene, camera) >= 0.98


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_plane_mirror_matches_virtual_image_random_placements(plane_scene, seed: int):
    rng = np.random.default_rng(seed)
    angle = rng.uniform(-0.5, 0.5)
    yaw = torch.tensor([np.cos(angle / 2), 0.0, np.sin(angle / 2), 0.0], dtype=DTYPE)
    rotation = quaternion_multiply(yaw, torch.tensor(FLIP_X, dtype=DTYPE))
    translation = (rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.8, -0.4))
    scene = plane_scene.with_emitter(
        EmitterModel(placement=Se3Scale(rotation / torch.linalg.norm(rotation), translation))
    )
    assert _plane_mirror_iou(scene, preset_camera(128)) >= 0.98


def test_render_loss_gradient_matches_finite_differences(plane_scene, camera, plane_silhouette):
    config = RenderConfig()
    start = plane_scene.with_emitter(
        plane_scene.emitter.with_params(placement=Se3Scale(FLIP_X, (0.03, -0.02, -0.62)))
    )
    with torch.no_grad():
        mirror = render_ops.trace_mirror(start.detach(), camera, config)
    pixels = camera.pixel_grid()[::5]
    params = ParamVector.for_scene(start, emitter=True)
    translation = ParamVector([("emitter.translation", 3)], params["emitter.translation"])

    def loss(p: ParamVector) -> torch.Tensor:
        values = torch.cat([p.values, params.values[3:]])
        state = params.with_values(values).apply(start)
        image = render_ops.render_reflection(state, camera, config, pixels=pixels, mirror=mirror)
        return loss_silhouette(image, plane_silhouette)

    report = gradcheck(loss, translation, tol=1e-2)
    assert report.passed, report.to_table()
    assert np.abs(report.analytic).max() > 0


def test_render_depth_mask_sphere(sphere_scene, camera):
    with torch.no_grad():
        render = render_ops.render_depth_mask(sphere_scene, camera)
    assert float(render.depth[32, 32]) == pytest.approx(0.9, abs=1e-9)
    assert float(render.depth[0, 0]) == float("inf")
    assert render.identity[32, 32] == 0
    assert render.identity[0, 0] == -1
    assert float(render.masks[0, 32, 32]) == 1.0
    assert float(render.masks[0, 0, 0]) < 1e-6


def test_render_depth_mask_nearest_object_wins(sphere_scene, camera):
    behind = SdfShape("sphere", [0.6], Se3Scale(translation=(0, 0, 2.0)))
    scene = sphere_scene.with_objects(sphere_scene.objects + (behind,))
    with torch.no_grad():
        render = render_ops.render_depth_mask(scene, camera)
    assert render.identity[32, 32] == 0
    assert float(render.depth_of(1)[32, 32]) == pytest.approx(1.4, abs=1e-9)
    assert float(render.depth[32, 32]) == pytest.approx(0.9, abs=1e-9)
    # The far sphere shows around the near one.
    assert render.identity[32, 4] == 1
    single = render_ops.render_depth_mask(scene, camera, objects=[1])
    assert single.objects == (1,)
    assert single.object_mask(1).shape == (64, 64)


def test_render_depth_mask_is_differentiable(sphere_scene, camera):
    translation = torch.tensor([0.0, 0.0, 1.2], dtype=DTYPE, requires_grad=True)
    shape = sphere_scene.objects[0].with_params(placement=Se3Scale(translation=translation))
    render = render_ops.render_depth_mask(sphere_scene.with_objects([shape]), camera)
    (grad,) = torch.autograd.grad(render.depth[32, 32], translation)
    np.testing.assert_allclose(grad.numpy(), [0, 0, 1], atol=1e-9)


def test_single_refinement_step_loses_depth_accuracy(bowl_synthetic):
    scene = build_scene(bowl_synthetic.truth)
    camera = bowl_synthetic.truth.camera
    config = RenderConfig()
    exact = replace(config, sphere_steps=200, eps=1e-10)
    with torch.no_grad():
        reference = render_ops.render_depth_mask(scene, camera, exact).depth.numpy()
        full = render_ops.render_depth_mask(scene, camera, config).depth.numpy()
        single = render_ops.render_depth_mask(
            scene, camera, variant_config("sphere-steps-1", config)
        ).depth.numpy()
    seen = np.isfinite(reference) & np.isfinite(full) & np.isfinite(single)
    assert seen.sum() > 100
    full_error = np.abs(full - reference)[seen]
    single_error = np.abs(single - reference)[seen]
    assert single_error.mean() > 1.5 * full_error.mean()
    assert single_error.max() > 1e-3


def test_silhouette_edges():
    mask = np.zeros((6, 6), dtype=bool)
    mask[2:4, 2:4] = True
    edges = render_ops.silhouette_edges(mask)
    assert edges[2:4, 2:4].all()
    assert edges[1, 2] and edges[2, 1]
    assert not edges[0, 0]
    assert not edges[1, 1]
    assert not render_ops.silhouette_edges(np.ones((4, 4), dtype=bool)).any()


def test_edge_sampling_starts_uniform():
    observed = SoftImage(torch.from_numpy(_disk().astype(np.float64)))
    config = RenderConfig(ray_budget=100000)
    pixels = render_ops.edge_sample_rays(observed, 0, config, np.random.default_rng(0))
    assert pixels.shape == (100000, 2)
    left = pixels[:, 0] < 32
    top = pixels[:, 1] < 32
    quadrants = [(left & top).sum(), (~left & top).sum(), (left & ~top).sum(), (~left & ~top).sum()]
    np.testing.assert_allclose(quadrants, 25000, rtol=0.05)


def test_edge_sampling_concentrates_on_edges():
    mask = _disk()
    observed = SoftImage(torch.from_numpy(mask.astype(np.float64)))
    config = RenderConfig(ray_budget=10000, edge_uniform_floor=0.0)
    pixels = render_ops.edge_sample_rays(observed, 10000, config, np.random.default_rng(0))
    distance = ndimage.distance_transform_edt(~render_ops.silhouette_edges(mask))
    near = distance[pixels[:, 1], pixels[:, 0]] <= 2
    assert near.mean() >= 0.9
    assert _in_image(pixels, 64, 64)


def test_edge_sampling_blank_image_is_uniform():
    observed = SoftImage(torch.zeros(64, 64, dtype=DTYPE))
    config = RenderConfig(ray_budget=500)
    pixels = render_ops.edge_sample_rays(observed, 10000, config, np.random.default_rng(0))
    assert pixels.shape == (500, 2)
    assert _in_image(pixels, 64, 64)


def test_edge_sampling_is_deterministic():
    observed = SoftImage(torch.from_numpy(_disk().astype(np.float64)))
    config = RenderConfig(ray_budget=300)
    a = render_ops.edge_sample_rays(observed, 50, config, np.random.default_rng(3))
    b = render_ops.edge_sample_rays(observed, 50, config, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_uniform_sample_rays(camera):
    pixels = render_ops.uniform_sample_rays(camera, 1000, np.random.default_rng(0))
    assert pixels.shape == (1000, 2)
    assert _in_image(pixels, 64, 64)


if __name__ == "__main__":
    main()
