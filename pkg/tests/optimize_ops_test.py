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
"""Unit tests for //thermoreflect:optimize_ops."""
import numpy as np
import pytest
import torch

from tests.test_main import main
from thermoreflect import optimize_ops
from thermoreflect.exceptions import DomainError, FitError, OptimizationError
from thermoreflect.geometry_ops import DTYPE, Camera, Se3Scale
from thermoreflect.metric_ops import silhouette_iou
from thermoreflect.optimize_ops import AdamState, FitConfig, Observations
from thermoreflect.params import ParamVector
from thermoreflect.render_ops import RenderConfig, SoftImage, render_depth_mask, render_reflection
from thermoreflect.scene import InitBounds
from thermoreflect.scene_ops import build_scene
from thermoreflect.synthetic_ops import FLIP_X, preset_camera

pytest_plugins = ["tests.plugins.scenes"]


def _vector(*values: float) -> ParamVector:
    return ParamVector([("x", len(values))], torch.tensor(values, dtype=DTYPE))


def _image(values) -> SoftImage:
    return SoftImage(torch.tensor([values], dtype=DTYPE))


def _observations(scene, camera: Camera) -> Observations:
    with torch.no_grad():
        render = render_depth_mask(scene, camera)
    return Observations(
        depth=render.depth.numpy(),
        masks=tuple(np.isfinite(d) for d in render.object_depth.numpy()),
    )


def test_fit_config_validation():
    with pytest.raises(DomainError):
        FitConfig(learning_rate=0)
    with pytest.raises(DomainError):
        FitConfig(beta1=1.0)
    with pytest.raises(DomainError):
        FitConfig(human_restarts=0)
    with pytest.raises(DomainError):
        FitConfig(w_prior_h=-1)


def test_learning_rate_schedule():
    config = FitConfig(learning_rate=0.1, learning_rate_decay=0.99)
    assert config.learning_rate_at(0) == 0.1
    assert config.learning_rate_at(2) == pytest.approx(0.1 * 0.99 ** 2)


def test_adam_first_step():
    params = _vector(1.0)
    state = AdamState.fresh(params, FitConfig(learning_rate=0.1))
    state, params = optimize_ops.adam_step(state, params, _vector(1.0))
    assert float(params.values[0]) == pytest.approx(0.9, abs=1e-8)
    assert state.t == 1


def test_adam_zero_gradient_leaves_parameters():
    params = _vector(1.0, -2.0, 3.0)
    state = AdamState.fresh(params)
    for _ in range(3):
        state, params = optimize_ops.adam_step(state, params, _vector(0.0, 0.0, 0.0))
    assert params.values.tolist() == [1.0, -2.0, 3.0]


def test_adam_is_deterministic():
    def run():
        params = _vector(0.5, -0.5)
        state = AdamState.fresh(params)
        for _ in range(20):
            grad = params.with_values(2 * params.values * torch.tensor([1.0, 3.0], dtype=DTYPE))
            state, params = optimize_ops.adam_step(state, params, grad)
        return params.values

    first, second = run(), run()
    assert first.tolist() == second.tolist()
    assert float(first.abs().max()) < 0.5


def test_adam_rejects_non_finite_gradient():
    params = ParamVector([("a", 1), ("b", 2)])
    state = AdamState.fresh(params)
    grad = params.with_values(torch.tensor([0.0, 0.0, float("nan")], dtype=DTYPE))
    with pytest.raises(OptimizationError, match="gradient in segment `b`"):
        optimize_ops.adam_step(state, params, grad)


def test_adam_rejects_dimension_mismatch():
    params = _vector(1.0, 2.0)
    with pytest.raises(DomainError, match="Dimension mismatch"):
        optimize_ops.adam_step(AdamState.fresh(params), params, _vector(1.0))


def test_silhouette_loss_examples():
    assert float(optimize_ops.loss_silhouette(_image([1, 1, 0]), _image([1, 1, 0]))) == 0
    assert float(optimize_ops.loss_silhouette(_image([1, 0, 0]), _image([0, 1, 0]))) == 1
    assert float(optimize_ops.loss_silhouette(_image([1, 0, 0]), _image([1, 1, 1]))) == (
        pytest.approx(2 / 3)
    )


def test_silhouette_loss_of_empty_union():
    assert float(optimize_ops.loss_silhouette(_image([0, 0]), _image([0, 0]))) == 1


def test_silhouette_loss_counts_sampled_pixels_only():
    rendered = SoftImage(
        torch.tensor([[1.0, 0.0, 0.0]], dtype=DTYPE), np.array([[True, False, False]])
    )
    assert float(optimize_ops.loss_silhouette(rendered, _image([1, 1, 1]))) == 0


def test_silhouette_loss_rejects_shape_mismatch():
    with pytest.raises(DomainError, match="shapes differ"):
        optimize_ops.loss_silhouette(_image([1, 0]), _image([1, 0, 0]))


def test_silhouette_loss_gradient():
    values = torch.tensor([[0.5, 0.5]], dtype=DTYPE, requires_grad=True)
    loss = optimize_ops.loss_silhouette(SoftImage(values), _image([1, 0]))
    (grad,) = torch.autograd.grad(loss, values)
    # Raising the value inside the silhouette lowers the loss, outside raises it.
    assert float(grad[0, 0]) < 0
    assert float(grad[0, 1]) > 0


def test_object_loss_at_truth(sphere_scene, camera):
    observations = _observations(sphere_scene, camera)
    total, terms = optimize_ops.loss_object(sphere_scene, camera, observations)
    assert float(terms["depth"]) < 1e-9
    assert float(terms["mask"]) < 1e-3
    assert float(terms["prior"]) == pytest.approx(1e-3 * 0.09)
    assert float(total) < 1e-2


def test_object_loss_grows_with_offset(sphere_scene, camera):
    observations = _observations(sphere_scene, camera)
    shifted = sphere_scene.with_object(
        0, sphere_scene.objects[0].with_params(placement=Se3Scale(translation=(0.0, 0.0, 1.25)))
    )
    _, at_truth = optimize_ops.loss_object(sphere_scene, camera, observations)
    _, at_shift = optimize_ops.loss_object(shifted, camera, observations)
    assert 0.045 < float(at_shift["depth"]) < 0.09
    assert float(at_shift["depth"]) > float(at_truth["depth"])


def test_object_loss_requires_observations(sphere_scene, camera):
    with pytest.raises(FitError, match="depth map and mask required"):
        optimize_ops.loss_object(sphere_scene, camera, Observations())
    holes = np.full((64, 64), np.inf)
    with pytest.raises(FitError, match="no valid depth pixels"):
        optimize_ops.loss_object(
            sphere_scene, camera, Observations(holes, (np.ones((64, 64), dtype=bool),))
        )
    with pytest.raises(FitError, match="do not match the camera"):
        optimize_ops.loss_object(
            sphere_scene, camera, Observations(np.ones((8, 8)), (np.ones((8, 8), dtype=bool),))
        )


def test_sample_object_start_respects_bounds(sphere_scene):
    bounds = InitBounds.around([0.0, 0.0, 1.2], 0.05, rotation_spread=0.1, latent_std=0.01)
    for restart in range(10):
        rng = np.random.default_rng([0, 1, restart])
        scene = optimize_ops.sample_object_start(sphere_scene, 0, bounds, rng)
        translation = scene.objects[0].placement.translation.numpy()
        assert (np.abs(translation - [0, 0, 1.2]) <= 0.05 + 1e-12).all()
        assert float(scene.objects[0].latent[0]) > 0


def test_sample_emitter_start_is_seeded(sphere_scene):
    bounds = InitBounds.around([0.0, 0.0, -0.5], 0.3)
    a = optimize_ops.sample_emitter_start(sphere_scene, bounds, np.random.default_rng([0, 2, 1]))
    b = optimize_ops.sample_emitter_start(sphere_scene, bounds, np.random.default_rng([0, 2, 1]))
    c = optimize_ops.sample_emitter_start(sphere_scene, bounds, np.random.default_rng([0, 2, 2]))
    assert a.emitter.pose_latent.tolist() == b.emitter.pose_latent.tolist()
    assert a.emitter.pose_latent.tolist() != c.emitter.pose_latent.tolist()


def test_fit_object_reduces_loss(sphere_scene):
    camera = preset_camera(32)
    observations = _observations(sphere_scene, camera)
    start = sphere_scene.with_object(
        0,
        sphere_scene.objects[0].with_params(
            latent=[0.28], placement=Se3Scale(translation=(0.02, -0.01, 1.22))
        ),
    )
    initial, _ = optimize_ops.loss_object(start, camera, observations)
    config = FitConfig(max_iterations=25, object_restarts=2, learning_rate=5e-3)
    result = optimize_ops.fit_object(start, camera, observations, config)
    assert result.best_loss < float(initial)
    assert len(result.restart_losses) == 2
    assert result.restart_index in (0, 1)
    assert result.best_loss == min(result.restart_losses)
    frame = result.trace_frame()
    assert len(frame) == 25
    assert list(frame.columns) == ["iteration", "total", "depth", "mask", "prior"]
    report = result.to_report()
    assert "best restart" in report
    assert "object0.translation = " in report


def test_fit_object_is_deterministic(sphere_scene):
    camera = preset_camera(16)
    observations = _observations(sphere_scene, camera)
    config = FitConfig(max_iterations=3, object_restarts=2)
    first = optimize_ops.fit_object(sphere_scene, camera, observations, config)
    second = optimize_ops.fit_object(sphere_scene, camera, observations, config)
    assert first.restart_losses == second.restart_losses
    assert first.params.values.tolist() == second.params.values.tolist()


def test_fit_human_rejects_empty_silhouette(plane_scene, camera):
    observed = SoftImage(torch.zeros(64, 64, dtype=DTYPE))
    with pytest.raises(FitError, match="empty"):
        optimize_ops.fit_human(plane_scene, camera, observed)


@pytest.mark.slow
def test_fit_human_recovers_plane_reflection(plane_scene, camera, plane_silhouette):
    emitter = plane_scene.emitter
    start = plane_scene.with_emitter(
        emitter.with_params(placement=Se3Scale(FLIP_X, (0.04, -0.03, -0.6)))
    )
    render_config = RenderConfig(ray_budget=512)
    with torch.no_grad():
        before = render_reflection(start, camera, render_config, hard=True)
    initial_iou = silhouette_iou(before.values.numpy(), plane_silhouette.values.numpy())
    config = FitConfig(max_iterations=60, human_restarts=1, learning_rate=5e-3)
    result = optimize_ops.fit_human(start, camera, plane_silhouette, config, render_config)
    assert result.iou is not None
    assert result.iou >= min(initial_iou, 0.7)
    assert result.final_losses["silhouette"] < 1


@pytest.mark.slow
def test_fit_objects_on_synthetic_bowl(bowl_synthetic):
    synthetic = bowl_synthetic
    scene = build_scene(synthetic.initial)
    camera = synthetic.initial.camera
    observations = Observations(synthetic.depth, synthetic.masks)
    initial, _ = optimize_ops.loss_object(scene, camera, observations)
    config = FitConfig(max_iterations=40, object_restarts=1, learning_rate=3e-3)
    fitted, results = optimize_ops.fit_objects(scene, camera, observations, config)
    assert len(results) == 1
    assert fitted.num_objects == 1
    assert results[0].best_loss <= float(initial) + 1e-6


if __name__ == "__main__":
    main()
