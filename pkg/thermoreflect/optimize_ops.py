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
"""The optimize ops run the two-stage inference.

Stage one fits the pose, scale and shape of every mirror object to an
observed depth map and per-object masks. Stage two freezes the objects and
fits the emitter's placement and pose so that its rendered reflection matches
the observed silhouette. Both stages run several independently seeded
restarts of Adam and keep the best.
"""
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from absl import logging

from thermoreflect.emitter_ops import pose_prior, project_pose_latent
from thermoreflect.exceptions import DomainError, FitError, OptimizationError
from thermoreflect.geometry_ops import (
    DTYPE,
    Camera,
    Se3Scale,
    quaternion_from_axis_angle,
    quaternion_multiply,
    random_quaternion,
)
from thermoreflect.metric_ops import silhouette_iou
from thermoreflect.params import ParamVector
from thermoreflect.render_ops import (
    MirrorHits,
    RenderConfig,
    SoftImage,
    edge_sample_rays,
    render_depth_mask,
    render_reflection,
    trace_mirror,
    uniform_sample_rays,
)
from thermoreflect.scene import (
    InitBounds,
    Scene,
    default_emitter_init,
    default_object_init,
)
from thermoreflect.sdf_ops import project_latent
from thermoreflect.util.py.executor import ExecutorLike, execute
from thermoreflect.util.py.progress import Profile, ProgressBar

OBJECT_STAGE = 1
HUMAN_STAGE = 2


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings shared by both stages.

    The learning rate decays geometrically by learning_rate_decay per
    iteration. The σ schedule lives in RenderConfig.
    """

    learning_rate: float = 1e-2
    learning_rate_decay: float = 0.99
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_iterations: int = 300
    object_restarts: int = 5
    human_restarts: int = 8
    w_prior_obj: float = 1e-3
    w_prior_h: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.learning_rate_decay <= 1:
            raise DomainError("learning_rate_decay must lie in (0, 1]")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise DomainError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be at least 1")
        if self.object_restarts < 1 or self.human_restarts < 1:
            raise DomainError("restarts must be at least 1")
        if self.w_prior_obj < 0 or self.w_prior_h < 0:
            raise DomainError("Prior weights must be non-negative")

    def learning_rate_at(self, iteration: int) -> float:
        return self.learning_rate * self.learning_rate_decay ** iteration


@dataclass(frozen=True)
class Observations:
    """Measured inputs of the two stages.

    depth is an (H, W) map in meters with +inf for holes. masks holds one
    (H, W) boolean segmentation per object. silhouette is the binarized
    thermal reflection image. truth_joints is optional ground truth for
    evaluation.
    """

    depth: Optional[np.ndarray] = None
    masks: Tuple[np.ndarray, ...] = ()
    silhouette: Optional[SoftImage] = None
    truth_joints: Optional[np.ndarray] = None


@dataclass(frozen=True)
class AdamState:
    m: torch.Tensor
    v: torch.Tensor
    t: int = 0
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, params: ParamVector, config: Optional[FitConfig] = None) -> "AdamState":
        config = config or FitConfig()
        zeros = torch.zeros(len(params), dtype=DTYPE)
        return cls(
            zeros,
            zeros.clone(),
            0,
            config.learning_rate,
            config.beta1,
            config.beta2,
            config.epsilon,
        )


def adam_step(
    state: AdamState, params: ParamVector, grads: ParamVector
) -> Tuple[AdamState, ParamVector]:
    """One bias-corrected Adam update.

    :param state: The optimizer state.
    :param params: The current parameters.
    :param grads: The gradient, with the same layout as params.
    :return: The updated state and parameters.
    :raises OptimizationError: If the gradient or the parameters contain a
        non-finite value. The message names the segment.
    :raises DomainError: If the dimensions disagree.
    """
    x = params.values.detach()
    g = grads.values.detach() if isinstance(grads, ParamVector) else torch.as_tensor(grads)
    if not (len(g) == len(x) == len(state.m)):
        raise DomainError(
            f"Dimension mismatch: {len(x)} parameters, {len(g)} gradients, "
            f"state of {len(state.m)}"
        )
    for values, what in ((g, "gradient"), (x, "parameter")):
        bad = torch.nonzero(~torch.isfinite(values)).reshape(-1)
        if len(bad):
            raise OptimizationError(
                f"Non-finite {what} in segment `{params.segment_of(int(bad[0]))}`"
            )
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * g
    v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    x = x - state.learning_rate * m_hat / (torch.sqrt(v_hat) + state.epsilon)
    return replace(state, m=m, v=v, t=t), params.with_values(x)


def loss_silhouette(rendered: SoftImage, observed: SoftImage) -> torch.Tensor:
    """Soft IoU loss: 1 - |Î⊗I| / |Î⊕I - Î⊗I| over the rendered pixels.

    :return: A scalar in [0, 1]. If both images are zero on every sampled
        pixel the loss is 1 and a warning is logged.
    :raises DomainError: If the image shapes differ.
    """
    if rendered.values.shape != observed.values.shape:
        raise DomainError(
            f"Image shapes differ: {tuple(rendered.values.shape)} and "
            f"{tuple(observed.values.shape)}"
        )
    sampled = torch.from_numpy(rendered.sampled)
    r = rendered.values[sampled]
    o = observed.values[sampled]
    overlap = (r * o).sum()
    union = (r + o - r * o).sum()
    if float(union.detach()) <= 0:
        logging.log_every_n_seconds(
            logging.WARNING, "Silhouette loss evaluated on an empty union", 60
        )
        return torch.ones((), dtype=DTYPE)
    return 1 - overlap / union


def loss_object(
    scene: Scene,
    camera: Camera,
    observations: Observations,
    object_index: int = 0,
    config: FitConfig = FitConfig(),
    render_config: RenderConfig = RenderConfig(),
) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """The stage-one loss of one object: L_depth + L_mask + L_prior.

    L_depth is the mean absolute depth error over pixels inside the observed
    mask with a measured depth and a predicted hit. L_mask is the mean squared
    error between the soft and observed masks. L_prior is w_prior_obj·‖z‖².

    :return: A tuple of the total and the per-term breakdown.
    :raises FitError: If observations are missing or no pixel is valid.
    """
    if observations.depth is None or len(observations.masks) <= object_index:
        raise FitError(f"object {object_index}: depth map and mask required")
    render = render_depth_mask(scene, camera, render_config, objects=[object_index])
    predicted_depth = render.object_depth[0]
    predicted_mask = render.masks[0]
    observed_mask = np.asarray(observations.masks[object_index], dtype=bool)
    observed_depth = np.asarray(observations.depth, dtype=np.float64)
    if observed_mask.shape != (camera.height, camera.width) or observed_depth.shape != observed_mask.shape:
        raise FitError(f"object {object_index}: observations do not match the camera")
    valid = (
        observed_mask
        & np.isfinite(observed_depth)
        & np.isfinite(predicted_depth.detach().numpy())
    )
    if not valid.any():
        raise FitError(f"object {object_index}: no valid depth pixels")
    valid = torch.from_numpy(valid)
    depth_term = (predicted_depth[valid] - torch.from_numpy(observed_depth)[valid]).abs().mean()
    mask_term = ((predicted_mask - torch.from_numpy(observed_mask).to(DTYPE)) ** 2).mean()
    latent = scene.objects[object_index].latent
    prior_term = config.w_prior_obj * (latent * latent).sum()
    terms = {"depth": depth_term, "mask": mask_term, "prior": prior_term}
    return depth_term + mask_term + prior_term, terms


@dataclass(frozen=True)
class FitResult:
    """The best restart of a fit.

    restart_losses holds the final loss of every restart, +inf for aborted
    ones. loss_trace holds one row of per-term losses per iteration of the
    winning restart.
    """

    scene: Scene
    params: ParamVector
    final_losses: Dict[str, float]
    loss_trace: List[Dict[str, float]]
    restart_index: int
    restart_losses: Tuple[float, ...]
    wall_seconds: float
    iou: Optional[float] = None
    label: str = ""

    @property
    def best_loss(self) -> float:
        return self.final_losses["total"]

    def trace_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.loss_trace)
        frame.insert(0, "iteration", np.arange(len(frame)))
        return frame

    def to_report(self) -> str:
        lines = [f"fit {self.label}".rstrip()]
        lines.append(f"best restart: {self.restart_index}")
        lines.append(
            "restart losses: "
            + " ".join("aborted" if not np.isfinite(x) else f"{x:.6g}" for x in self.restart_losses)
        )
        for name, value in self.final_losses.items():
            lines.append(f"final {name}: {value:.6g}")
        if self.iou is not None:
            lines.append(f"silhouette IoU: {self.iou:.4f}")
        lines.append(f"wall clock: {self.wall_seconds:.1f} s")
        for segment in self.params.names:
            values = " ".join(f"{v:.6g}" for v in self.params[segment].tolist())
            lines.append(f"{segment} = {values}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class _Outcome:
    restart: int
    scene: Optional[Scene] = None
    params: Optional[ParamVector] = None
    final: Dict[str, float] = field(default_factory=dict)
    trace: List[Dict[str, float]] = field(default_factory=list)


def _perturb_placement(
    placement: Se3Scale, bounds: InitBounds, rng: np.random.Generator
) -> Se3Scale:
    translation = rng.uniform(bounds.translation_min, bounds.translation_max)
    if bounds.rotation_spread >= np.pi:
        rotation = torch.from_numpy(random_quaternion(rng))
    else:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.0, bounds.rotation_spread)
        rotation = quaternion_multiply(
            quaternion_from_axis_angle(axis * angle), placement.rotation.detach()
        )
        rotation = rotation / torch.linalg.norm(rotation)
    return Se3Scale(rotation, translation, placement.scale.detach())


def sample_object_start(
    scene: Scene, index: int, bounds: InitBounds, rng: np.random.Generator
) -> Scene:
    """Draw a starting state of one object from its initialization bounds."""
    shape = scene.objects[index].detach()
    placement = _perturb_placement(shape.placement, bounds, rng)
    noise = torch.from_numpy(rng.normal(0.0, bounds.latent_std, size=len(shape.latent)))
    latent = project_latent(shape.family, shape.latent + noise)
    return scene.with_object(index, shape.with_params(latent=latent, placement=placement))


def sample_emitter_start(scene: Scene, bounds: InitBounds, rng: np.random.Generator) -> Scene:
    """Draw a starting state of the emitter from its initialization bounds."""
    model = scene.emitter.detach()
    placement = _perturb_placement(model.placement, bounds, rng)
    noise = torch.from_numpy(rng.normal(0.0, bounds.latent_std, size=len(model.pose_latent)))
    latent = project_pose_latent(model.pose_latent + noise)
    return scene.with_emitter(model.with_params(pose_latent=latent, placement=placement))


def _restart_rng(seed: int, stage: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([seed, stage, restart])


def _run_restarts(
    label: str,
    restarts: int,
    run_one: Callable[[int], _Outcome],
    executor: Optional[ExecutorLike],
) -> Tuple[_Outcome, Tuple[float, ...]]:
    def _guarded(restart: int) -> _Outcome:
        try:
            return run_one(restart)
        except (ArithmeticError, FitError) as e:
            logging.warning("%s: restart %d aborted: %s", label, restart, e)
            return _Outcome(restart)

    outcomes = list(execute(_guarded, range(restarts), executor))
    losses = tuple(o.final.get("total", float("inf")) for o in outcomes)
    finished = [o for o in outcomes if o.scene is not None]
    if not finished:
        raise FitError(f"{label}: all {restarts} restarts aborted")
    best = min(finished, key=lambda o: (o.final["total"], o.restart))
    logging.info(
        "%s: best restart %d of %d with loss %.6g", label, best.restart, restarts, best.final["total"]
    )
    return best, losses


def _optimize(
    label: str,
    scene: Scene,
    params: ParamVector,
    loss_fn: Callable[[Scene, int], Tuple[torch.Tensor, Dict[str, torch.Tensor]]],
    config: FitConfig,
) -> Tuple[Scene, List[Dict[str, float]]]:
    """Run Adam over the selected parameters of a scene.

    Rotation increments are folded into the scene after every step, so the
    increments the loss is differentiated at are always zero.
    """
    state = AdamState.fresh(params, config)
    trace = []
    for iteration in ProgressBar(range(config.max_iterations), desc=label, unit="it"):
        x = params.values.detach().clone().requires_grad_(True)
        total, terms = loss_fn(params.with_values(x).apply(scene), iteration)
        if not bool(torch.isfinite(total.detach())):
            raise OptimizationError(f"{label}: loss diverged at iteration {iteration}")
        (grad,) = torch.autograd.grad(total, x, allow_unused=True)
        if grad is None:
            grad = torch.zeros_like(x)
        row = {"total": float(total.detach())}
        row.update({name: float(value.detach()) for name, value in terms.items()})
        trace.append(row)
        logging.vlog(1, "%s iteration %d: %s", label, iteration, row)
        state = replace(state, learning_rate=config.learning_rate_at(iteration))
        state, params = adam_step(state, params, params.with_values(grad))
        params = params.projected(scene)
        scene, params = params.fold_rotations(scene)
    return scene, trace


def _evaluate(
    loss_fn: Callable[[Scene, int], Tuple[torch.Tensor, Dict[str, torch.Tensor]]],
    scene: Scene,
    iteration: int,
) -> Dict[str, float]:
    with torch.no_grad():
        total, terms = loss_fn(scene, iteration)
    final = {"total": float(total)}
    final.update({name: float(value) for name, value in terms.items()})
    if not np.isfinite(final["total"]):
        raise OptimizationError("Final loss is not finite")
    return final


def fit_object(
    scene: Scene,
    camera: Camera,
    observations: Observations,
    config: FitConfig = FitConfig(),
    render_config: RenderConfig = RenderConfig(),
    object_index: int = 0,
    init: Optional[InitBounds] = None,
    executor: Optional[ExecutorLike] = None,
) -> FitResult:
    """Fit the translation, rotation, scale and latent of one object.

    Restart 0 starts from the declared scene. Further restarts draw their
    start from `init`, which defaults to a 10 cm box around the declared
    translation. The restart with the smallest final loss wins.

    :return: The best restart.
    :raises FitError: If the object has no valid depth pixels or every
        restart diverges.
    """
    if init is None:
        init = default_object_init(scene.objects[object_index])
    label = f"object {object_index}"
    # Surface missing inputs before spending any restarts.
    loss_object(scene, camera, observations, object_index, config, render_config)

    def _loss(s: Scene, iteration: int):
        return loss_object(s, camera, observations, object_index, config, render_config)

    def _run_one(restart: int) -> _Outcome:
        rng = _restart_rng(config.seed, OBJECT_STAGE, restart)
        start = scene.detach()
        if restart:
            start = sample_object_start(start, object_index, init, rng)
        params = ParamVector.for_scene(start, objects=[object_index])
        fitted, trace = _optimize(f"{label} restart {restart}", start, params, _loss, config)
        final = _evaluate(_loss, fitted, config.max_iterations)
        params = ParamVector.for_scene(fitted, objects=[object_index])
        return _Outcome(restart, fitted, params, final, trace)

    started = time.time()
    with Profile(f"Fitted {label} with {config.object_restarts} restarts"):
        best, losses = _run_restarts(label, config.object_restarts, _run_one, executor)
    return FitResult(
        best.scene,
        best.params,
        best.final,
        best.trace,
        best.restart,
        losses,
        time.time() - started,
        label=label,
    )


def fit_objects(
    scene: Scene,
    camera: Camera,
    observations: Observations,
    config: FitConfig = FitConfig(),
    render_config: RenderConfig = RenderConfig(),
    init: Optional[Sequence[Optional[InitBounds]]] = None,
    executor: Optional[ExecutorLike] = None,
) -> Tuple[Scene, List[FitResult]]:
    """Stage one: fit every object independently.

    :return: The scene with every object replaced by its fit, and the
        per-object results.
    """
    results = []
    fitted = scene.detach()
    for index in range(scene.num_objects):
        bounds = init[index] if init is not None else None
        result = fit_object(
            scene, camera, observations, config, render_config, index, bounds, executor
        )
        fitted = fitted.with_object(index, result.scene.objects[index])
        results.append(result)
    return fitted, results


def _human_terms(
    scene: Scene,
    camera: Camera,
    observed: SoftImage,
    mirror: MirrorHits,
    config: FitConfig,
    render_config: RenderConfig,
    pixels: Optional[np.ndarray],
    sigma: float,
) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    rendered = render_reflection(
        scene, camera, render_config, pixels=pixels, mirror=mirror, sigma=sigma
    )
    silhouette = loss_silhouette(rendered, observed)
    prior = config.w_prior_h * pose_prior(scene.emitter)
    return silhouette + prior, {"silhouette": silhouette, "prior": prior}


def fit_human(
    scene: Scene,
    camera: Camera,
    observed: SoftImage,
    config: FitConfig = FitConfig(),
    render_config: RenderConfig = RenderConfig(),
    init: Optional[InitBounds] = None,
    executor: Optional[ExecutorLike] = None,
    mirror: Optional[MirrorHits] = None,
) -> FitResult:
    """Stage two: fit the emitter's placement and pose to a silhouette.

    The mirror objects are frozen and traced once. Every iteration renders
    the rays chosen by the edge sampling curriculum (or uniform rays if it is
    disabled) at the annealed σ. Restarts are ranked by the full-image soft
    loss at the final σ plus the prior, and the winner's hard-render IoU is
    reported.

    :return: The best restart.
    :raises FitError: If the observed silhouette is empty, or every restart
        diverges.
    """
    if not observed.binarized().any():
        raise FitError("Observed silhouette is empty: nothing to fit")
    if init is None:
        init = default_emitter_init(scene.emitter)
    frozen = scene.detach()
    if mirror is None:
        with torch.no_grad(), Profile("Traced mirror objects"):
            mirror = trace_mirror(frozen, camera, render_config)
    final_sigma = render_config.sigma_at(config.max_iterations - 1)

    def _run_one(restart: int) -> _Outcome:
        rng = _restart_rng(config.seed, HUMAN_STAGE, restart)
        start = frozen
        if restart:
            start = sample_emitter_start(start, init, rng)

        def _loss(s: Scene, iteration: int):
            if render_config.edge_sampling:
                pixels = edge_sample_rays(observed, iteration, render_config, rng)
            else:
                pixels = uniform_sample_rays(camera, render_config.ray_budget, rng)
            sigma = render_config.sigma_at(iteration)
            return _human_terms(
                s, camera, observed, mirror, config, render_config, pixels, sigma
            )

        def _full_loss(s: Scene, iteration: int):
            return _human_terms(
                s, camera, observed, mirror, config, render_config, None, final_sigma
            )

        params = ParamVector.for_scene(start, emitter=True)
        fitted, trace = _optimize(f"emitter restart {restart}", start, params, _loss, config)
        final = _evaluate(_full_loss, fitted, config.max_iterations)
        params = ParamVector.for_scene(fitted, emitter=True)
        return _Outcome(restart, fitted, params, final, trace)

    started = time.time()
    with Profile(f"Fitted emitter with {config.human_restarts} restarts"):
        best, losses = _run_restarts("emitter", config.human_restarts, _run_one, executor)
        with torch.no_grad():
            hard = render_reflection(best.scene, camera, render_config, mirror=mirror, hard=True)
    iou = silhouette_iou(hard.values.numpy(), observed.values.numpy())
    logging.info("Emitter fit reaches silhouette IoU %.4f", iou)
    return FitResult(
        best.scene,
        best.params,
        best.final,
        best.trace,
        best.restart,
        losses,
        time.time() - started,
        iou=iou,
        label="emitter",
    )
