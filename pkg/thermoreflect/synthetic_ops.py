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
"""Synthetic ground-truth scenes and their observations.

Each preset places a mirror object in front of a camera at the origin and an
emitter behind the camera, so the emitter is seen only in the mirror. The
world frame is the camera frame: x right, y down, z forward.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Tuple, Union

import numpy as np
import torch
from absl import logging

from thermoreflect.emitter_ops import EmitterModel, default_skeleton, joint_positions
from thermoreflect.exceptions import DomainError
from thermoreflect.geometry_ops import DTYPE, Camera, Se3Scale
from thermoreflect.io_ops import save_joints, save_pfm, save_pgm
from thermoreflect.optimize_ops import Observations
from thermoreflect.render_ops import (
    RenderConfig,
    SoftImage,
    render_depth_mask,
    render_reflection,
)
from thermoreflect.scene import Scene
from thermoreflect.scene_ops import (
    ObservationPaths,
    SceneFile,
    save_scene,
    scene_file_for,
)
from thermoreflect.sdf_ops import SdfShape, project_latent
from thermoreflect.util.py.progress import Profile

DEPTH_NOISE = 0.002
HOLE_FRACTION = 0.3

# Rotation by π about x: maps the y-up skeleton and +y-opening bowl into the
# y-down camera frame.
FLIP_X = (0.0, 1.0, 0.0, 0.0)

# Joints which receive a random rotation in the ground-truth pose.
POSED_JOINTS = (
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
    "neck",
)
POSE_STD = 0.3


def preset_camera(resolution: int) -> Camera:
    return Camera(
        1.5 * resolution,
        1.5 * resolution,
        resolution / 2,
        resolution / 2,
        resolution,
        resolution,
    )


def _flip_then(axis_angle_y: float) -> torch.Tensor:
    """The rotation π about x followed by a rotation about y."""
    half = 0.5 * axis_angle_y
    # q_y ⊗ q_x(π) with q_x(π) = (0, 1, 0, 0).
    return torch.tensor(
        [0.0, np.cos(half), 0.0, -np.sin(half)], dtype=DTYPE
    )


def _bowl() -> Tuple[SdfShape, Tuple[float, float, float]]:
    shape = SdfShape(
        "bowl",
        torch.tensor([0.2, 0.19, 0.1], dtype=DTYPE),
        Se3Scale(FLIP_X, (0.0, 0.05, 0.7)),
    )
    return shape, (0.3, 0.0, -0.4)


def _box() -> Tuple[SdfShape, Tuple[float, float, float]]:
    shape = SdfShape(
        "rounded-box",
        torch.tensor([0.15, 0.15, 0.05, 0.02], dtype=DTYPE),
        Se3Scale(_flip_then(-0.13), (0.0, 0.0, 0.7)),
    )
    return shape, (0.3, 0.0, -0.4)


def _plane() -> Tuple[SdfShape, Tuple[float, float, float]]:
    shape = SdfShape(
        "plane",
        torch.zeros(0, dtype=DTYPE),
        Se3Scale(FLIP_X, (0.0, 0.0, 0.8)),
    )
    return shape, (0.0, 0.0, -0.6)


def _panel() -> Tuple[SdfShape, Tuple[float, float, float]]:
    shape = SdfShape(
        "ellipsoid",
        torch.tensor([0.6, 0.4, 0.1], dtype=DTYPE),
        Se3Scale(_flip_then(-0.2), (0.0, 0.0, 1.0)),
    )
    return shape, (0.5, 0.0, -0.3)


PRESETS: Dict[str, Callable[[], Tuple[SdfShape, Tuple[float, float, float]]]] = {
    "bowl": _bowl,
    "box": _box,
    "plane": _plane,
    "panel": _panel,
}


@dataclass(frozen=True)
class SyntheticScene:
    """A ground-truth scene, a perturbed starting scene, and observations."""

    truth: SceneFile
    initial: SceneFile
    depth: np.ndarray
    masks: Tuple[np.ndarray, ...]
    silhouette: np.ndarray
    truth_joints: np.ndarray

    def observations(self) -> Observations:
        silhouette = SoftImage(torch.from_numpy(self.silhouette.astype(np.float64)))
        return Observations(self.depth, self.masks, silhouette, self.truth_joints)


def truth_pose(rng: np.random.Generator) -> torch.Tensor:
    skeleton = default_skeleton()
    latent = np.zeros((skeleton.num_joints - 1, 3))
    for name in POSED_JOINTS:
        latent[skeleton.index(name) - 1] = rng.normal(0.0, POSE_STD, size=3)
    return torch.from_numpy(latent.reshape(-1))


def observation_paths(num_objects: int) -> ObservationPaths:
    return ObservationPaths(
        "depth.pfm",
        tuple(f"mask{i}.pgm" for i in range(num_objects)),
        "silhouette.pgm",
        "truth_joints.csv",
    )


def _perturb(scene: Scene, rng: np.random.Generator) -> Scene:
    objects = []
    for shape in scene.objects:
        placement = shape.placement
        translation = placement.translation + torch.from_numpy(rng.normal(0.0, 0.01, size=3))
        scale = placement.scale * (1 + rng.normal(0.0, 0.02))
        latent = shape.latent
        if len(latent):
            latent = project_latent(
                shape.family, latent * torch.from_numpy(1 + rng.normal(0.0, 0.02, size=len(latent)))
            )
        objects.append(
            shape.with_params(
                latent=latent, placement=Se3Scale(placement.rotation, translation, scale)
            )
        )
    emitter = scene.emitter
    translation = emitter.placement.translation + torch.from_numpy(rng.normal(0.0, 0.05, size=3))
    emitter = emitter.with_params(
        pose_latent=torch.zeros_like(emitter.pose_latent),
        placement=Se3Scale(emitter.placement.rotation, translation),
    )
    return Scene(tuple(objects), emitter)


def make_synthetic(
    preset: str = "bowl",
    resolution: int = 128,
    seed: int = 0,
    depth_noise: float = DEPTH_NOISE,
    hole_fraction: float = HOLE_FRACTION,
    render_config: RenderConfig = RenderConfig(),
) -> SyntheticScene:
    """Generate a ground-truth scene and render its observations.

    The depth map carries Gaussian noise and a fraction of random holes. The
    masks and the silhouette are hard renders. The starting scene perturbs
    the object placements slightly and the emitter translation by a few
    centimetres, with a rest pose.

    :param preset: One of bowl, box, plane, or panel.
    :param resolution: The image width and height.
    :param seed: The seed of the pose, noise, holes and perturbation.
    :return: The synthetic scene.
    :raises DomainError: If the preset is unknown or the emitter is not
        visible in the mirror.
    """
    if preset not in PRESETS:
        raise DomainError(f"Unknown preset `{preset}`. Expected one of: {', '.join(PRESETS)}")
    if not 0 <= hole_fraction < 1 or depth_noise < 0:
        raise DomainError("Invalid depth noise or hole fraction")
    rng = np.random.default_rng(seed)
    camera = preset_camera(resolution)
    shape, emitter_translation = PRESETS[preset]()
    emitter = EmitterModel(default_skeleton(), truth_pose(rng), Se3Scale(FLIP_X, emitter_translation))
    truth = Scene((shape,), emitter)

    with torch.no_grad(), Profile(f"Rendered synthetic `{preset}` observations"):
        render = render_depth_mask(truth, camera, render_config)
        silhouette = render_reflection(truth, camera, render_config, hard=True).binarized()
    if not silhouette.any():
        raise DomainError(f"The emitter of preset `{preset}` is not visible in the mirror")

    object_depth = render.object_depth.numpy()
    masks = tuple(np.isfinite(d) for d in object_depth)
    depth = render.depth.numpy().copy()
    finite = np.isfinite(depth)
    depth[finite] += rng.normal(0.0, depth_noise, size=int(finite.sum()))
    depth[rng.random(depth.shape) < hole_fraction] = np.inf
    truth_joints = joint_positions(emitter).numpy()
    logging.info(
        "Synthetic `%s`: %d mirror pixels, %d silhouette pixels",
        preset,
        int(masks[0].sum()),
        int(silhouette.sum()),
    )

    paths = observation_paths(truth.num_objects)
    initial = _perturb(truth, rng)
    truth_file = scene_file_for(truth, camera, paths, render_config, seed=seed)
    initial_file = scene_file_for(
        initial,
        camera,
        paths,
        render_config,
        seed=seed,
        inits=[d.init for d in truth_file.objects],
        emitter_init=truth_file.emitter.init,
    )
    return SyntheticScene(truth_file, initial_file, depth, masks, silhouette, truth_joints)


def write_synthetic(out_dir: Union[str, Path], synthetic: SyntheticScene) -> Path:
    """Write a synthetic scene to a directory.

    :return: The path of the starting scene file, scene.txt.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = synthetic.truth.observations
    save_pfm(out_dir / paths.depth, synthetic.depth)
    for name, mask in zip(paths.masks, synthetic.masks):
        save_pgm(out_dir / name, mask)
    save_pgm(out_dir / paths.silhouette, synthetic.silhouette)
    save_joints(
        out_dir / paths.truth_joints,
        synthetic.truth.emitter.skeleton.names,
        synthetic.truth_joints,
    )
    save_scene(out_dir / "truth_scene.txt", synthetic.truth)
    save_scene(out_dir / "scene.txt", synthetic.initial)
    return out_dir / "scene.txt"
