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
"""Reconstruct a person from their reflection in mirror-like objects.

Example usage:

  Generate a synthetic bowl-mirror scene with observations:

    $ thermoreflect make-synthetic --preset=bowl --out=/tmp/bowl

  Fit the mirror objects to the depth map and masks:

    $ thermoreflect fit-object --scene=/tmp/bowl/scene.txt --out=/tmp/fit

  Fit the person to the reflection silhouette:

    $ thermoreflect fit-human --scene=/tmp/fit/fitted_scene.txt --out=/tmp/fit

  Compare the renderer ablations:

    $ thermoreflect ablate --scene=/tmp/bowl/truth_scene.txt --out=/tmp/ablate
"""
import sys
from dataclasses import replace
from pathlib import Path
from typing import Tuple

import numpy as np
import torch
from absl import app, flags, logging

from thermoreflect.ablation_ops import ablate_run, parse_variants, save_table
from thermoreflect.emitter_ops import build_emitter_mesh, joint_positions
from thermoreflect.exceptions import (
    DomainError,
    FitError,
    GradcheckError,
    ImageFormatError,
    MetricError,
    OptimizationError,
    SceneParseError,
)
from thermoreflect.gradcheck_ops import gradcheck
from thermoreflect.io_ops import save_joints, save_obj, save_pfm, save_pgm, save_sdf_grid
from thermoreflect.metric_ops import evaluation_camera, keypoint_metric, keypoint_metric_2d
from thermoreflect.optimize_ops import fit_human, fit_objects, loss_silhouette
from thermoreflect.params import ParamVector
from thermoreflect.render_ops import render_depth_mask, render_reflection, trace_mirror
from thermoreflect.scene import Scene
from thermoreflect.scene_ops import (
    SceneFile,
    build_scene,
    load_observations,
    load_scene,
    object_inits,
    save_scene,
    update_scene_file,
)
from thermoreflect.sdf_ops import marching_cubes, shape_bounds
from thermoreflect.synthetic_ops import PRESETS, make_synthetic, write_synthetic
from thermoreflect.util.py.executor import make_executor
from thermoreflect.util.py.init_app import init_app

COMMANDS = (
    "render",
    "fit-object",
    "fit-human",
    "gradcheck",
    "ablate",
    "export-mesh",
    "make-synthetic",
)

# Finite-difference step (meters) and relative error tolerance of the render
# loss audit.
GRADCHECK_STEP = 1e-4
GRADCHECK_TOLERANCE = 1e-2

flags.DEFINE_string("scene", None, "The path of the scene file to read.")
flags.DEFINE_string("out", ".", "The directory to write outputs to.")
flags.DEFINE_integer(
    "seed", None, "Random seed of the restarts. Overrides the seed of the scene file."
)
flags.DEFINE_integer(
    "threads", 1, "The number of worker threads for restarts and ablation variants."
)
flags.DEFINE_multi_string(
    "variant",
    None,
    "The ablation variants to run: full, no-edge-sampling, sphere-steps-1, "
    "no-smoothing, or random. May be repeated. Defaults to all of them.",
)
flags.DEFINE_enum(
    "preset", "bowl", sorted(PRESETS), "The synthetic scene to generate (make-synthetic)."
)
flags.DEFINE_integer("resolution", 128, "Image resolution of synthetic scenes.")
flags.DEFINE_integer(
    "mesh_resolution", 48, "Marching cubes grid resolution of exported object meshes."
)
FLAGS = flags.FLAGS


def _load() -> Tuple[SceneFile, Scene]:
    if not FLAGS.scene:
        raise app.UsageError("--scene is required")
    scene_file = load_scene(FLAGS.scene)
    if FLAGS.seed is not None:
        scene_file = scene_file.with_seed(FLAGS.seed)
    return scene_file, build_scene(scene_file)


def _out_dir() -> Path:
    out = Path(FLAGS.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _to_gray(values: torch.Tensor) -> np.ndarray:
    return np.rint(values.detach().numpy().clip(0, 1) * 255).astype(np.uint8)


def render(scene_file: SceneFile, scene: Scene, out: Path) -> None:
    camera, config = scene_file.camera, scene_file.render
    with torch.no_grad():
        soft = render_reflection(scene, camera, config)
        hard = render_reflection(scene, camera, config, hard=True)
        depth_mask = render_depth_mask(scene, camera, config)
    save_pgm(out / "reflection.pgm", _to_gray(soft.values))
    save_pgm(out / "silhouette.pgm", hard.binarized())
    save_pfm(out / "depth.pfm", depth_mask.depth.numpy())
    for i, mask in enumerate(depth_mask.masks):
        save_pgm(out / f"mask{i}.pgm", _to_gray(mask))


def fit_object_command(scene_file: SceneFile, scene: Scene, out: Path) -> None:
    observations = load_observations(scene_file)
    fitted, results = fit_objects(
        scene,
        scene_file.camera,
        observations,
        scene_file.fit,
        scene_file.render,
        object_inits(scene_file),
        make_executor(FLAGS.threads),
    )
    grids = {}
    for i, result in enumerate(results):
        (out / f"fit_object{i}.txt").write_text(result.to_report())
        result.trace_frame().to_csv(out / f"fit_object{i}_trace.csv", index=False, float_format="%.9g")
        shape = fitted.objects[i]
        if shape.family == "grid":
            grids[i] = str((out / f"object{i}_grid.sdf").resolve())
            save_sdf_grid(grids[i], shape.grid, shape.latent.detach().numpy())
    fitted_file = update_scene_file(scene_file, fitted, grids)
    save_scene(out / "fitted_scene.txt", _rebased(fitted_file, out))


def _rebased(scene_file: SceneFile, out: Path) -> SceneFile:
    """Make the observation paths of a scene file valid from another directory."""
    paths = scene_file.observations

    def _abs(p):
        return None if p is None else str(scene_file.resolve(p).resolve())

    observations = replace(
        paths,
        depth=_abs(paths.depth),
        masks=tuple(_abs(m) for m in paths.masks),
        silhouette=_abs(paths.silhouette),
        truth_joints=_abs(paths.truth_joints),
    )
    objects = tuple(
        replace(o, grid=_abs(o.grid)) if o.grid else o for o in scene_file.objects
    )
    return replace(scene_file, observations=observations, objects=objects, base_dir=out)


def _silhouette(scene_file: SceneFile):
    observations = load_observations(scene_file)
    if observations.silhouette is None:
        raise app.UsageError("The scene file declares no silhouette observation")
    return observations


def fit_human_command(scene_file: SceneFile, scene: Scene, out: Path) -> None:
    observations = _silhouette(scene_file)
    camera = scene_file.camera
    result = fit_human(
        scene,
        camera,
        observations.silhouette,
        scene_file.fit,
        scene_file.render,
        scene_file.emitter.init,
        make_executor(FLAGS.threads),
    )
    report = result.to_report()
    predicted = joint_positions(result.scene.emitter).detach().numpy()
    names = result.scene.emitter.skeleton.names
    save_joints(out / "joints.csv", names, predicted)
    if observations.truth_joints is not None:
        metric = keypoint_metric(predicted, observations.truth_joints, "fit-human")
        metric_2d = keypoint_metric_2d(
            predicted,
            observations.truth_joints,
            evaluation_camera(observations.truth_joints),
            "fit-human",
        )
        report += (
            f"mean normalized 3D joint error: {metric.mean:.6g} "
            f"(normalization {metric.normalization:.6g} m)\n"
            f"mean normalized 2D joint error: {metric_2d.mean:.6g}\n"
        )
    (out / "fit_human.txt").write_text(report)
    result.trace_frame().to_csv(out / "fit_human_trace.csv", index=False, float_format="%.9g")
    with torch.no_grad():
        hard = render_reflection(result.scene, camera, scene_file.render, hard=True)
    save_pgm(out / "reflection.pgm", hard.binarized())
    save_scene(
        out / "fitted_scene.txt", _rebased(update_scene_file(scene_file, result.scene), out)
    )


def gradcheck_command(scene_file: SceneFile, scene: Scene, out: Path) -> bool:
    """Audit the gradient of the silhouette loss with respect to the emitter
    translation."""
    observations = _silhouette(scene_file)
    camera, config = scene_file.camera, scene_file.render
    with torch.no_grad():
        mirror = trace_mirror(scene.detach(), camera, config)
    params = ParamVector.for_scene(scene, emitter=True)
    translation = ParamVector([("emitter.translation", 3)], params["emitter.translation"])

    def loss(p: ParamVector) -> torch.Tensor:
        values = torch.cat([p.values, params.values[3:]])
        state = params.with_values(values).apply(scene)
        image = render_reflection(state, camera, config, mirror=mirror)
        return loss_silhouette(image, observations.silhouette)

    report = gradcheck(
        loss,
        translation,
        h=GRADCHECK_STEP,
        tol=GRADCHECK_TOLERANCE,
        executor=make_executor(FLAGS.threads),
    )
    (out / "gradcheck.txt").write_text(report.to_table() + "\n")
    print(report.to_table())
    return report.passed


def ablate(scene_file: SceneFile, scene: Scene, out: Path) -> None:
    observations = _silhouette(scene_file)
    table = ablate_run(
        scene,
        scene_file.camera,
        observations,
        parse_variants(FLAGS.variant),
        scene_file.fit,
        scene_file.render,
        scene_file.emitter.init,
        make_executor(FLAGS.threads),
    )
    save_table(out / "ablation.csv", table)
    print(table.to_string(index=False))


def export_mesh(scene_file: SceneFile, scene: Scene, out: Path) -> None:
    for i, shape in enumerate(scene.objects):
        if shape.family == "plane":
            logging.warning("Object %d is an unbounded plane, not exported", i)
            continue
        mesh = marching_cubes(shape, shape_bounds(shape), FLAGS.mesh_resolution)
        save_obj(out / f"object{i}.obj", mesh)
    save_obj(
        out / "emitter.obj", build_emitter_mesh(scene.emitter, scene_file.render.segments).detach()
    )


def make_synthetic_command(out: Path) -> None:
    synthetic = make_synthetic(
        FLAGS.preset, FLAGS.resolution, 0 if FLAGS.seed is None else FLAGS.seed
    )
    path = write_synthetic(out, synthetic)
    print(path)


def main(argv):
    command = init_app(argv, commands=COMMANDS)
    try:
        out = _out_dir()
        if command == "make-synthetic":
            make_synthetic_command(out)
            return
        scene_file, scene = _load()
        if command == "render":
            render(scene_file, scene, out)
        elif command == "fit-object":
            fit_object_command(scene_file, scene, out)
        elif command == "fit-human":
            fit_human_command(scene_file, scene, out)
        elif command == "gradcheck":
            if not gradcheck_command(scene_file, scene, out):
                sys.exit(1)
        elif command == "ablate":
            ablate(scene_file, scene, out)
        elif command == "export-mesh":
            export_mesh(scene_file, scene, out)
    except (SceneParseError, DomainError) as e:
        raise app.UsageError(str(e)) from e
    except (
        FitError,
        GradcheckError,
        ImageFormatError,
        MetricError,
        OptimizationError,
    ) as e:
        logging.error("%s failed: %s", command, e)
        sys.exit(1)


def run():
    """Entry point of the installed `thermoreflect` script."""
    app.run(main)


if __name__ == "__main__":
    run()
