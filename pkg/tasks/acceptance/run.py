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
"""Run the end-to-end recovery experiments on synthetic scenes.

Three experiments are run for every seed:

  objects:  Fit the mirror of the bowl and box presets to their noisy depth
            maps and masks, and measure the translation and scale errors.
  human:    Fit the bowl, then the person, and measure the silhouette IoU and
            the mean normalized joint error.
  ablation: Fit the person once per renderer variant on the scene of the
            human experiment, and check that the full renderer is best.

Example usage:

    $ python -m tasks.acceptance.run --out=/tmp/acceptance --seeds=0,1,2

Each experiment writes a CSV to --out. The process exits with status 1 if an
experiment misses its threshold.
"""
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd
from absl import app, flags, logging

from thermoreflect.ablation_ops import RANDOM_BASELINE, VARIANTS, ablate_run
from thermoreflect.emitter_ops import joint_positions
from thermoreflect.metric_ops import keypoint_metric
from thermoreflect.optimize_ops import FitConfig, fit_human, fit_objects
from thermoreflect.render_ops import RenderConfig
from thermoreflect.scene import Scene
from thermoreflect.scene_ops import build_scene, object_inits
from thermoreflect.synthetic_ops import SyntheticScene, make_synthetic
from thermoreflect.util.py.executor import ExecutorLike, make_executor
from thermoreflect.util.py.progress import Profile, ProgressBar

flags.DEFINE_string("out", None, "The directory to write results to.")
flags.DEFINE_list("seeds", ["0", "1", "2"], "The seeds to run.")
flags.DEFINE_list(
    "experiments", ["objects", "human", "ablation"], "The experiments to run."
)
flags.DEFINE_integer("resolution", 128, "Image resolution of the synthetic scenes.")
flags.DEFINE_integer("threads", 1, "The number of worker threads.")
FLAGS = flags.FLAGS

OBJECT_PRESETS = ("bowl", "box")
HUMAN_PRESET = "bowl"

TRANSLATION_TOLERANCE = 0.005
SCALE_TOLERANCE = 0.02
IOU_THRESHOLD = 0.95
JOINT_ERROR_THRESHOLD = 0.05


def object_recovery(
    preset: str,
    seed: int,
    resolution: int,
    fit_config: FitConfig,
    render_config: RenderConfig,
    executor: Optional[ExecutorLike] = None,
) -> Dict:
    """Fit the mirror of a synthetic scene and compare it to the truth."""
    synthetic = make_synthetic(preset, resolution, seed, render_config=render_config)
    truth = build_scene(synthetic.truth)
    fitted, results = fit_objects(
        build_scene(synthetic.initial),
        synthetic.initial.camera,
        synthetic.observations(),
        replace(fit_config, seed=seed),
        render_config,
        object_inits(synthetic.initial),
        executor,
    )
    placement, expected = fitted.objects[0].placement, truth.objects[0].placement
    translation_error = float((placement.translation - expected.translation).norm())
    scale_error = float(abs(placement.scale / expected.scale - 1))
    return {
        "preset": preset,
        "seed": seed,
        "translation_error": translation_error,
        "scale_error": scale_error,
        "best_loss": results[0].best_loss,
        "passed": translation_error <= TRANSLATION_TOLERANCE
        and scale_error <= SCALE_TOLERANCE,
    }


def human_recovery(
    preset: str,
    seed: int,
    resolution: int,
    fit_config: FitConfig,
    render_config: RenderConfig,
    executor: Optional[ExecutorLike] = None,
) -> Tuple[Dict, Scene, SyntheticScene]:
    """Fit the mirror and then the person of a synthetic scene.

    :return: The result row, the scene with fitted objects, and the synthetic
        scene.
    """
    synthetic = make_synthetic(preset, resolution, seed, render_config=render_config)
    observations = synthetic.observations()
    camera = synthetic.initial.camera
    fit_config = replace(fit_config, seed=seed)
    scene, _ = fit_objects(
        build_scene(synthetic.initial),
        camera,
        observations,
        fit_config,
        render_config,
        object_inits(synthetic.initial),
        executor,
    )
    result = fit_human(
        scene,
        camera,
        observations.silhouette,
        fit_config,
        render_config,
        synthetic.initial.emitter.init,
        executor,
    )
    predicted = joint_positions(result.scene.emitter).detach().numpy()
    metric = keypoint_metric(predicted, synthetic.truth_joints, f"seed {seed}")
    row = {
        "preset": preset,
        "seed": seed,
        "silhouette_iou": result.iou,
        "mean_normalized_3d": metric.mean,
        "passed": result.iou >= IOU_THRESHOLD and metric.mean <= JOINT_ERROR_THRESHOLD,
    }
    return row, scene, synthetic


def full_model_wins(table: pd.DataFrame) -> bool:
    """Whether the full renderer's joint error is no worse than every
    ablated variant which finished."""
    fitted = table[(table.variant != RANDOM_BASELINE) & (table.status == "ok")]
    full = fitted[fitted.variant == "full"]
    if full.empty:
        return False
    return bool((full.mean_normalized_3d.iloc[0] <= fitted.mean_normalized_3d).all())


def ablation(
    scene: Scene,
    synthetic: SyntheticScene,
    seed: int,
    fit_config: FitConfig,
    render_config: RenderConfig,
    executor: Optional[ExecutorLike] = None,
) -> pd.DataFrame:
    table = ablate_run(
        scene,
        synthetic.initial.camera,
        synthetic.observations(),
        list(VARIANTS) + [RANDOM_BASELINE],
        replace(fit_config, seed=seed),
        render_config,
        synthetic.initial.emitter.init,
        executor,
    )
    table.insert(0, "seed", seed)
    return table


def _report(name: str, passed: bool) -> bool:
    logging.info("%s: %s", name, "PASS" if passed else "FAIL")
    return passed


def main(argv):
    if len(argv) != 1:
        raise app.UsageError(f"Unrecognized arguments: {argv[1:]}")
    if not FLAGS.out:
        raise app.UsageError("--out is required")
    out = Path(FLAGS.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in FLAGS.seeds]
    fit_config, render_config = FitConfig(), RenderConfig()
    executor = make_executor(FLAGS.threads)
    passed: List[bool] = []

    if "objects" in FLAGS.experiments:
        with Profile("Object recovery"):
            rows = [
                object_recovery(preset, seed, FLAGS.resolution, fit_config, render_config, executor)
                for preset in OBJECT_PRESETS
                for seed in ProgressBar(seeds, desc=preset, unit="seed")
            ]
        frame = pd.DataFrame(rows)
        frame.to_csv(out / "objects.csv", index=False, float_format="%.6g")
        passed.append(_report("Object recovery", bool(frame.passed.all())))

    if "human" in FLAGS.experiments or "ablation" in FLAGS.experiments:
        rows, tables = [], []
        for seed in ProgressBar(seeds, desc="human", unit="seed"):
            with Profile(f"Human recovery of seed {seed}"):
                row, scene, synthetic = human_recovery(
                    HUMAN_PRESET, seed, FLAGS.resolution, fit_config, render_config, executor
                )
            rows.append(row)
            if "ablation" in FLAGS.experiments:
                with Profile(f"Ablation of seed {seed}"):
                    tables.append(
                        ablation(scene, synthetic, seed, fit_config, render_config, executor)
                    )
        if "human" in FLAGS.experiments:
            frame = pd.DataFrame(rows)
            frame.to_csv(out / "human.csv", index=False, float_format="%.6g")
            passed.append(_report("Human recovery", bool(frame.passed.all())))
        if tables:
            table = pd.concat(tables, ignore_index=True)
            table.to_csv(out / "ablation.csv", index=False, float_format="%.6g")
            wins = [full_model_wins(t) for t in tables]
            logging.info("Full renderer best on %d of %d seeds", sum(wins), len(wins))
            passed.append(_report("Ablation ordering", 2 * sum(wins) > len(wins)))

    if not all(passed):
        sys.exit(1)


if __name__ == "__main__":
    app.run(main)
