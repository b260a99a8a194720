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
"""Ablations of the emitter fit.

Every variant switches off one component of the renderer and reruns the
emitter fit with the same seeds and budgets. A random baseline scores poses
drawn from the restart distribution without any optimization.
"""
from dataclasses import replace
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
import torch
from absl import logging

from thermoreflect.emitter_ops import joint_positions
from thermoreflect.exceptions import DomainError, FitError
from thermoreflect.geometry_ops import Camera
from thermoreflect.metric_ops import (
    evaluation_camera,
    keypoint_metric,
    keypoint_metric_2d,
    silhouette_iou,
)
from thermoreflect.optimize_ops import (
    FitConfig,
    Observations,
    fit_human,
    sample_emitter_start,
)
from thermoreflect.render_ops import RenderConfig, render_reflection, trace_mirror
from thermoreflect.scene import InitBounds, Scene, default_emitter_init
from thermoreflect.util.py.executor import ExecutorLike, execute
from thermoreflect.util.py.progress import Profile

# "sphere-steps-1" replaces sphere tracing by a single refinement step after
# the coarse march.
VARIANTS = ("full", "no-edge-sampling", "sphere-steps-1", "no-smoothing")
RANDOM_BASELINE = "random"
RANDOM_STAGE = 3

COLUMNS = [
    "variant",
    "mean_normalized_3d",
    "mean_normalized_2d",
    "silhouette_iou",
    "normalization",
    "status",
]


def variant_config(variant: str, config: RenderConfig) -> RenderConfig:
    """The render settings of an ablation variant."""
    if variant == "full":
        return config
    if variant == "no-edge-sampling":
        return replace(config, edge_sampling=False)
    if variant == "sphere-steps-1":
        return replace(config, sphere_steps=1)
    if variant == "no-smoothing":
        return replace(config, smoothing=False)
    raise DomainError(
        f"Unknown ablation variant `{variant}`. "
        f"Expected one of: {', '.join(VARIANTS + (RANDOM_BASELINE,))}"
    )


def _row(variant: str, predicted: np.ndarray, truth: np.ndarray, iou: float) -> Dict:
    report = keypoint_metric(predicted, truth, variant)
    report_2d = keypoint_metric_2d(predicted, truth, evaluation_camera(truth), variant)
    return {
        "variant": variant,
        "mean_normalized_3d": report.mean,
        "mean_normalized_2d": report_2d.mean,
        "silhouette_iou": iou,
        "normalization": report.normalization,
        "status": "ok",
    }


def _failed(variant: str, error: Exception) -> Dict:
    logging.warning("Ablation variant %s failed: %s", variant, error)
    return {
        "variant": variant,
        "mean_normalized_3d": float("nan"),
        "mean_normalized_2d": float("nan"),
        "silhouette_iou": float("nan"),
        "normalization": float("nan"),
        "status": f"failed: {error}",
    }


def random_baseline(
    scene: Scene,
    camera: Camera,
    observations: Observations,
    fit_config: FitConfig = FitConfig(),
    render_config: RenderConfig = RenderConfig(),
    init: Optional[InitBounds] = None,
    draws: Optional[int] = None,
) -> Dict:
    """Score emitter states drawn from the restart distribution.

    :return: A table row with the metrics averaged over the draws.
    """
    truth = observations.truth_joints
    init = init or default_emitter_init(scene.emitter)
    draws = draws or fit_config.human_restarts
    with torch.no_grad():
        mirror = trace_mirror(scene.detach(), camera, render_config)
        rows = []
        for draw in range(draws):
            rng = np.random.default_rng([fit_config.seed, RANDOM_STAGE, draw])
            sample = sample_emitter_start(scene, init, rng)
            hard = render_reflection(sample, camera, render_config, mirror=mirror, hard=True)
            iou = silhouette_iou(hard.values.numpy(), observations.silhouette.values.numpy())
            rows.append(_row(RANDOM_BASELINE, joint_positions(sample.emitter).numpy(), truth, iou))
    row = {"variant": RANDOM_BASELINE, "status": "ok"}
    for column in COLUMNS[1:5]:
        row[column] = float(np.mean([r[column] for r in rows]))
    return row


def ablate_run(
    scene: Scene,
    camera: Camera,
    observations: Observations,
    variants: Iterable[str] = VARIANTS,
    fit_config: FitConfig = FitConfig(),
    render_config: RenderConfig = RenderConfig(),
    init: Optional[InitBounds] = None,
    executor: Optional[ExecutorLike] = None,
) -> pd.DataFrame:
    """Run the emitter fit once per variant and tabulate the metrics.

    The mirror objects are used as given. Every variant uses the same seed
    and budgets. A failing variant is reported in the status column and does
    not stop the others.

    :param variants: Variant names, optionally including "random".
    :return: A frame with one row per variant, in the order given.
    :raises FitError: If the observations lack ground-truth joints or a
        silhouette.
    """
    variants = list(dict.fromkeys(variants))
    for variant in variants:
        if variant != RANDOM_BASELINE:
            variant_config(variant, render_config)
    if observations.truth_joints is None or observations.silhouette is None:
        raise FitError("Ablations require a silhouette and ground-truth joints")
    truth = np.asarray(observations.truth_joints, dtype=np.float64)

    def _run_one(variant: str) -> Dict:
        try:
            if variant == RANDOM_BASELINE:
                return random_baseline(
                    scene, camera, observations, fit_config, render_config, init
                )
            config = variant_config(variant, render_config)
            result = fit_human(
                scene, camera, observations.silhouette, fit_config, config, init
            )
            predicted = joint_positions(result.scene.emitter).detach().numpy()
            return _row(variant, predicted, truth, result.iou)
        except (ArithmeticError, ValueError) as e:
            return _failed(variant, e)

    with Profile(f"Ran {len(variants)} ablation variants"):
        rows = list(execute(_run_one, variants, executor))
    return pd.DataFrame(rows, columns=COLUMNS)


def save_table(path, table: pd.DataFrame) -> None:
    table.to_csv(path, index=False, float_format="%.6g")


def parse_variants(names: Optional[Iterable[str]]) -> List[str]:
    """Expand a variant selection. None and "all" select every variant and
    the random baseline."""
    names = list(names or ())
    if not names or names == ["all"]:
        return list(VARIANTS) + [RANDOM_BASELINE]
    out: List[str] = []
    for name in names:
        if name != RANDOM_BASELINE and name not in VARIANTS:
            raise DomainError(
                f"Unknown ablation variant `{name}`. "
                f"Expected one of: {', '.join(VARIANTS + (RANDOM_BASELINE,))}"
            )
        out.append(name)
    return out


def winner(table: pd.DataFrame) -> Tuple[str, float]:
    """The optimized variant with the smallest mean 3D error."""
    fitted = table[(table.variant != RANDOM_BASELINE) & (table.status == "ok")]
    if fitted.empty:
        raise FitError("No ablation variant finished")
    best = fitted.loc[fitted.mean_normalized_3d.idxmin()]
    return str(best.variant), float(best.mean_normalized_3d)
