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
"""Unit tests for //thermoreflect:ablation_ops."""
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import torch

from tests.test_main import main
from thermoreflect import ablation_ops
from thermoreflect.exceptions import DomainError, FitError
from thermoreflect.optimize_ops import FitConfig, Observations
from thermoreflect.render_ops import RenderConfig, SoftImage
from thermoreflect.scene_ops import build_scene
from thermoreflect.synthetic_ops import make_synthetic

pytest_plugins = ["tests.plugins.tempdir"]

FAST_FIT = FitConfig(max_iterations=2, human_restarts=1)
FAST_RENDER = RenderConfig(ray_budget=64)


@pytest.fixture(scope="module")
def plane_problem():
    synthetic = make_synthetic("plane", resolution=32, seed=0)
    scene = build_scene(synthetic.initial)
    return scene, synthetic.initial.camera, synthetic.observations()


def test_variant_configs():
    config = RenderConfig()
    assert ablation_ops.variant_config("full", config) is config
    assert not ablation_ops.variant_config("no-edge-sampling", config).edge_sampling
    assert ablation_ops.variant_config("sphere-steps-1", config).sphere_steps == 1
    assert not ablation_ops.variant_config("no-smoothing", config).smoothing
    with pytest.raises(DomainError, match="Unknown ablation variant `fast`"):
        ablation_ops.variant_config("fast", config)


def test_parse_variants():
    everything = list(ablation_ops.VARIANTS) + ["random"]
    assert ablation_ops.parse_variants(None) == everything
    assert ablation_ops.parse_variants(["all"]) == everything
    assert ablation_ops.parse_variants(["no-smoothing", "random"]) == ["no-smoothing", "random"]
    with pytest.raises(DomainError, match="Expected one of: full"):
        ablation_ops.parse_variants(["fast"])


def test_winner():
    table = pd.DataFrame(
        [
            {"variant": "full", "mean_normalized_3d": 0.2, "status": "ok"},
            {"variant": "no-smoothing", "mean_normalized_3d": 0.1, "status": "ok"},
            {"variant": "sphere-steps-1", "mean_normalized_3d": float("nan"), "status": "failed: x"},
            {"variant": "random", "mean_normalized_3d": 0.05, "status": "ok"},
        ]
    )
    assert ablation_ops.winner(table) == ("no-smoothing", 0.1)
    with pytest.raises(FitError, match="No ablation variant finished"):
        ablation_ops.winner(table[table.variant == "random"])


def test_random_baseline_is_seeded(plane_problem):
    scene, camera, observations = plane_problem
    a = ablation_ops.random_baseline(scene, camera, observations, FAST_FIT, FAST_RENDER, draws=3)
    b = ablation_ops.random_baseline(scene, camera, observations, FAST_FIT, FAST_RENDER, draws=3)
    assert a == b
    assert a["variant"] == "random"
    assert a["mean_normalized_3d"] > 0
    assert 0 <= a["silhouette_iou"] <= 1


def test_ablate_run_table(plane_problem, tempdir: Path):
    scene, camera, observations = plane_problem
    table = ablation_ops.ablate_run(
        scene,
        camera,
        observations,
        ["full", "no-smoothing", "full", "random"],
        FAST_FIT,
        FAST_RENDER,
    )
    assert list(table.columns) == ablation_ops.COLUMNS
    assert table.variant.tolist() == ["full", "no-smoothing", "random"]
    assert (table.status == "ok").all()
    assert np.isfinite(table.mean_normalized_3d).all()
    ablation_ops.save_table(tempdir / "ablation.csv", table)
    assert pd.read_csv(tempdir / "ablation.csv").variant.tolist() == table.variant.tolist()


def test_ablate_run_requires_ground_truth(plane_problem):
    scene, camera, observations = plane_problem
    with pytest.raises(FitError, match="ground-truth joints"):
        ablation_ops.ablate_run(
            scene, camera, Observations(silhouette=observations.silhouette), ["full"]
        )
    with pytest.raises(DomainError):
        ablation_ops.ablate_run(scene, camera, observations, ["fast"])


def test_failed_variant_is_reported(plane_problem):
    scene, camera, observations = plane_problem
    blank = Observations(
        silhouette=SoftImage(torch.zeros(32, 32, dtype=torch.float64)),
        truth_joints=observations.truth_joints,
    )
    table = ablation_ops.ablate_run(scene, camera, blank, ["full"], FAST_FIT, FAST_RENDER)
    assert table.status[0].startswith("failed: ")
    assert np.isnan(table.mean_normalized_3d[0])


if __name__ == "__main__":
    main()
