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
"""Unit tests for //thermoreflect:synthetic_ops."""
from pathlib import Path

import numpy as np
import pytest

from tests.test_main import main
from thermoreflect import synthetic_ops
from thermoreflect.exceptions import DomainError
from thermoreflect.scene_ops import parse_scene, serialize_scene

pytest_plugins = ["tests.plugins.scenes", "tests.plugins.tempdir"]


def test_preset_camera():
    camera = synthetic_ops.preset_camera(128)
    assert (camera.fx, camera.fy, camera.cx, camera.cy) == (192, 192, 64, 64)
    assert camera.width == camera.height == 128


@pytest.mark.parametrize("preset", ["plane", "panel"])
def test_presets_show_the_emitter(preset: str):
    synthetic = synthetic_ops.make_synthetic(preset, resolution=48, seed=0)
    assert synthetic.silhouette.shape == (48, 48)
    assert synthetic.silhouette.any()
    assert synthetic.masks[0].any()
    assert synthetic.truth_joints.shape == (17, 3)


def test_bowl_observations(bowl_synthetic):
    mask = bowl_synthetic.masks[0]
    depth = bowl_synthetic.depth
    assert depth.shape == mask.shape == (64, 64)
    # Depth is only measured on the mirror.
    assert not np.isfinite(depth[~mask]).any()
    holes = 1 - np.isfinite(depth[mask]).mean()
    assert holes == pytest.approx(synthetic_ops.HOLE_FRACTION, abs=0.1)
    assert bowl_synthetic.silhouette.any()
    # The reflection lies inside the mirror.
    assert not (bowl_synthetic.silhouette & ~mask).any()


def test_observations(bowl_synthetic):
    observations = bowl_synthetic.observations()
    assert observations.depth is bowl_synthetic.depth
    assert len(observations.masks) == 1
    np.testing.assert_array_equal(
        observations.silhouette.binarized(), bowl_synthetic.silhouette
    )
    assert observations.truth_joints.shape == (17, 3)


def test_box_observations(box_synthetic):
    assert box_synthetic.truth.objects[0].family == "rounded-box"
    assert box_synthetic.silhouette.any()


def test_noise_free_depth():
    synthetic = synthetic_ops.make_synthetic(
        "plane", resolution=32, seed=0, depth_noise=0.0, hole_fraction=0.0
    )
    assert np.isfinite(synthetic.depth).all()
    assert synthetic.depth[16, 16] == pytest.approx(0.8, abs=1e-9)


def test_seeded_generation():
    a = synthetic_ops.make_synthetic("plane", resolution=32, seed=1)
    b = synthetic_ops.make_synthetic("plane", resolution=32, seed=1)
    c = synthetic_ops.make_synthetic("plane", resolution=32, seed=2)
    np.testing.assert_array_equal(a.depth, b.depth)
    np.testing.assert_array_equal(a.truth_joints, b.truth_joints)
    assert serialize_scene(a.initial) == serialize_scene(b.initial)
    assert not np.array_equal(a.truth_joints, c.truth_joints)


def test_initial_scene_is_perturbed(bowl_synthetic):
    truth, initial = bowl_synthetic.truth, bowl_synthetic.initial
    assert initial.emitter.pose == (0.0,) * 48
    assert truth.emitter.pose != initial.emitter.pose
    offset = np.subtract(initial.objects[0].translation, truth.objects[0].translation)
    assert 0 < np.abs(offset).max() < 0.05
    assert initial.objects[0].init == truth.objects[0].init
    assert initial.seed == truth.seed == 0


def test_invalid_arguments():
    with pytest.raises(DomainError, match="Unknown preset `torus`"):
        synthetic_ops.make_synthetic("torus")
    with pytest.raises(DomainError, match="hole fraction"):
        synthetic_ops.make_synthetic("plane", resolution=32, hole_fraction=1.0)


def test_write_synthetic(bowl_synthetic, tempdir: Path):
    path = synthetic_ops.write_synthetic(tempdir / "bowl", bowl_synthetic)
    for name in ("scene.txt", "truth_scene.txt", "depth.pfm", "mask0.pgm", "silhouette.pgm"):
        assert (tempdir / "bowl" / name).is_file()
    assert (tempdir / "bowl" / "truth_joints.csv").read_text().startswith("joint,x,y,z\n")
    scene_file = parse_scene(path.read_text())
    assert scene_file.observations.masks == ("mask0.pgm",)


if __name__ == "__main__":
    main()
