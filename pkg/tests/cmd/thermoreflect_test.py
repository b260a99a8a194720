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
"""End-to-end tests of the thermoreflect command line tool."""
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd

from tests.test_main import main
from thermoreflect.emitter_ops import EmitterModel
from thermoreflect.io_ops import load_joints, load_pfm, load_pgm
from thermoreflect.scene_ops import load_scene, save_scene

pytest_plugins = ["tests.plugins.tempdir"]

REPO_ROOT = Path(__file__).resolve().parents[2]


def thermoreflect(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "thermoreflect.bin.thermoreflect", *args],
        cwd=REPO_ROOT,
        capture_output=True,
        text=True,
        timeout=600,
    )


def synthetic(out: Path, preset: str = "plane") -> Path:
    """Generate a small synthetic scene and shorten its fit schedule."""
    process = thermoreflect(
        "make-synthetic", f"--preset={preset}", "--resolution=32", f"--out={out}"
    )
    assert process.returncode == 0, process.stderr
    for name in ("scene.txt", "truth_scene.txt"):
        path = out / name
        scene_file = load_scene(path)
        scene_file = replace(
            scene_file,
            fit=replace(
                scene_file.fit, max_iterations=2, object_restarts=1, human_restarts=1
            ),
            render=replace(scene_file.render, ray_budget=64),
        )
        save_scene(path, scene_file)
    return out / "scene.txt"


def test_missing_command():
    process = thermoreflect()
    assert process.returncode == 1
    assert "Missing command" in process.stderr


def test_unknown_command():
    process = thermoreflect("teleport")
    assert process.returncode == 1
    assert "teleport" in process.stderr


def test_version():
    process = thermoreflect("--version")
    assert process.returncode == 0
    assert process.stdout.startswith("thermoreflect version ")


def test_scene_is_required(tempdir: Path):
    process = thermoreflect("render", f"--out={tempdir}")
    assert process.returncode == 1
    assert "--scene is required" in process.stderr


def test_invalid_scene_file(tempdir: Path):
    path = tempdir / "scene.txt"
    path.write_text("version = 1\n[teapot]\n")
    process = thermoreflect("render", f"--scene={path}", f"--out={tempdir}")
    assert process.returncode == 1
    assert "line 2" in process.stderr


def test_make_synthetic(tempdir: Path):
    process = thermoreflect(
        "make-synthetic", "--preset=plane", "--resolution=32", f"--out={tempdir}"
    )
    assert process.returncode == 0, process.stderr
    assert Path(process.stdout.strip()) == tempdir / "scene.txt"
    for name in (
        "scene.txt",
        "truth_scene.txt",
        "depth.pfm",
        "mask0.pgm",
        "silhouette.pgm",
        "truth_joints.csv",
    ):
        assert (tempdir / name).is_file(), name


def test_render(tempdir: Path):
    scene = synthetic(tempdir / "synthetic")
    out = tempdir / "render"
    process = thermoreflect("render", f"--scene={scene}", f"--out={out}")
    assert process.returncode == 0, process.stderr
    assert load_pgm(out / "reflection.pgm").shape == (32, 32)
    assert load_pgm(out / "silhouette.pgm").shape == (32, 32)
    assert load_pfm(out / "depth.pfm").shape == (32, 32)
    assert (out / "mask0.pgm").is_file()
    assert not (out / "mask1.pgm").exists()


def test_export_mesh(tempdir: Path):
    scene = synthetic(tempdir / "synthetic", preset="bowl")
    out = tempdir / "meshes"
    process = thermoreflect(
        "export-mesh", f"--scene={scene}", f"--out={out}", "--mesh_resolution=16"
    )
    assert process.returncode == 0, process.stderr
    assert (out / "object0.obj").read_text().startswith("v ")
    assert (out / "emitter.obj").is_file()


def test_export_mesh_skips_planes(tempdir: Path):
    scene = synthetic(tempdir / "synthetic")
    out = tempdir / "meshes"
    process = thermoreflect("export-mesh", f"--scene={scene}", f"--out={out}")
    assert process.returncode == 0, process.stderr
    assert not (out / "object0.obj").exists()
    assert (out / "emitter.obj").is_file()


def test_fit_object_then_fit_human(tempdir: Path):
    scene = synthetic(tempdir / "synthetic")
    objects = tempdir / "objects"
    process = thermoreflect("fit-object", f"--scene={scene}", f"--out={objects}")
    assert process.returncode == 0, process.stderr
    assert "object0.translation = " in (objects / "fit_object0.txt").read_text()
    trace = pd.read_csv(objects / "fit_object0_trace.csv")
    assert list(trace.columns) == ["iteration", "total", "depth", "mask", "prior"]

    human = tempdir / "human"
    process = thermoreflect(
        "fit-human", f"--scene={objects / 'fitted_scene.txt'}", f"--out={human}"
    )
    assert process.returncode == 0, process.stderr
    joints = load_joints(human / "joints.csv")
    assert joints.shape == (len(EmitterModel().skeleton.names), 3)
    report = (human / "fit_human.txt").read_text()
    assert "mean normalized 3D joint error: " in report
    assert load_pgm(human / "reflection.pgm").shape == (32, 32)
    assert load_scene(human / "fitted_scene.txt").fit.max_iterations == 2


def test_gradcheck(tempdir: Path):
    scene = synthetic(tempdir / "synthetic")
    out = tempdir / "gradcheck"
    process = thermoreflect("gradcheck", f"--scene={scene}", f"--out={out}")
    assert process.returncode == 0, process.stdout + process.stderr
    table = (out / "gradcheck.txt").read_text()
    assert "emitter.translation" in table
    assert "PASS" in table


def test_ablate(tempdir: Path):
    synthetic(tempdir / "synthetic")
    out = tempdir / "ablate"
    process = thermoreflect(
        "ablate",
        f"--scene={tempdir / 'synthetic' / 'truth_scene.txt'}",
        f"--out={out}",
        "--variant=full",
        "--variant=random",
    )
    assert process.returncode == 0, process.stderr
    table = pd.read_csv(out / "ablation.csv")
    assert list(table["variant"]) == ["full", "random"]


def _files(directory: Path, suffixes=(".csv", ".pgm", ".pfm", ".obj", ".txt")):
    return {
        str(path.relative_to(directory)): path.read_bytes()
        for path in sorted(directory.rglob("*"))
        if path.suffix in suffixes
    }


def test_make_synthetic_is_reproducible(tempdir: Path):
    for name in ("a", "b"):
        process = thermoreflect(
            "make-synthetic",
            "--preset=bowl",
            "--resolution=32",
            "--seed=7",
            f"--out={tempdir / name}",
        )
        assert process.returncode == 0, process.stderr
    first = _files(tempdir / "a")
    assert "depth.pfm" in first and "silhouette.pgm" in first
    assert first == _files(tempdir / "b")


def test_render_and_export_mesh_are_reproducible(tempdir: Path):
    scene = synthetic(tempdir / "synthetic", preset="bowl")
    for name in ("a", "b"):
        process = thermoreflect("render", f"--scene={scene}", f"--out={tempdir / 'render' / name}")
        assert process.returncode == 0, process.stderr
        process = thermoreflect(
            "export-mesh",
            f"--scene={scene}",
            f"--out={tempdir / 'meshes' / name}",
            "--mesh_resolution=16",
        )
        assert process.returncode == 0, process.stderr
    for kind, expected in (("render", "reflection.pgm"), ("meshes", "object0.obj")):
        first = _files(tempdir / kind / "a")
        assert expected in first
        assert first == _files(tempdir / kind / "b")


def test_fit_object_is_reproducible(tempdir: Path):
    scene = synthetic(tempdir / "synthetic")
    for name in ("a", "b"):
        process = thermoreflect(
            "fit-object", f"--scene={scene}", f"--out={tempdir / name}", "--seed=3"
        )
        assert process.returncode == 0, process.stderr
    first = _files(tempdir / "a", suffixes=(".csv",))
    assert "fit_object0_trace.csv" in first
    assert first == _files(tempdir / "b", suffixes=(".csv",))


if __name__ == "__main__":
    main()
