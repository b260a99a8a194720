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
"""Benchmark for the reflection and depth renderers.

Renders a synthetic scene repeatedly and reports the runtime of each stage:
tracing the mirror, rendering the reflection of a ray budget of pixels with
and without the backward pass, and rendering the object depth and masks.
"""
import time
from typing import Callable, List

import numpy as np
import torch
from absl import app, flags

from thermoreflect.params import ParamVector
from thermoreflect.render_ops import (
    render_depth_mask,
    render_reflection,
    trace_mirror,
    uniform_sample_rays,
)
from thermoreflect.scene_ops import build_scene
from thermoreflect.synthetic_ops import PRESETS, make_synthetic

flags.DEFINE_float(
    "min_benchmark_time",
    30,
    "The minimum number of seconds to run each benchmark loop.",
)
flags.DEFINE_enum("preset", "bowl", sorted(PRESETS), "The synthetic scene to render.")
flags.DEFINE_integer("resolution", 128, "The image resolution.")
FLAGS = flags.FLAGS


def SummarizeFloats(floats, nplaces: int = 2, unit: str = "") -> str:
    """Summarize a sequence of floats."""
    arr = np.array(list(floats), dtype=np.float32)
    percs = " ".join(
        [
            f"{p}%={np.percentile(arr, p):.{nplaces}f}{unit}"
            for p in [0, 50, 95, 99, 100]
        ]
    )
    return (
        f"n={len(arr)}, mean={arr.mean():.{nplaces}f}{unit}, stdev={arr.std():.{nplaces}f}{unit}, "
        f"percentiles=[{percs}]"
    )


def Benchmark(name: str, fn: Callable[[], None]) -> None:
    runtimes: List[float] = []
    start_time = time.time()
    while time.time() < start_time + FLAGS.min_benchmark_time:
        run_start_time = time.time()
        fn()
        runtimes.append(time.time() - run_start_time)
    print(f"Runtimes for {name}:")
    print(SummarizeFloats(np.array(runtimes) * 1000, unit="ms"))


def main(argv):
    if len(argv) != 1:
        raise app.UsageError(f"Unrecognized arguments: {argv[1:]}")
    synthetic = make_synthetic(FLAGS.preset, FLAGS.resolution)
    scene_file = synthetic.truth
    scene, camera, config = build_scene(scene_file), scene_file.camera, scene_file.render
    rng = np.random.default_rng(0)
    pixels = uniform_sample_rays(camera, config.ray_budget, rng)
    params = ParamVector.for_scene(scene, emitter=True)
    with torch.no_grad():
        mirror = trace_mirror(scene, camera, config)

    def forward():
        with torch.no_grad():
            render_reflection(scene, camera, config, pixels=pixels, mirror=mirror)

    def forward_backward():
        values = params.values.clone().requires_grad_(True)
        state = params.with_values(values).apply(scene)
        image = render_reflection(state, camera, config, pixels=pixels, mirror=mirror)
        image.values.sum().backward()

    def trace():
        with torch.no_grad():
            trace_mirror(scene, camera, config)

    def depth_mask():
        with torch.no_grad():
            render_depth_mask(scene, camera, config)

    print(
        f"Preset `{FLAGS.preset}` at {camera.width}x{camera.height}, "
        f"{config.ray_budget} rays per reflection render"
    )
    Benchmark("trace_mirror (all pixels)", trace)
    Benchmark("render_reflection", forward)
    Benchmark("render_reflection with backward pass", forward_backward)
    Benchmark("render_depth_mask (all pixels)", depth_mask)


if __name__ == "__main__":
    app.run(main)
