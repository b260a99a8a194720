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
"""thermoreflect reconstructs a person from their reflection in everyday
mirror-like objects.

Long-wave infrared light reflects specularly off many surfaces which look
matte in visible light, so a thermal camera sees people mirrored in bowls,
panels and doors. The API is divided into geometry, signed distance,
emitter, rendering, optimization, and file operations, all available under
the :code:`thermoreflect` namespace. Inference runs in two stages: the mirror
objects are fit to a depth map and masks, then the person is fit to the
reflection silhouette through a differentiable renderer.
"""
from thermoreflect.ablation_ops import VARIANTS, ablate_run, random_baseline
from thermoreflect.emitter_ops import (
    EmitterModel,
    Joint,
    Skeleton,
    build_emitter_mesh,
    capsule_counts,
    default_skeleton,
    forward_kinematics,
    joint_positions,
    pose_prior,
    project_pose_latent,
    subtree,
)
from thermoreflect.exceptions import (
    DomainError,
    FitError,
    GradcheckError,
    ImageFormatError,
    MetricError,
    OptimizationError,
    SceneParseError,
)
from thermoreflect.geometry_ops import (
    Camera,
    Ray,
    Se3Scale,
    TriMesh,
    camera_ray,
    camera_rays,
    concatenate_meshes,
    mirror_points,
    project_points,
    ray_triangle_distance,
    ray_triangle_distance_matrix,
    ray_triangle_intersect,
    ray_triangle_intersect_matrix,
    se3_apply,
)
from thermoreflect.gradcheck_ops import GradReport, gradcheck
from thermoreflect.io_ops import (
    load_joints,
    load_mask,
    load_obj,
    load_pfm,
    load_pgm,
    load_sdf_grid,
    save_joints,
    save_obj,
    save_pfm,
    save_pgm,
    save_sdf_grid,
    sdf_grid_from_bytes,
    sdf_grid_to_bytes,
)
from thermoreflect.metric_ops import (
    MetricReport,
    keypoint_metric,
    keypoint_metric_2d,
    silhouette_iou,
)
from thermoreflect.optimize_ops import (
    AdamState,
    FitConfig,
    FitResult,
    Observations,
    adam_step,
    fit_human,
    fit_object,
    fit_objects,
    loss_object,
    loss_silhouette,
)
from thermoreflect.params import ParamVector
from thermoreflect.render_ops import (
    MirrorHits,
    RenderConfig,
    SoftImage,
    aggregate_occupancy,
    edge_sample_rays,
    reflect,
    render_depth_mask,
    render_reflection,
    render_virtual_image,
    smoothed_normal,
    soft_influence,
    trace_mirror,
)
from thermoreflect.scene import InitBounds, Scene, scene_sdf
from thermoreflect.scene_ops import (
    SceneFile,
    build_scene,
    load_observations,
    load_scene,
    parse_scene,
    save_scene,
    serialize_scene,
)
from thermoreflect.sdf_ops import (
    FAMILIES,
    SdfGrid,
    SdfHit,
    SdfShape,
    marching_cubes,
    normal_coherence,
    sdf_eval,
    sdf_gradient,
    sphere_trace,
)
from thermoreflect.synthetic_ops import PRESETS, make_synthetic, write_synthetic
from thermoreflect.version import THERMOREFLECT_VERSION

__version__ = THERMOREFLECT_VERSION
__copyright__ = "Copyright 2023 the thermoreflect authors"
__license__ = "Apache License, Version 2.0"

__all__ = [
    "ablate_run",
    "adam_step",
    "AdamState",
    "aggregate_occupancy",
    "build_emitter_mesh",
    "build_scene",
    "Camera",
    "camera_ray",
    "camera_rays",
    "capsule_counts",
    "concatenate_meshes",
    "default_skeleton",
    "DomainError",
    "edge_sample_rays",
    "EmitterModel",
    "FAMILIES",
    "fit_human",
    "fit_object",
    "fit_objects",
    "FitConfig",
    "FitError",
    "FitResult",
    "forward_kinematics",
    "gradcheck",
    "GradcheckError",
    "GradReport",
    "ImageFormatError",
    "InitBounds",
    "Joint",
    "joint_positions",
    "keypoint_metric",
    "keypoint_metric_2d",
    "load_joints",
    "load_mask",
    "load_obj",
    "load_observations",
    "load_pfm",
    "load_pgm",
    "load_scene",
    "load_sdf_grid",
    "loss_object",
    "loss_silhouette",
    "make_synthetic",
    "marching_cubes",
    "MetricError",
    "MetricReport",
    "mirror_points",
    "MirrorHits",
    "normal_coherence",
    "Observations",
    "OptimizationError",
    "ParamVector",
    "parse_scene",
    "pose_prior",
    "PRESETS",
    "project_points",
    "project_pose_latent",
    "random_baseline",
    "Ray",
    "ray_triangle_distance",
    "ray_triangle_distance_matrix",
    "ray_triangle_intersect",
    "ray_triangle_intersect_matrix",
    "reflect",
    "render_depth_mask",
    "render_reflection",
    "render_virtual_image",
    "RenderConfig",
    "save_joints",
    "save_obj",
    "save_pfm",
    "save_pgm",
    "save_scene",
    "save_sdf_grid",
    "sdf_grid_from_bytes",
    "sdf_grid_to_bytes",
    "Scene",
    "scene_sdf",
    "SceneFile",
    "SceneParseError",
    "sdf_eval",
    "sdf_gradient",
    "SdfGrid",
    "SdfHit",
    "SdfShape",
    "se3_apply",
    "Se3Scale",
    "serialize_scene",
    "silhouette_iou",
    "Skeleton",
    "smoothed_normal",
    "soft_influence",
    "SoftImage",
    "sphere_trace",
    "subtree",
    "THERMOREFLECT_VERSION",
    "trace_mirror",
    "TriMesh",
    "VARIANTS",
    "write_synthetic",
]
