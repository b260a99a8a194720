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
"""Evaluation metrics for reconstructed emitters."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from thermoreflect.exceptions import MetricError
from thermoreflect.geometry_ops import Camera, Se3Scale, project_points


@dataclass(frozen=True)
class MetricReport:
    """Per-joint errors and their mean, both divided by `normalization`."""

    per_joint: np.ndarray
    mean: float
    normalization: float
    label: str = ""
    iou: Optional[float] = None


def _check_pair(predicted: np.ndarray, truth: np.ndarray, dims: int) -> None:
    if predicted.shape != truth.shape or predicted.ndim != 2 or predicted.shape[1] != dims:
        raise MetricError(
            f"Expected two (J, {dims}) arrays of equal shape, got "
            f"{predicted.shape} and {truth.shape}"
        )
    if len(truth) < 2:
        raise MetricError(f"At least two joints are required, got {len(truth)}")


def keypoint_metric(predicted: np.ndarray, truth: np.ndarray, label: str = "") -> MetricReport:
    """Mean Euclidean joint error normalized by the truth's bounding-box diagonal.

    :param predicted: (J, 3) predicted joint positions.
    :param truth: (J, 3) ground-truth joint positions.
    :return: The report.
    :raises MetricError: If the shapes differ or the truth has zero extent.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_pair(predicted, truth, 3)
    diagonal = float(np.linalg.norm(truth.max(0) - truth.min(0)))
    if diagonal <= 0:
        raise MetricError("Ground-truth joints have zero extent")
    per_joint = np.linalg.norm(predicted - truth, axis=1) / diagonal
    return MetricReport(per_joint, float(per_joint.mean()), diagonal, label)


def keypoint_metric_2d(
    predicted: np.ndarray,
    truth: np.ndarray,
    camera: Camera,
    label: str = "",
) -> MetricReport:
    """Mean pixel error of projected joints, normalized by the truth's 2D
    bounding-box diagonal in the given camera.

    :raises MetricError: If a ground-truth joint lies behind the camera.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_pair(predicted, truth, 3)
    truth_uv, truth_front = project_points(camera, truth)
    predicted_uv, _ = project_points(camera, predicted)
    if not bool(truth_front.all()):
        raise MetricError("Ground-truth joints must lie in front of the evaluation camera")
    truth_uv = truth_uv.numpy()
    predicted_uv = predicted_uv.numpy()
    diagonal = float(np.linalg.norm(truth_uv.max(0) - truth_uv.min(0)))
    if diagonal <= 0:
        raise MetricError("Projected ground-truth joints have zero extent")
    per_joint = np.linalg.norm(predicted_uv - truth_uv, axis=1) / diagonal
    return MetricReport(per_joint, float(per_joint.mean()), diagonal, label)


def silhouette_iou(
    a: np.ndarray, b: np.ndarray, threshold: float = 0.5, sampled: Optional[np.ndarray] = None
) -> float:
    """Intersection over union of two images binarized at a threshold.

    Two empty silhouettes have an IoU of 1.
    """
    a = np.asarray(a, dtype=np.float64) >= threshold
    b = np.asarray(b, dtype=np.float64) >= threshold
    if a.shape != b.shape:
        raise MetricError(f"Image shapes differ: {a.shape} and {b.shape}")
    if sampled is not None:
        a = a[sampled]
        b = b[sampled]
    union = np.logical_or(a, b).sum()
    if not union:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def evaluation_camera(truth: np.ndarray, resolution: int = 128, distance: float = 3.0) -> Camera:
    """A camera looking along +z at a joint set from `distance` meters.

    The 2D metric is evaluated in this camera, which sees every joint from
    the front whatever the scene camera sees.
    """
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, 3)
    center = 0.5 * (truth.min(0) + truth.max(0))
    position = center - np.array([0.0, 0.0, distance + np.ptp(truth[:, 2])])
    return Camera(
        1.5 * resolution,
        1.5 * resolution,
        resolution / 2,
        resolution / 2,
        resolution,
        resolution,
        Se3Scale((1.0, 0.0, 0.0, 0.0), position),
    )
