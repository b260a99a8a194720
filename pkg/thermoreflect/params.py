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
"""A flat, named parameter vector over the optimizable parts of a scene.

Segments are named `object<i>.translation`, `object<i>.rotation`,
`object<i>.scale`, `object<i>.latent`, `emitter.translation`,
`emitter.rotation`, and `emitter.latent`. Rotation segments are axis-angle
increments composed onto the scene's current rotation.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import torch

from thermoreflect.emitter_ops import project_pose_latent
from thermoreflect.exceptions import DomainError
from thermoreflect.geometry_ops import (
    DTYPE,
    Se3Scale,
    as_tensor,
    quaternion_from_axis_angle,
    quaternion_multiply,
)
from thermoreflect.scene import Scene
from thermoreflect.sdf_ops import project_latent

MIN_SCALE = 1e-3


@dataclass(frozen=True)
class Segment:
    name: str
    start: int
    length: int

    @property
    def stop(self) -> int:
        return self.start + self.length


class ParamVector:
    """Named segments over one flat float64 tensor."""

    def __init__(self, layout: Sequence[Tuple[str, int]], values: Optional[torch.Tensor] = None):
        segments: List[Segment] = []
        start = 0
        for name, length in layout:
            if length < 0:
                raise DomainError(f"Segment `{name}` has negative length")
            segments.append(Segment(name, start, length))
            start += length
        names = [s.name for s in segments]
        if len(set(names)) != len(names):
            raise DomainError("Segment names must be unique")
        if values is None:
            values = torch.zeros(start, dtype=DTYPE)
        values = as_tensor(values).reshape(-1)
        if len(values) != start:
            raise DomainError(
                f"Parameter layout has {start} coordinates, got {len(values)} values"
            )
        self._segments = tuple(segments)
        self._index: Dict[str, Segment] = {s.name: s for s in segments}
        self.values = values

    @property
    def segments(self) -> Tuple[Segment, ...]:
        return self._segments

    @property
    def names(self) -> List[str]:
        return [s.name for s in self._segments]

    @property
    def layout(self) -> List[Tuple[str, int]]:
        return [(s.name, s.length) for s in self._segments]

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> torch.Tensor:
        try:
            segment = self._index[name]
        except KeyError as e:
            raise DomainError(f"Unknown parameter segment `{name}`") from e
        return self.values[segment.start : segment.stop]

    def with_values(self, values: torch.Tensor) -> "ParamVector":
        return ParamVector(self.layout, values)

    def coordinate_name(self, index: int) -> str:
        for segment in self._segments:
            if segment.start <= index < segment.stop:
                return f"{segment.name}[{index - segment.start}]"
        raise IndexError(index)

    def segment_of(self, index: int) -> str:
        return self.coordinate_name(index).split("[")[0]

    def __repr__(self) -> str:
        return f"ParamVector({', '.join(f'{n}:{k}' for n, k in self.layout)})"

    @classmethod
    def for_scene(
        cls, scene: Scene, objects: Iterable[int] = (), emitter: bool = False
    ) -> "ParamVector":
        """Parameters initialized from a scene's current state.

        Rotation increments start at zero.
        """
        layout, values = [], []
        for i in objects:
            if not 0 <= i < scene.num_objects:
                raise DomainError(f"Scene has no object {i}")
            shape = scene.objects[i]
            latent = shape.latent.detach()
            layout += [
                (f"object{i}.translation", 3),
                (f"object{i}.rotation", 3),
                (f"object{i}.scale", 1),
                (f"object{i}.latent", len(latent)),
            ]
            values += [
                shape.placement.translation.detach(),
                torch.zeros(3, dtype=DTYPE),
                shape.placement.scale.detach().reshape(1),
                latent,
            ]
        if emitter:
            model = scene.emitter
            layout += [
                ("emitter.translation", 3),
                ("emitter.rotation", 3),
                ("emitter.latent", len(model.pose_latent)),
            ]
            values += [
                model.placement.translation.detach(),
                torch.zeros(3, dtype=DTYPE),
                model.pose_latent.detach(),
            ]
        if not layout:
            raise DomainError("No parameters selected")
        return cls(layout, torch.cat(values))

    def object_indices(self) -> List[int]:
        return sorted(
            {int(n.split(".")[0][len("object"):]) for n in self.names if n.startswith("object")}
        )

    def has_emitter(self) -> bool:
        return "emitter.translation" in self

    def apply(self, scene: Scene) -> Scene:
        """A scene with these parameter values substituted.

        The result is differentiable with respect to self.values.
        """
        objects = list(scene.objects)
        for i in self.object_indices():
            shape = objects[i]
            latent = self[f"object{i}.latent"]
            if len(latent) != len(shape.latent):
                raise DomainError(
                    f"Segment object{i}.latent has {len(latent)} values, "
                    f"object {i} declares {len(shape.latent)}"
                )
            rotation = quaternion_multiply(
                quaternion_from_axis_angle(self[f"object{i}.rotation"]),
                shape.placement.rotation,
            )
            rotation = rotation / torch.linalg.norm(rotation)
            placement = Se3Scale(
                rotation, self[f"object{i}.translation"], self[f"object{i}.scale"][0]
            )
            objects[i] = shape.with_params(latent=latent, placement=placement)
        result = scene.with_objects(objects)
        if self.has_emitter():
            model = scene.emitter
            rotation = quaternion_multiply(
                quaternion_from_axis_angle(self["emitter.rotation"]),
                model.placement.rotation,
            )
            rotation = rotation / torch.linalg.norm(rotation)
            placement = Se3Scale(rotation, self["emitter.translation"], 1.0)
            result = result.with_emitter(
                model.with_params(pose_latent=self["emitter.latent"], placement=placement)
            )
        return result

    def projected(self, scene: Scene) -> "ParamVector":
        """Values clamped into the valid domain of every segment."""
        values = self.values.detach().clone()
        out = self.with_values(values)
        with torch.no_grad():
            for i in self.object_indices():
                out[f"object{i}.scale"].clamp_(min=MIN_SCALE)
                latent = out[f"object{i}.latent"]
                latent.copy_(project_latent(scene.objects[i].family, latent))
            if self.has_emitter():
                latent = out["emitter.latent"]
                latent.copy_(project_pose_latent(latent))
        return out

    def fold_rotations(self, scene: Scene) -> Tuple[Scene, "ParamVector"]:
        """Compose the rotation increments into the scene.

        :return: The detached updated scene and parameters with zero rotation
            increments.
        """
        with torch.no_grad():
            updated = self.apply(scene).detach()
        params = ParamVector.for_scene(
            updated, objects=self.object_indices(), emitter=self.has_emitter()
        )
        return updated, params
