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
"""A scene: mirror objects and a single emitter."""
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import torch

from thermoreflect.emitter_ops import EmitterModel
from thermoreflect.exceptions import DomainError
from thermoreflect.geometry_ops import TensorLike, as_tensor
from thermoreflect.sdf_ops import SdfShape, sdf_eval


@dataclass(frozen=True)
class InitBounds:
    """The distribution optimizer restarts draw their starting values from.

    Translations are uniform in the box, rotations are the declared rotation
    composed with a random rotation of angle up to the spread (uniform on
    SO(3) for a spread of π or more), and latents are the declared latent plus
    Gaussian noise of the given standard deviation.
    """

    translation_min: Tuple[float, float, float]
    translation_max: Tuple[float, float, float]
    rotation_spread: float = float(np.pi)
    latent_std: float = 1.0

    def __post_init__(self):
        lo = tuple(float(x) for x in self.translation_min)
        hi = tuple(float(x) for x in self.translation_max)
        if len(lo) != 3 or len(hi) != 3 or any(a > b for a, b in zip(lo, hi)):
            raise DomainError(f"Invalid translation bounds {lo} to {hi}")
        if self.rotation_spread < 0 or self.latent_std < 0:
            raise DomainError("Rotation spread and latent std must be non-negative")
        object.__setattr__(self, "translation_min", lo)
        object.__setattr__(self, "translation_max", hi)

    @classmethod
    def around(cls, translation: TensorLike, radius: float = 0.1, **kwargs) -> "InitBounds":
        t = as_tensor(translation).detach().numpy()
        return cls(tuple(t - radius), tuple(t + radius), **kwargs)


# Default restart distributions, used when a scene file declares none.
OBJECT_INIT_RADIUS = 0.1
OBJECT_INIT_SPREAD = 0.5
OBJECT_INIT_LATENT_STD = 0.01
EMITTER_INIT_RADIUS = 0.3
EMITTER_INIT_SPREAD = float(np.pi)
EMITTER_INIT_LATENT_STD = 0.3


def default_object_init(shape: SdfShape) -> InitBounds:
    return InitBounds.around(
        shape.placement.translation,
        OBJECT_INIT_RADIUS,
        rotation_spread=OBJECT_INIT_SPREAD,
        latent_std=OBJECT_INIT_LATENT_STD,
    )


def default_emitter_init(model: EmitterModel) -> InitBounds:
    return InitBounds.around(
        model.placement.translation,
        EMITTER_INIT_RADIUS,
        rotation_spread=EMITTER_INIT_SPREAD,
        latent_std=EMITTER_INIT_LATENT_STD,
    )


@dataclass(frozen=True)
class Scene:
    objects: Tuple[SdfShape, ...]
    emitter: EmitterModel = field(default_factory=EmitterModel)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not self.objects:
            raise DomainError("A scene requires at least one mirror object")

    @property
    def num_objects(self) -> int:
        return len(self.objects)

    def with_objects(self, objects: Sequence[SdfShape]) -> "Scene":
        return replace(self, objects=tuple(objects))

    def with_object(self, index: int, shape: SdfShape) -> "Scene":
        objects = list(self.objects)
        objects[index] = shape
        return replace(self, objects=tuple(objects))

    def with_emitter(self, emitter: EmitterModel) -> "Scene":
        return replace(self, emitter=emitter)

    def detach(self) -> "Scene":
        return Scene(tuple(o.detach() for o in self.objects), self.emitter.detach())


def scene_sdf(
    scene: Scene, points: TensorLike, objects: Optional[Sequence[int]] = None
) -> Tuple[torch.Tensor, torch.Tensor]:
    """The union field of a scene's mirror objects.

    :return: A tuple of the minimum signed distance and the index of the
        object attaining it.
    """
    indices = range(scene.num_objects) if objects is None else objects
    p = as_tensor(points)
    values = torch.stack([sdf_eval(scene.objects[i], p) for i in indices], dim=-1)
    best, arg = values.min(-1)
    lookup = torch.tensor(list(indices), dtype=torch.long)
    return best, lookup[arg]


def scene_field(scene: Scene, objects: Optional[Sequence[int]] = None):
    """A callable mapping points to the union signed distance."""
    return lambda p: scene_sdf(scene, p, objects)[0]
