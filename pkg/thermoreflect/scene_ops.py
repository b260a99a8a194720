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
"""Scene files declare a camera, mirror objects, an emitter, observations
and the settings of both stages.

The grammar is line oriented::

    # comment
    version = 1
    seed = 0

    [camera]
    fx = 192.0
    ...

    [[objects]]
    family = bowl
    latent = 0.2 0.19 0.1
    ...

Sections are `[camera]`, `[emitter]`, `[observations]`, `[render]` and
`[fit]`, each at most once, plus the repeatable `[[objects]]` and `[[joints]]`.
Values are numbers, booleans (`true`/`false`), words, or whitespace-separated
lists. Every key is checked against the section's key list, and every
default is written back out by serialize_scene.
"""
import dataclasses
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from thermoreflect.emitter_ops import EmitterModel, Joint, Skeleton, default_skeleton
from thermoreflect.exceptions import DomainError, SceneParseError
from thermoreflect.geometry_ops import DTYPE, Camera, Se3Scale
from thermoreflect.io_ops import load_joints, load_mask, load_pfm, load_sdf_grid
from thermoreflect.optimize_ops import FitConfig, Observations
from thermoreflect.render_ops import RenderConfig, SoftImage
from thermoreflect.scene import (
    EMITTER_INIT_LATENT_STD,
    EMITTER_INIT_RADIUS,
    EMITTER_INIT_SPREAD,
    OBJECT_INIT_LATENT_STD,
    OBJECT_INIT_RADIUS,
    OBJECT_INIT_SPREAD,
    InitBounds,
    Scene,
)
from thermoreflect.sdf_ops import FAMILIES, LATENT_SIZES, SdfGrid, SdfShape

SCENE_VERSION = 1

IDENTITY_ROTATION = (1.0, 0.0, 0.0, 0.0)

SINGLE_SECTIONS = ("camera", "emitter", "observations", "render", "fit")
REPEATED_SECTIONS = ("objects", "joints")

_REQUIRED = object()


@dataclass(frozen=True)
class ObjectDecl:
    """A mirror object as declared in a scene file.

    Grid objects name a grid file instead of declaring a latent.
    """

    family: str
    latent: Tuple[float, ...]
    translation: Tuple[float, float, float]
    rotation: Tuple[float, float, float, float] = IDENTITY_ROTATION
    scale: float = 1.0
    grid: Optional[str] = None
    init: Optional[InitBounds] = None


@dataclass(frozen=True)
class EmitterDecl:
    translation: Tuple[float, float, float]
    rotation: Tuple[float, float, float, float] = IDENTITY_ROTATION
    pose: Optional[Tuple[float, ...]] = None
    skeleton: Skeleton = dataclasses.field(default_factory=default_skeleton)
    init: Optional[InitBounds] = None


@dataclass(frozen=True)
class ObservationPaths:
    depth: Optional[str] = None
    masks: Tuple[str, ...] = ()
    silhouette: Optional[str] = None
    truth_joints: Optional[str] = None

    def paths(self) -> List[Tuple[str, str]]:
        """(key, path) pairs of every referenced file."""
        out = []
        if self.depth:
            out.append(("depth", self.depth))
        out += [("masks", m) for m in self.masks]
        if self.silhouette:
            out.append(("silhouette", self.silhouette))
        if self.truth_joints:
            out.append(("truth_joints", self.truth_joints))
        return out


@dataclass(frozen=True)
class SceneFile:
    """A parsed and validated scene file.

    Relative paths are resolved against base_dir, which is the directory of
    the scene file when it was loaded from disk.
    """

    camera: Camera
    objects: Tuple[ObjectDecl, ...]
    emitter: EmitterDecl
    observations: ObservationPaths = ObservationPaths()
    render: RenderConfig = RenderConfig()
    fit: FitConfig = FitConfig()
    seed: int = 0
    version: int = SCENE_VERSION
    base_dir: Optional[Path] = None

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p

    def with_seed(self, seed: int) -> "SceneFile":
        return replace(self, seed=seed, fit=replace(self.fit, seed=seed))


# Parsing.


@dataclass
class _Entry:
    value: str
    lineno: int


@dataclass
class _Block:
    name: str
    lineno: int
    entries: Dict[str, _Entry] = dataclasses.field(default_factory=dict)


# A comment starts at a # which begins a token, so paths may contain #.
_COMMENT = re.compile(r"(?:^|(?<=\s))#")


def _tokenize(text: str) -> Tuple[_Block, List[_Block]]:
    top = _Block("", 0)
    blocks: List[_Block] = []
    current = top
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _COMMENT.split(raw, maxsplit=1)[0].strip()
        if not line:
            continue
        if line.startswith("[[") and line.endswith("]]"):
            name = line[2:-2].strip()
            if name not in REPEATED_SECTIONS:
                raise SceneParseError(
                    f"Unknown repeated section `[[{name}]]`. "
                    f"Expected one of: {', '.join(REPEATED_SECTIONS)}",
                    lineno,
                )
            current = _Block(name, lineno)
            blocks.append(current)
        elif line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in SINGLE_SECTIONS:
                raise SceneParseError(
                    f"Unknown section `[{name}]`. "
                    f"Expected one of: {', '.join(SINGLE_SECTIONS)}",
                    lineno,
                )
            if name in seen:
                raise SceneParseError(f"Duplicate section `[{name}]`", lineno)
            seen.add(name)
            current = _Block(name, lineno)
            blocks.append(current)
        elif "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise SceneParseError("Missing key before `=`", lineno)
            if key in current.entries:
                raise SceneParseError(f"Duplicate key `{key}`", lineno)
            current.entries[key] = _Entry(value, lineno)
        else:
            raise SceneParseError(f"Expected `key = value` or a section header, got `{line}`", lineno)
    return top, blocks


def _where(block: _Block) -> str:
    if not block.name:
        return "the top level"
    if block.name in REPEATED_SECTIONS:
        return f"`[[{block.name}]]`"
    return f"`[{block.name}]`"


def _float(entry: _Entry, key: str) -> float:
    try:
        return float(entry.value)
    except ValueError as e:
        raise SceneParseError(f"Malformed number for `{key}`: `{entry.value}`", entry.lineno) from e


def _int(entry: _Entry, key: str) -> int:
    try:
        return int(entry.value)
    except ValueError as e:
        raise SceneParseError(
            f"Malformed integer for `{key}`: `{entry.value}`", entry.lineno
        ) from e


def _bool(entry: _Entry, key: str) -> bool:
    if entry.value not in ("true", "false"):
        raise SceneParseError(
            f"Expected `true` or `false` for `{key}`, got `{entry.value}`", entry.lineno
        )
    return entry.value == "true"


def _word(entry: _Entry, key: str) -> str:
    if not entry.value or len(entry.value.split()) != 1:
        raise SceneParseError(f"Expected a single word for `{key}`", entry.lineno)
    return entry.value


def _words(entry: _Entry, key: str) -> Tuple[str, ...]:
    return tuple(entry.value.split())


def _floats(count: Optional[int] = None) -> Callable[[_Entry, str], Tuple[float, ...]]:
    def convert(entry: _Entry, key: str) -> Tuple[float, ...]:
        values = []
        for token in entry.value.split():
            try:
                values.append(float(token))
            except ValueError as e:
                raise SceneParseError(
                    f"Malformed number in `{key}`: `{token}`", entry.lineno
                ) from e
        if count is not None and len(values) != count:
            raise SceneParseError(
                f"`{key}` takes {count} numbers, got {len(values)}", entry.lineno
            )
        return tuple(values)

    return convert


def _quaternion(entry: _Entry, key: str) -> Tuple[float, float, float, float]:
    q = np.array(_floats(4)(entry, key))
    norm = float(np.linalg.norm(q))
    if norm == 0 or not math.isfinite(norm):
        raise SceneParseError(f"`{key}` must be a non-zero quaternion (w x y z)", entry.lineno)
    # Unit quaternions are kept bit for bit so serialization is a fixed point.
    if abs(norm - 1) > 1e-12:
        q = q / norm
    return tuple(float(x) for x in q)


Schema = Dict[str, Tuple[Callable[[_Entry, str], Any], Any]]


def _read(block: _Block, schema: Schema) -> Dict[str, Any]:
    """Convert a block's entries by a schema, rejecting unknown keys."""
    for key, entry in block.entries.items():
        if key not in schema:
            raise SceneParseError(
                f"Unknown key `{key}` in {_where(block)}. "
                f"Expected one of: {', '.join(schema)}",
                entry.lineno,
            )
    values = {}
    for key, (convert, default) in schema.items():
        if key in block.entries:
            values[key] = convert(block.entries[key], key)
        elif default is _REQUIRED:
            raise SceneParseError(
                f"Missing required key `{key}` in {_where(block)}", block.lineno or None
            )
        else:
            values[key] = default
    return values


def _config_schema(config_type: type, exclude: Sequence[str] = ()) -> Schema:
    converters = {bool: _bool, int: _int, float: _float}
    return {
        f.name: (converters[f.type], f.default)
        for f in dataclasses.fields(config_type)
        if f.name not in exclude
    }


_RENDER_SCHEMA = _config_schema(RenderConfig)
_FIT_SCHEMA = _config_schema(FitConfig, exclude=("seed",))

_TOP_SCHEMA: Schema = {"version": (_int, _REQUIRED), "seed": (_int, 0)}

_CAMERA_SCHEMA: Schema = {
    "fx": (_float, _REQUIRED),
    "fy": (_float, _REQUIRED),
    "cx": (_float, _REQUIRED),
    "cy": (_float, _REQUIRED),
    "width": (_int, _REQUIRED),
    "height": (_int, _REQUIRED),
    "rotation": (_quaternion, _REQUIRED),
    "translation": (_floats(3), _REQUIRED),
}

_INIT_SCHEMA: Schema = {
    "init_translation_min": (_floats(3), None),
    "init_translation_max": (_floats(3), None),
    "init_rotation_spread": (_float, None),
    "init_latent_std": (_float, None),
}

_OBJECT_SCHEMA: Schema = {
    "family": (_word, _REQUIRED),
    "latent": (_floats(), None),
    "grid": (_word, None),
    "translation": (_floats(3), _REQUIRED),
    "rotation": (_quaternion, IDENTITY_ROTATION),
    "scale": (_float, 1.0),
    **_INIT_SCHEMA,
}

_EMITTER_SCHEMA: Schema = {
    "translation": (_floats(3), _REQUIRED),
    "rotation": (_quaternion, IDENTITY_ROTATION),
    "pose": (_floats(), None),
    **_INIT_SCHEMA,
}

_JOINT_SCHEMA: Schema = {
    "name": (_word, _REQUIRED),
    "parent": (_word, None),
    "offset": (_floats(3), _REQUIRED),
    "radius": (_float, _REQUIRED),
}

_OBSERVATIONS_SCHEMA: Schema = {
    "depth": (_word, None),
    "masks": (_words, ()),
    "silhouette": (_word, None),
    "truth_joints": (_word, None),
}


def _init_bounds(
    values: Dict[str, Any],
    translation: Sequence[float],
    radius: float,
    spread: float,
    latent_std: float,
    lineno: int,
) -> InitBounds:
    t = np.asarray(translation, dtype=np.float64)
    lo = values["init_translation_min"]
    hi = values["init_translation_max"]
    try:
        return InitBounds(
            tuple(t - radius) if lo is None else lo,
            tuple(t + radius) if hi is None else hi,
            spread if values["init_rotation_spread"] is None else values["init_rotation_spread"],
            latent_std if values["init_latent_std"] is None else values["init_latent_std"],
        )
    except DomainError as e:
        raise SceneParseError(str(e), lineno) from e


def _parse_object(block: _Block) -> ObjectDecl:
    values = _read(block, _OBJECT_SCHEMA)
    family = values["family"]
    lineno = block.entries["family"].lineno
    if family not in FAMILIES:
        raise SceneParseError(
            f"Unsupported SDF family `{family}`. Supported families: {', '.join(FAMILIES)}",
            lineno,
        )
    if family == "grid":
        if values["grid"] is None:
            raise SceneParseError("Grid objects require a `grid` file", block.lineno)
        if values["latent"] is not None:
            raise SceneParseError("Grid objects take their latent from the grid file", block.lineno)
        latent: Tuple[float, ...] = ()
    else:
        if values["grid"] is not None:
            raise SceneParseError(f"Family `{family}` does not take a `grid` file", block.lineno)
        latent = values["latent"]
        if latent is None:
            if LATENT_SIZES[family]:
                raise SceneParseError(
                    f"Missing required key `latent` in {_where(block)}", block.lineno
                )
            latent = ()
    if not values["scale"] > 0:
        raise SceneParseError("`scale` must be positive", block.entries["scale"].lineno)
    decl = ObjectDecl(
        family,
        tuple(latent),
        values["translation"],
        values["rotation"],
        values["scale"],
        values["grid"],
        _init_bounds(
            values,
            values["translation"],
            OBJECT_INIT_RADIUS,
            OBJECT_INIT_SPREAD,
            OBJECT_INIT_LATENT_STD,
            block.lineno,
        ),
    )
    if family != "grid":
        try:
            _shape(decl)
        except DomainError as e:
            raise SceneParseError(str(e), block.lineno) from e
    return decl


def _parse_skeleton(blocks: Sequence[_Block]) -> Skeleton:
    if not blocks:
        return default_skeleton()
    joints, names = [], {}
    for block in blocks:
        values = _read(block, _JOINT_SCHEMA)
        parent = values["parent"]
        if parent is None:
            index = -1
        elif parent not in names:
            raise SceneParseError(
                f"Joint `{values['name']}` names unknown or later parent `{parent}`",
                block.entries["parent"].lineno,
            )
        else:
            index = names[parent]
        names[values["name"]] = len(joints)
        joints.append(Joint(values["name"], index, values["offset"], values["radius"]))
    try:
        return Skeleton(tuple(joints))
    except DomainError as e:
        raise SceneParseError(str(e), blocks[0].lineno) from e


def _parse_emitter(block: _Block, skeleton: Skeleton) -> EmitterDecl:
    values = _read(block, _EMITTER_SCHEMA)
    pose = values["pose"]
    if pose is None:
        pose = (0.0,) * skeleton.latent_size
    decl = EmitterDecl(
        values["translation"],
        values["rotation"],
        tuple(pose),
        skeleton,
        _init_bounds(
            values,
            values["translation"],
            EMITTER_INIT_RADIUS,
            EMITTER_INIT_SPREAD,
            EMITTER_INIT_LATENT_STD,
            block.lineno,
        ),
    )
    try:
        _emitter(decl)
    except DomainError as e:
        raise SceneParseError(str(e), block.lineno) from e
    return decl


def _parse_config(block: Optional[_Block], config_type: type, schema: Schema, **extra):
    if block is None:
        return config_type(**extra)
    values = _read(block, schema)
    try:
        return config_type(**values, **extra)
    except DomainError as e:
        raise SceneParseError(str(e), block.lineno) from e


def parse_scene(text: str, base_dir: Optional[Union[str, Path]] = None) -> SceneFile:
    """Parse and validate a scene file.

    :param text: The scene file contents.
    :param base_dir: The directory relative paths are resolved against.
    :return: The scene file with every default filled in.
    :raises SceneParseError: If the text is malformed, a required section or
        key is missing, a key is unknown, or a value is invalid. The message
        carries the line number where one applies.
    """
    top, blocks = _tokenize(text)
    values = _read(top, _TOP_SCHEMA)
    if values["version"] != SCENE_VERSION:
        raise SceneParseError(
            f"Unsupported scene version {values['version']}, expected {SCENE_VERSION}",
            top.entries["version"].lineno,
        )
    sections = {b.name: b for b in blocks if b.name in SINGLE_SECTIONS}
    for required in ("camera", "emitter"):
        if required not in sections:
            raise SceneParseError(f"Missing required section `[{required}]`")
    object_blocks = [b for b in blocks if b.name == "objects"]
    if not object_blocks:
        raise SceneParseError("Missing required section `[[objects]]`")

    camera_block = sections["camera"]
    camera_values = _read(camera_block, _CAMERA_SCHEMA)
    try:
        camera = Camera(
            camera_values["fx"],
            camera_values["fy"],
            camera_values["cx"],
            camera_values["cy"],
            camera_values["width"],
            camera_values["height"],
            Se3Scale(camera_values["rotation"], camera_values["translation"]),
        )
    except DomainError as e:
        raise SceneParseError(str(e), camera_block.lineno) from e

    objects = tuple(_parse_object(b) for b in object_blocks)
    skeleton = _parse_skeleton([b for b in blocks if b.name == "joints"])
    emitter = _parse_emitter(sections["emitter"], skeleton)

    observations = ObservationPaths()
    if "observations" in sections:
        block = sections["observations"]
        observations = ObservationPaths(**_read(block, _OBSERVATIONS_SCHEMA))
        if observations.masks and len(observations.masks) != len(objects):
            raise SceneParseError(
                f"{len(observations.masks)} masks declared for {len(objects)} objects",
                block.entries["masks"].lineno,
            )

    render = _parse_config(sections.get("render"), RenderConfig, _RENDER_SCHEMA)
    fit = _parse_config(sections.get("fit"), FitConfig, _FIT_SCHEMA, seed=values["seed"])
    return SceneFile(
        camera,
        objects,
        emitter,
        observations,
        render,
        fit,
        values["seed"],
        values["version"],
        None if base_dir is None else Path(base_dir),
    )


def load_scene(path: Union[str, Path]) -> SceneFile:
    """Read a scene file and check that every file it references exists.

    Relative paths are resolved against the scene file's directory.

    :raises SceneParseError: If the file is invalid or a referenced file is
        missing.
    """
    path = Path(path)
    scene_file = parse_scene(path.read_text(encoding="utf-8"), base_dir=path.parent)
    referenced = list(scene_file.observations.paths())
    referenced += [("grid", o.grid) for o in scene_file.objects if o.grid]
    for key, relative in referenced:
        if not scene_file.resolve(relative).is_file():
            raise SceneParseError(f"File `{relative}` referenced by `{key}` does not exist")
    return scene_file


# Serialization.


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        return value
    return " ".join(_format(v) for v in value)


def _emit(lines: List[str], key: str, value: Any) -> None:
    if value is None:
        return
    if not isinstance(value, str) and not np.isscalar(value) and not len(value):
        return
    lines.append(f"{key} = {_format(value)}".rstrip())


def _emit_init(lines: List[str], init: InitBounds) -> None:
    _emit(lines, "init_translation_min", init.translation_min)
    _emit(lines, "init_translation_max", init.translation_max)
    _emit(lines, "init_rotation_spread", float(init.rotation_spread))
    _emit(lines, "init_latent_std", float(init.latent_std))


def serialize_scene(scene_file: SceneFile) -> str:
    """Render a scene file as text, with every default written out.

    serialize_scene(parse_scene(t)) is a fixed point of parse-then-serialize.
    """
    lines = [f"version = {scene_file.version}", f"seed = {scene_file.seed}", ""]
    camera = scene_file.camera
    lines.append("[camera]")
    for key in ("fx", "fy", "cx", "cy"):
        _emit(lines, key, float(getattr(camera, key)))
    _emit(lines, "width", camera.width)
    _emit(lines, "height", camera.height)
    _emit(lines, "rotation", camera.pose.rotation.tolist())
    _emit(lines, "translation", camera.pose.translation.tolist())

    for decl in scene_file.objects:
        lines += ["", "[[objects]]"]
        _emit(lines, "family", decl.family)
        _emit(lines, "latent", decl.latent)
        _emit(lines, "grid", decl.grid)
        _emit(lines, "translation", decl.translation)
        _emit(lines, "rotation", decl.rotation)
        _emit(lines, "scale", float(decl.scale))
        _emit_init(lines, decl.init)

    emitter = scene_file.emitter
    lines += ["", "[emitter]"]
    _emit(lines, "translation", emitter.translation)
    _emit(lines, "rotation", emitter.rotation)
    _emit(lines, "pose", emitter.pose)
    _emit_init(lines, emitter.init)
    names = emitter.skeleton.names
    for joint in emitter.skeleton.joints:
        lines += ["", "[[joints]]"]
        _emit(lines, "name", joint.name)
        if joint.parent >= 0:
            _emit(lines, "parent", names[joint.parent])
        _emit(lines, "offset", joint.offset)
        _emit(lines, "radius", joint.radius)

    observations = scene_file.observations
    if observations.paths():
        lines += ["", "[observations]"]
        _emit(lines, "depth", observations.depth)
        _emit(lines, "masks", observations.masks)
        _emit(lines, "silhouette", observations.silhouette)
        _emit(lines, "truth_joints", observations.truth_joints)

    for name, config, schema in (
        ("render", scene_file.render, _RENDER_SCHEMA),
        ("fit", scene_file.fit, _FIT_SCHEMA),
    ):
        lines += ["", f"[{name}]"]
        for key in schema:
            _emit(lines, key, getattr(config, key))
    return "\n".join(lines) + "\n"


def save_scene(path: Union[str, Path], scene_file: SceneFile) -> None:
    Path(path).write_text(serialize_scene(scene_file), encoding="utf-8")


# Conversion to and from the in-memory scene.


def _shape(decl: ObjectDecl, grid: Optional[SdfGrid] = None, values=None) -> SdfShape:
    placement = Se3Scale(decl.rotation, decl.translation, decl.scale)
    if decl.family == "grid":
        return SdfShape("grid", values, placement, grid)
    return SdfShape(decl.family, torch.tensor(decl.latent, dtype=DTYPE), placement)


def _emitter(decl: EmitterDecl) -> EmitterModel:
    return EmitterModel(
        decl.skeleton,
        torch.tensor(decl.pose, dtype=DTYPE),
        Se3Scale(decl.rotation, decl.translation),
    )


def build_scene(scene_file: SceneFile) -> Scene:
    """Instantiate the declared objects and emitter, loading grid files."""
    objects = []
    for decl in scene_file.objects:
        if decl.family == "grid":
            grid, values = load_sdf_grid(scene_file.resolve(decl.grid))
            objects.append(_shape(decl, grid, values))
        else:
            objects.append(_shape(decl))
    return Scene(tuple(objects), _emitter(scene_file.emitter))


def object_inits(scene_file: SceneFile) -> List[InitBounds]:
    return [decl.init for decl in scene_file.objects]


def _check_image(image: np.ndarray, camera: Camera, key: str) -> np.ndarray:
    if image.shape != (camera.height, camera.width):
        raise SceneParseError(
            f"`{key}` image is {image.shape[1]}x{image.shape[0]}, "
            f"the camera is {camera.width}x{camera.height}"
        )
    return image


def load_observations(scene_file: SceneFile) -> Observations:
    """Read the declared observation files.

    :raises SceneParseError: If an image does not match the camera.
    """
    paths = scene_file.observations
    camera = scene_file.camera
    depth = masks = silhouette = truth = None
    if paths.depth:
        depth = _check_image(load_pfm(scene_file.resolve(paths.depth)), camera, "depth")
    masks = tuple(
        _check_image(load_mask(scene_file.resolve(m)), camera, "masks") for m in paths.masks
    )
    if paths.silhouette:
        image = _check_image(
            load_mask(scene_file.resolve(paths.silhouette)), camera, "silhouette"
        )
        silhouette = SoftImage(torch.from_numpy(image.astype(np.float64)))
    if paths.truth_joints:
        truth = load_joints(
            scene_file.resolve(paths.truth_joints), scene_file.emitter.skeleton.names
        )
    return Observations(depth, masks, silhouette, truth)


def _floats_of(tensor: torch.Tensor) -> Tuple[float, ...]:
    return tuple(float(x) for x in tensor.detach().reshape(-1).tolist())


def update_scene_file(
    scene_file: SceneFile, scene: Scene, grids: Optional[Dict[int, str]] = None
) -> SceneFile:
    """Write fitted scene state back into a scene file.

    Initialization bounds are kept. Grid objects keep their grid file unless
    `grids` maps their index to a new one.
    """
    grids = grids or {}
    objects = []
    for index, (decl, shape) in enumerate(zip(scene_file.objects, scene.objects)):
        placement = shape.placement
        objects.append(
            replace(
                decl,
                latent=decl.latent if decl.family == "grid" else _floats_of(shape.latent),
                translation=_floats_of(placement.translation),
                rotation=_floats_of(placement.rotation),
                scale=float(placement.scale),
                grid=grids.get(index, decl.grid),
            )
        )
    model = scene.emitter
    emitter = replace(
        scene_file.emitter,
        translation=_floats_of(model.placement.translation),
        rotation=_floats_of(model.placement.rotation),
        pose=_floats_of(model.pose_latent),
        skeleton=model.skeleton,
    )
    return replace(scene_file, objects=tuple(objects), emitter=emitter)


def scene_file_for(
    scene: Scene,
    camera: Camera,
    observations: ObservationPaths = ObservationPaths(),
    render: RenderConfig = RenderConfig(),
    fit: FitConfig = FitConfig(),
    seed: int = 0,
    inits: Optional[Sequence[InitBounds]] = None,
    emitter_init: Optional[InitBounds] = None,
) -> SceneFile:
    """Describe an in-memory scene as a scene file with default restart bounds.

    Grid objects are not supported.
    """
    objects = []
    for index, shape in enumerate(scene.objects):
        if shape.family == "grid":
            raise DomainError("Grid objects must be declared with a grid file")
        placement = shape.placement
        translation = _floats_of(placement.translation)
        init = inits[index] if inits is not None else _init_bounds(
            dict.fromkeys(_INIT_SCHEMA),
            translation,
            OBJECT_INIT_RADIUS,
            OBJECT_INIT_SPREAD,
            OBJECT_INIT_LATENT_STD,
            0,
        )
        objects.append(
            ObjectDecl(
                shape.family,
                _floats_of(shape.latent),
                translation,
                _floats_of(placement.rotation),
                float(placement.scale),
                None,
                init,
            )
        )
    model = scene.emitter
    translation = _floats_of(model.placement.translation)
    if emitter_init is None:
        emitter_init = _init_bounds(
            dict.fromkeys(_INIT_SCHEMA),
            translation,
            EMITTER_INIT_RADIUS,
            EMITTER_INIT_SPREAD,
            EMITTER_INIT_LATENT_STD,
            0,
        )
    emitter = EmitterDecl(
        translation,
        _floats_of(model.placement.rotation),
        _floats_of(model.pose_latent),
        model.skeleton,
        emitter_init,
    )
    return SceneFile(
        camera, tuple(objects), emitter, observations, render, replace(fit, seed=seed), seed
    )
