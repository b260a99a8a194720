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
"""File serialization ops for images, meshes, sampled SDFs and joints.

Images use binary PGM (P5, maxval 255) for masks and silhouettes and
grayscale little-endian PFM (Pf) for depth. Sampled SDFs use a one-line
`SDFGRID` text header followed by float32 node values. Meshes use the vertex
and face subset of Wavefront OBJ. Joint tables are CSV files.
"""
import io
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch

from thermoreflect.exceptions import DomainError, ImageFormatError
from thermoreflect.geometry_ops import DTYPE, TriMesh
from thermoreflect.sdf_ops import SdfGrid

# Depth holes are stored as this value in PFM files.
DEPTH_SENTINEL = 1e30

# PGM values at or above this are mask pixels.
MASK_THRESHOLD = 128

SDF_GRID_MAGIC = b"SDFGRID"

JOINT_COLUMNS = ["joint", "x", "y", "z"]

PathLike = Union[str, Path]


def _read_header(data: bytes, count: int, what: str) -> Tuple[List[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping # comments.

    :return: The tokens and the offset of the byte after the single
        whitespace character that terminates the last token.
    """
    tokens, position = [], 0
    while len(tokens) < count:
        while position < len(data) and data[position : position + 1].isspace():
            position += 1
        if position >= len(data):
            raise ImageFormatError(f"Truncated {what} header")
        if data[position : position + 1] == b"#":
            end = data.find(b"\n", position)
            if end < 0:
                raise ImageFormatError(f"Truncated {what} header")
            position = end + 1
            continue
        start = position
        while position < len(data) and not data[position : position + 1].isspace():
            position += 1
        tokens.append(data[start:position])
    if position >= len(data):
        raise ImageFormatError(f"Truncated {what} header")
    return tokens, position + 1


def _dimensions(tokens: Sequence[bytes], what: str) -> Tuple[int, int]:
    try:
        width, height = int(tokens[0]), int(tokens[1])
    except ValueError as e:
        raise ImageFormatError(f"Malformed {what} dimensions") from e
    if width < 1 or height < 1:
        raise ImageFormatError(f"Invalid {what} dimensions {width}x{height}")
    return width, height


def pgm_to_bytes(image: np.ndarray) -> bytes:
    """Encode an 8-bit grayscale image as binary PGM.

    Boolean images are written as 0 and 255.
    """
    image = np.asarray(image)
    if image.ndim != 2:
        raise ImageFormatError(f"PGM images must be two-dimensional, got shape {image.shape}")
    if image.dtype == bool:
        image = image.astype(np.uint8) * 255
    elif image.dtype != np.uint8:
        if image.min() < 0 or image.max() > 255:
            raise ImageFormatError("PGM values must lie in [0, 255]")
        image = image.astype(np.uint8)
    height, width = image.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + image.tobytes()


def pgm_from_bytes(data: bytes) -> np.ndarray:
    """Decode a binary PGM with maxval 255.

    :return: An (H, W) uint8 array.
    :raises ImageFormatError: If the magic, maxval, or payload is invalid.
    """
    if data[:2] != b"P5":
        raise ImageFormatError(f"Not a binary PGM file: bad magic {data[:2]!r}")
    tokens, offset = _read_header(data, 4, "PGM")
    width, height = _dimensions(tokens[1:3], "PGM")
    if tokens[3] != b"255":
        raise ImageFormatError(f"PGM maxval must be 255, got {tokens[3].decode(errors='replace')}")
    payload = data[offset : offset + width * height]
    if len(payload) != width * height:
        raise ImageFormatError(
            f"Truncated PGM payload: expected {width * height} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(path: PathLike, image: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(pgm_to_bytes(image))


def load_pgm(path: PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return pgm_from_bytes(f.read())


def load_mask(path: PathLike) -> np.ndarray:
    """Read a PGM as a boolean mask (pixels ≥ 128 are set)."""
    return load_pgm(path) >= MASK_THRESHOLD


def pfm_to_bytes(depth: np.ndarray) -> bytes:
    """Encode a depth map as little-endian grayscale PFM.

    Infinite depths are stored as the sentinel 1e30. Rows are written bottom
    to top.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ImageFormatError(f"PFM images must be two-dimensional, got shape {depth.shape}")
    if np.isnan(depth).any():
        raise ImageFormatError("PFM depth must not contain NaN")
    encoded = np.where(np.isinf(depth), DEPTH_SENTINEL, depth).astype("<f4")
    height, width = depth.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    return header + np.flipud(encoded).tobytes()


def pfm_from_bytes(data: bytes) -> np.ndarray:
    """Decode a little-endian grayscale PFM.

    :return: An (H, W) float64 depth map with +inf for sentinel values.
    :raises ImageFormatError: If the magic or payload is invalid, or the file
        is big-endian (positive scale).
    """
    if data[:2] != b"Pf":
        raise ImageFormatError(f"Not a grayscale PFM file: bad magic {data[:2]!r}")
    tokens, offset = _read_header(data, 4, "PFM")
    width, height = _dimensions(tokens[1:3], "PFM")
    try:
        scale = float(tokens[3])
    except ValueError as e:
        raise ImageFormatError("Malformed PFM scale") from e
    if scale >= 0:
        raise ImageFormatError(
            f"Big-endian PFM (scale {scale}) is not supported, expected a negative scale"
        )
    size = 4 * width * height
    payload = data[offset : offset + size]
    if len(payload) != size:
        raise ImageFormatError(f"Truncated PFM payload: expected {size} bytes, got {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    depth = np.flipud(values).astype(np.float64)
    depth[depth >= DEPTH_SENTINEL * (1 - 1e-6)] = np.inf
    return depth


def save_pfm(path: PathLike, depth: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(pfm_to_bytes(depth))


def load_pfm(path: PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return pfm_from_bytes(f.read())


def obj_to_text(mesh: TriMesh) -> str:
    """Encode a mesh as OBJ `v` and `f` records with 1-based indices."""
    vertices = mesh.vertices.detach().numpy()
    out = io.StringIO()
    for x, y, z in vertices:
        out.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
    for a, b, c in mesh.triangles.tolist():
        out.write(f"f {a + 1} {b + 1} {c + 1}\n")
    return out.getvalue()


def obj_from_text(text: str) -> TriMesh:
    """Decode the `v` and `f` records of an OBJ file.

    Face entries may carry `/`-separated texture and normal indices, which
    are ignored. Comments and other records are skipped.

    :raises ImageFormatError: If a record is malformed or an index is out of
        range.
    """
    vertices, faces = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        try:
            if fields[0] == "v":
                vertices.append([float(x) for x in fields[1:4]])
                if len(fields) < 4:
                    raise ValueError("vertex needs three coordinates")
            elif fields[0] == "f":
                if len(fields) != 4:
                    raise ValueError("only triangular faces are supported")
                faces.append([int(x.split("/")[0]) - 1 for x in fields[1:]])
        except ValueError as e:
            raise ImageFormatError(f"Malformed OBJ record on line {lineno}: {e}") from e
    triangles = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
        raise ImageFormatError("OBJ face index out of range")
    return TriMesh(
        torch.tensor(vertices, dtype=DTYPE).reshape(-1, 3),
        triangles,
    )


def save_obj(path: PathLike, mesh: TriMesh) -> None:
    with open(path, "w") as f:
        f.write(obj_to_text(mesh))


def load_obj(path: PathLike) -> TriMesh:
    with open(path) as f:
        return obj_from_text(f.read())


def sdf_grid_to_bytes(grid: SdfGrid, values: np.ndarray) -> bytes:
    """Encode a sampled SDF.

    The header line is `SDFGRID nx ny nz xmin ymin zmin xmax ymax zmax`,
    followed by nx·ny·nz little-endian float32 node values, x varying fastest.

    :param grid: The grid geometry.
    :param values: Node values, either flat with x varying fastest or of
        shape (nz, ny, nx).
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(values) != grid.size:
        raise ImageFormatError(
            f"Grid of resolution {tuple(grid.resolution)} takes {grid.size} values, "
            f"got {len(values)}"
        )
    fields = [str(int(n)) for n in grid.resolution]
    fields += [f"{float(x):.17g}" for x in (*grid.box_min, *grid.box_max)]
    header = f"{SDF_GRID_MAGIC.decode('ascii')} {' '.join(fields)}\n".encode("ascii")
    return header + values.astype("<f4").tobytes()


def sdf_grid_from_bytes(data: bytes) -> Tuple[SdfGrid, np.ndarray]:
    """Decode a sampled SDF.

    :return: The grid geometry and the flat float64 node values.
    :raises ImageFormatError: If the header is malformed, the grid geometry is
        invalid, or the payload is truncated.
    """
    if not data.startswith(SDF_GRID_MAGIC):
        raise ImageFormatError(f"Not an SDF grid file: bad magic {data[:7]!r}")
    tokens, offset = _read_header(data, 10, "SDF grid")
    if tokens[0] != SDF_GRID_MAGIC:
        raise ImageFormatError(f"Not an SDF grid file: bad magic {tokens[0]!r}")
    try:
        resolution = tuple(int(x) for x in tokens[1:4])
        bounds = [float(x) for x in tokens[4:10]]
    except ValueError as e:
        raise ImageFormatError(f"Malformed SDF grid header: {e}") from e
    try:
        grid = SdfGrid(resolution, tuple(bounds[:3]), tuple(bounds[3:]))
    except DomainError as e:
        raise ImageFormatError(f"Invalid SDF grid header: {e}") from e
    size = 4 * grid.size
    payload = data[offset : offset + size]
    if len(payload) != size:
        raise ImageFormatError(
            f"Truncated SDF grid payload: expected {size} bytes, got {len(payload)}"
        )
    return grid, np.frombuffer(payload, dtype="<f4").astype(np.float64)


def save_sdf_grid(path: PathLike, grid: SdfGrid, values: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(sdf_grid_to_bytes(grid, values))


def load_sdf_grid(path: PathLike) -> Tuple[SdfGrid, np.ndarray]:
    with open(path, "rb") as f:
        return sdf_grid_from_bytes(f.read())


def joints_frame(names: Sequence[str], positions: np.ndarray) -> pd.DataFrame:
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(names) != len(positions):
        raise ValueError(f"{len(names)} joint names for {len(positions)} positions")
    frame = pd.DataFrame(positions, columns=JOINT_COLUMNS[1:])
    frame.insert(0, "joint", list(names))
    return frame


def save_joints(path: PathLike, names: Sequence[str], positions: np.ndarray) -> None:
    joints_frame(names, positions).to_csv(path, index=False, float_format="%.9g")


def load_joints(path: PathLike, names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Read a joints CSV with header `joint,x,y,z`.

    :param names: Optional joint names. When given, rows are returned in
        this order and every name must be present.
    :return: A (J, 3) array.
    :raises ImageFormatError: If the header or a joint is missing.
    """
    frame = pd.read_csv(path)
    if list(frame.columns) != JOINT_COLUMNS:
        raise ImageFormatError(
            f"Joints file {path} must have header {','.join(JOINT_COLUMNS)}, "
            f"got {','.join(map(str, frame.columns))}"
        )
    if names is not None:
        frame = frame.set_index("joint")
        missing = [n for n in names if n not in frame.index]
        if missing:
            raise ImageFormatError(f"Joints file {path} lacks joints: {', '.join(missing)}")
        frame = frame.loc[list(names)].reset_index()
    return frame[JOINT_COLUMNS[1:]].to_numpy(dtype=np.float64)
