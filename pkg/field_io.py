# File formats: GFR1 binary field dumps, grayscale PGM images (through Pillow), and the
# rasterized deformation grid.

from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from errors import GridMismatch, ImageFormatError, InvalidField
from torus_fields import Field, ScalarField, TorusGrid, VectorField, field_components, interpolate

GFR_MAGIC = b"GFR1"
GFR_HEADER_BYTES = 4 + 3 * 4

PathLike = Union[str, Path]


def write_gfr(path: PathLike, field: Field) -> None:
    data = field_components(field)
    header = np.array([field.grid.dim, field.grid.n_points, data.shape[0]], dtype="<u4")
    with open(path, "wb") as f:
        f.write(GFR_MAGIC)
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_gfr(path: PathLike) -> Tuple[int, int, np.ndarray]:
    """Returns (dim, N, data) with data of shape (count, N, ..., N)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise ImageFormatError(f"Cannot read field dump {path}: {e}") from e
    if len(raw) < GFR_HEADER_BYTES or raw[:4] != GFR_MAGIC:
        raise ImageFormatError(f"{path} is not a GFR1 field dump")
    dim, n, count = (int(v) for v in np.frombuffer(raw[4:GFR_HEADER_BYTES], dtype="<u4"))
    if dim not in (1, 2) or n == 0 or count == 0:
        raise ImageFormatError(f"{path}: bad GFR1 header (dim={dim}, N={n}, count={count})")
    expected = count * n ** dim * 8
    if len(raw) - GFR_HEADER_BYTES != expected:
        raise ImageFormatError(f"{path}: expected {expected} data bytes, found {len(raw) - GFR_HEADER_BYTES}")
    data = np.frombuffer(raw[GFR_HEADER_BYTES:], dtype="<f8").reshape((count,) + (n,) * dim)
    return dim, n, data.astype(np.float64)


def read_displacement(path: PathLike, grid: TorusGrid) -> VectorField:
    dim, n, data = read_gfr(path)
    if dim != grid.dim or n != grid.n_points or data.shape[0] != grid.dim:
        raise GridMismatch(f"{path} holds a {data.shape[0]}-component field on a {n}^{dim} grid, "
                           f"expected a displacement on {grid.n_points}^{grid.dim}")
    return VectorField(grid, data)


def read_pgm(path: PathLike) -> np.ndarray:
    """Load a P2/P5 graymap as float64 values in [0, 1], shape (rows, columns)."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.format != "PPM" or img.mode not in ("L", "I", "I;16"):
                raise ImageFormatError(f"{path} is not a grayscale PGM (format {img.format}, mode {img.mode})")
            scale = 255.0 if img.mode == "L" else 65535.0
            values = np.asarray(img, dtype=np.float64) / scale
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise ImageFormatError(f"Cannot read PGM {path}: {e}") from e
    if values.ndim != 2 or not np.all(np.isfinite(values)):
        raise ImageFormatError(f"{path} did not decode to a 2-D graymap")
    return np.clip(values, 0.0, 1.0)


def write_pgm(path: PathLike, values: np.ndarray) -> None:
    """8-bit binary P5, maxval 255; values are clipped to [0, 1]."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise InvalidField(f"PGM output needs a 2-D array, got shape {values.shape}")
    pixels = np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")


def resample(values: np.ndarray, n_points: int) -> np.ndarray:
    """Periodic bilinear resampling of a 2-D image onto an n_points x n_points grid."""
    rows, cols = values.shape
    if (rows, cols) == (n_points, n_points):
        return values.copy()
    index = np.arange(n_points, dtype=np.float64)
    r, c = np.meshgrid(index * rows / n_points, index * cols / n_points, indexing="ij")
    return ndimage.map_coordinates(values, np.stack([r, c]), order=1, mode="grid-wrap")


def load_image(path: PathLike, grid: TorusGrid) -> ScalarField:
    if grid.dim != 2:
        raise InvalidField("PGM images can only be registered on a 2-D grid")
    return ScalarField(grid, resample(read_pgm(path), grid.n_points))


def render_deformation_grid(phi_displacement: VectorField, spacing: int = 8, upsample: int = 4,
                            order: int = 1) -> np.ndarray:
    """
    Raster of the images under phi of the grid lines x_a = spacing*k*h, drawn black on white at
    upsample times the grid resolution. Returns values in [0, 1].
    """
    grid = phi_displacement.grid
    if grid.dim != 2:
        raise InvalidField("Deformation grid raster needs a 2-D grid")
    size = upsample * grid.n_points
    L = grid.side_length
    raster = np.ones((size, size))
    along = np.arange(4 * size) * (L / (4 * size))
    for fixed in np.arange(0, grid.n_points, spacing) * grid.spacing:
        for axis in range(2):
            points = np.empty((2, along.size))
            points[axis] = fixed
            points[1 - axis] = along
            mapped = np.mod(points + interpolate(phi_displacement, points, order), L)
            pixels = np.minimum((mapped / L * size).astype(int), size - 1)
            raster[pixels[0], pixels[1]] = 0.0
    return raster
