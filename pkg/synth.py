# Synthetic registration problems (periodic Gaussian bumps) and seeded band-limited random fields.

from typing import Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError
from torus_fields import TENSOR_INDEX, MetricField, ScalarField, TorusGrid, VectorField

SYNTH_KINDS = ("translate-bump", "warp-bump", "two-blobs")

BUMP_WIDTH = 0.1  # fraction of L
SHIFT = 0.1  # fraction of L
WARP_AMPLITUDE = 0.05  # fraction of L
IMAGE_SHIFTS = range(-2, 3)


def periodic_gaussian(grid: TorusGrid, center: Sequence[float], width: float,
                      points: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Unit-peak Gaussian made periodic by summing its translates by m L, m in -2..2, per axis.
    Evaluated at the grid nodes or at arbitrary physical points of shape (dim, ...).
    """
    if points is None:
        points = grid.node_coordinates()
    L = grid.side_length
    values = np.ones(points.shape[1:])
    for axis in range(grid.dim):
        offset = points[axis] - center[axis]
        values = values * sum(np.exp(-(offset + m * L) ** 2 / (2 * width ** 2)) for m in IMAGE_SHIFTS)
    return values


def _center(grid: TorusGrid) -> np.ndarray:
    return np.full(grid.dim, 0.5 * grid.side_length)


def translate_bump(grid: TorusGrid, shift: float = SHIFT) -> Tuple[ScalarField, ScalarField]:
    """Template bump at the centre, target shifted by shift*L along the first axis."""
    L = grid.side_length
    center = _center(grid)
    moved = center.copy()
    moved[0] += shift * L
    width = BUMP_WIDTH * L
    return (ScalarField(grid, periodic_gaussian(grid, center, width)),
            ScalarField(grid, periodic_gaussian(grid, moved, width)))


def warp_bump(grid: TorusGrid, seed: int = 0, amplitude: float = WARP_AMPLITUDE) -> Tuple[ScalarField, ScalarField]:
    """Target is the template bump evaluated at x - amplitude*L*v(x) for a smooth random v with sup |v| = 1."""
    L = grid.side_length
    center = _center(grid)
    width = BUMP_WIDTH * L
    template = periodic_gaussian(grid, center, width)
    if amplitude == 0:
        return ScalarField(grid, template), ScalarField(grid, template)
    v = random_vector_field(grid, np.random.default_rng(seed), max_mode=3)
    v = v.components / v.sup_norm()
    warped_points = grid.node_coordinates() - amplitude * L * v
    return ScalarField(grid, template), ScalarField(grid, periodic_gaussian(grid, center, width, warped_points))


def two_blobs(grid: TorusGrid, seed: int = 0) -> Tuple[ScalarField, ScalarField]:
    """Two narrower bumps; each moves independently by up to 0.05 L per axis in the target."""
    L = grid.side_length
    rng = np.random.default_rng(seed)
    width = 0.08 * L
    centers = [np.array([0.3, 0.3][:grid.dim]) * L, np.array([0.7, 0.6][:grid.dim]) * L]
    template = sum(periodic_gaussian(grid, c, width) for c in centers)
    target = sum(periodic_gaussian(grid, c + rng.uniform(-0.05, 0.05, grid.dim) * L, width) for c in centers)
    return ScalarField(grid, template), ScalarField(grid, target)


def make_pair(kind: str, grid: TorusGrid, seed: int = 0) -> Tuple[ScalarField, ScalarField]:
    if kind == "translate-bump":
        return translate_bump(grid)
    if kind == "warp-bump":
        return warp_bump(grid, seed)
    if kind == "two-blobs":
        return two_blobs(grid, seed)
    raise ConfigError(f"Unknown synthetic problem '{kind}', expected one of {', '.join(SYNTH_KINDS)}")


def band_limited(grid: TorusGrid, rng: np.random.Generator, n_components: int,
                 max_mode: Optional[int] = None) -> np.ndarray:
    """
    White noise filtered to the integer modes with |m| < max_mode on every axis (default N/4),
    scaled to unit sup-norm. Shape (n_components, N...).
    """
    if max_mode is None:
        max_mode = grid.n_points // 4
    axes = tuple(range(-grid.dim, 0))
    noise = rng.standard_normal((n_components,) + grid.shape)
    spectrum = np.fft.rfftn(noise, axes=axes)
    mask = np.ones(spectrum.shape[1:], dtype=bool)
    for axis in range(grid.dim):
        if axis == grid.dim - 1:
            modes = np.arange(spectrum.shape[-1])
        else:
            modes = np.fft.fftfreq(grid.n_points, d=1.0 / grid.n_points)
        shape = [1] * grid.dim
        shape[axis] = modes.size
        mask &= (np.abs(modes) < max_mode).reshape(shape)
    values = np.fft.irfftn(spectrum * mask, s=grid.shape, axes=axes)
    return values / np.max(np.abs(values))


def random_scalar_field(grid: TorusGrid, rng: np.random.Generator, max_mode: Optional[int] = None) -> ScalarField:
    return ScalarField(grid, band_limited(grid, rng, 1, max_mode)[0])


def random_vector_field(grid: TorusGrid, rng: np.random.Generator, max_mode: Optional[int] = None) -> VectorField:
    return VectorField(grid, band_limited(grid, rng, grid.dim, max_mode))


def random_symmetric_field(grid: TorusGrid, rng: np.random.Generator, max_mode: Optional[int] = None) -> MetricField:
    """Arbitrary symmetric 2-tensor field, e.g. a metric momentum p."""
    return MetricField(grid, band_limited(grid, rng, grid.n_tensor, max_mode))


def random_metric_field(grid: TorusGrid, rng: np.random.Generator, max_mode: Optional[int] = None,
                        strength: float = 0.2) -> MetricField:
    """Identity plus strength times a symmetric perturbation; positive definite for strength < 1/dim."""
    components = strength * band_limited(grid, rng, grid.n_tensor, max_mode)
    for c, (i, j) in enumerate(TENSOR_INDEX[grid.dim]):
        if i == j:
            components[c] += 1.0
    return MetricField(grid, components)
