# Periodic grids on the flat torus T^n (n = 1, 2) and the fields that live on them:
# scalar images, vector fields and symmetric 2-tensors, with FFT calculus and L2 pairings.

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy import ndimage

from errors import GridMismatch, InvalidField

# Upper-triangle storage order of a symmetric tensor, per dimension
TENSOR_INDEX = {
    1: [(0, 0)],
    2: [(0, 0), (0, 1), (1, 1)],
}


@dataclass(frozen=True)
class TorusGrid:
    """Square periodic grid [0, L)^dim with N nodes per axis and the flat metric g = identity."""

    dim: int
    n_points: int
    side_length: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidField(f"Grid dimension must be 1 or 2, got {self.dim}")
        n = self.n_points
        if n < 8 or n & (n - 1):
            raise InvalidField(f"n_points must be a power of two >= 8, got {n}")
        if not self.side_length > 0 or not np.isfinite(self.side_length):
            raise InvalidField(f"side_length must be positive, got {self.side_length}")
        object.__setattr__(self, "side_length", float(self.side_length))

    @property
    def spacing(self) -> float:
        return self.side_length / self.n_points

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n_points,) * self.dim

    @property
    def n_tensor(self) -> int:
        return len(TENSOR_INDEX[self.dim])

    def node_coordinates(self) -> np.ndarray:
        """Node positions, shape (dim, N, ..., N), axis a of the array is coordinate x_a."""
        axis = np.arange(self.n_points) * self.spacing
        return np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"))


def _frozen_array(values, expected_shape, what):
    array = np.array(values, dtype=np.float64)
    if array.shape != tuple(expected_shape):
        raise InvalidField(f"{what} has shape {array.shape}, expected {tuple(expected_shape)}")
    if not np.all(np.isfinite(array)):
        raise InvalidField(f"{what} contains non-finite values")
    array.setflags(write=False)
    return array


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatch(f"Fields live on different grids: {a.grid} vs {b.grid}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, self.grid.shape, "ScalarField"))

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _check_same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _check_same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, factor: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * float(factor))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: TorusGrid
    components: np.ndarray

    def __post_init__(self):
        expected = (self.grid.dim,) + self.grid.shape
        object.__setattr__(self, "components", _frozen_array(self.components, expected, "VectorField"))

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "VectorField":
        return cls(grid, np.zeros((grid.dim,) + grid.shape))

    @classmethod
    def constant(cls, grid: TorusGrid, vector) -> "VectorField":
        vector = np.asarray(vector, dtype=np.float64).reshape((grid.dim,) + (1,) * grid.dim)
        return cls(grid, np.broadcast_to(vector, (grid.dim,) + grid.shape))

    def sup_norm(self) -> float:
        """Largest pointwise Euclidean length."""
        return float(np.max(np.sqrt(np.sum(self.components ** 2, axis=0))))

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_same_grid(self, other)
        return VectorField(self.grid, self.components + other.components)

    def __sub__(self, other: "VectorField") -> "VectorField":
        _check_same_grid(self, other)
        return VectorField(self.grid, self.components - other.components)

    def __neg__(self) -> "VectorField":
        return VectorField(self.grid, -self.components)

    def __mul__(self, factor: float) -> "VectorField":
        return VectorField(self.grid, self.components * float(factor))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric 2-tensor field, upper triangle stored: (11,) for n=1, (11, 12, 22) for n=2."""

    grid: TorusGrid
    components: np.ndarray

    def __post_init__(self):
        expected = (self.grid.n_tensor,) + self.grid.shape
        object.__setattr__(self, "components", _frozen_array(self.components, expected, "MetricField"))

    @classmethod
    def identity(cls, grid: TorusGrid) -> "MetricField":
        components = np.zeros((grid.n_tensor,) + grid.shape)
        for c, (i, j) in enumerate(TENSOR_INDEX[grid.dim]):
            if i == j:
                components[c] = 1.0
        return cls(grid, components)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "MetricField":
        return cls(grid, np.zeros((grid.n_tensor,) + grid.shape))

    @classmethod
    def from_full(cls, grid: TorusGrid, full: np.ndarray) -> "MetricField":
        """Build from a (dim, dim, N...) array; the symmetric part is kept."""
        full = np.asarray(full, dtype=np.float64)
        components = [0.5 * (full[i, j] + full[j, i]) for i, j in TENSOR_INDEX[grid.dim]]
        return cls(grid, np.stack(components))

    def full(self) -> np.ndarray:
        """Expand to the (dim, dim, N...) array of all entries."""
        dim = self.grid.dim
        out = np.empty((dim, dim) + self.grid.shape)
        for c, (i, j) in enumerate(TENSOR_INDEX[dim]):
            out[i, j] = self.components[c]
            out[j, i] = self.components[c]
        return out

    def determinant(self) -> np.ndarray:
        t = self.components
        if self.grid.dim == 1:
            return t[0].copy()
        return t[0] * t[2] - t[1] ** 2

    def trace(self) -> np.ndarray:
        t = self.components
        if self.grid.dim == 1:
            return t[0].copy()
        return t[0] + t[2]

    def is_positive_definite(self) -> bool:
        return bool(np.all(self.determinant() > 0) and np.all(self.trace() > 0))

    def __add__(self, other: "MetricField") -> "MetricField":
        _check_same_grid(self, other)
        return MetricField(self.grid, self.components + other.components)

    def __sub__(self, other: "MetricField") -> "MetricField":
        _check_same_grid(self, other)
        return MetricField(self.grid, self.components - other.components)

    def __mul__(self, factor: float) -> "MetricField":
        return MetricField(self.grid, self.components * float(factor))

    __rmul__ = __mul__


Field = Union[ScalarField, VectorField, MetricField]


@lru_cache(maxsize=32)
def wavenumbers(grid: TorusGrid, zero_nyquist: bool = True) -> Tuple[np.ndarray, ...]:
    """
    Angular wavenumbers 2*pi*m/L per axis, shaped to broadcast against an rfftn spectrum
    (last axis is the half spectrum). With zero_nyquist the N/2 mode gets wavenumber 0,
    which makes the first-derivative operator skew-adjoint under the grid pairing.
    """
    n, h = grid.n_points, grid.spacing
    ks = []
    for axis in range(grid.dim):
        if axis == grid.dim - 1:
            k = 2 * np.pi * np.fft.rfftfreq(n, d=h)
            nyquist = -1
        else:
            k = 2 * np.pi * np.fft.fftfreq(n, d=h)
            nyquist = n // 2
        if zero_nyquist:
            k[nyquist] = 0.0
        shape = [1] * grid.dim
        shape[axis] = k.size
        k = k.reshape(shape)
        k.setflags(write=False)
        ks.append(k)
    return tuple(ks)


def squared_wavenumber(grid: TorusGrid) -> np.ndarray:
    """|kappa|^2 on the rfftn half spectrum, Nyquist modes included."""
    return sum(k ** 2 for k in wavenumbers(grid, False))


def _spatial_axes(grid: TorusGrid) -> Tuple[int, ...]:
    return tuple(range(-grid.dim, 0))


def partial_derivative(values: np.ndarray, grid: TorusGrid, axis: int) -> np.ndarray:
    """Fourier-collocation d/dx_axis over the trailing grid axes of a raw array."""
    if not np.all(np.isfinite(values)):
        raise InvalidField("Cannot differentiate a field with non-finite values")
    axes = _spatial_axes(grid)
    spectrum = np.fft.rfftn(values, axes=axes)
    spectrum *= 1j * wavenumbers(grid)[axis]
    return np.fft.irfftn(spectrum, s=grid.shape, axes=axes)


def spectral_laplacian(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    axes = _spatial_axes(grid)
    spectrum = np.fft.rfftn(values, axes=axes)
    spectrum *= -squared_wavenumber(grid)
    return np.fft.irfftn(spectrum, s=grid.shape, axes=axes)


def spectral_gradient(f: ScalarField) -> VectorField:
    grid = f.grid
    return VectorField(grid, np.stack([partial_derivative(f.values, grid, i) for i in range(grid.dim)]))


def spectral_jacobian(v: VectorField) -> np.ndarray:
    """Array J with J[a, i] = d v^a / d x_i, shape (dim, dim, N...)."""
    grid = v.grid
    return np.stack([partial_derivative(v.components, grid, i) for i in range(grid.dim)], axis=1)


def spectral_tensor_derivative(t: MetricField) -> np.ndarray:
    """Array D with D[i, j, k] = d_i t_jk at every node, shape (dim, dim, dim, N...)."""
    grid = t.grid
    full = t.full()
    return np.stack([partial_derivative(full, grid, i) for i in range(grid.dim)])


def l2_inner_scalar(a: ScalarField, b: ScalarField) -> float:
    _check_same_grid(a, b)
    return float(np.sum(a.values * b.values) * a.grid.cell_volume)


def l2_inner_vector(u: VectorField, w: VectorField) -> float:
    _check_same_grid(u, w)
    return float(np.sum(u.components * w.components) * u.grid.cell_volume)


def _frobenius_weights(dim: int) -> np.ndarray:
    # Off-diagonal entries appear twice in the full contraction p^ij q_ij
    weights = np.array([1.0 if i == j else 2.0 for i, j in TENSOR_INDEX[dim]])
    return weights.reshape((-1,) + (1,) * dim)


def l2_inner_tensor(p: MetricField, q: MetricField) -> float:
    _check_same_grid(p, q)
    dim = p.grid.dim
    return float(np.sum(_frobenius_weights(dim) * p.components * q.components) * p.grid.cell_volume)


def wrap_offset(delta: np.ndarray, side_length: float) -> np.ndarray:
    """Shortest signed representative of a coordinate difference on the circle of length L."""
    return (delta + 0.5 * side_length) % side_length - 0.5 * side_length


def _sample(data: np.ndarray, grid: TorusGrid, coords: np.ndarray, order: int) -> np.ndarray:
    # coords are in grid-index units, already wrapped into [0, N]
    if order not in (1, 3):
        raise InvalidField(f"Interpolation order must be 1 or 3, got {order}")
    if data.ndim == grid.dim:
        return ndimage.map_coordinates(data, coords, order=order, mode="grid-wrap")
    return np.stack([ndimage.map_coordinates(c, coords, order=order, mode="grid-wrap") for c in data])


def interpolate_array(data: np.ndarray, grid: TorusGrid, points: np.ndarray, order: int = 1) -> np.ndarray:
    """
    Sample raw nodal data (shape (C, N...) or (N...)) at physical positions points (dim, ...).
    Positions are wrapped modulo L; order 1 is periodic (bi)linear, order 3 a periodic cubic spline.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] != grid.dim:
        raise InvalidField(f"Expected positions with leading axis {grid.dim}, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise InvalidField("Interpolation positions must be finite")
    return _sample(data, grid, np.mod(points / grid.spacing, grid.n_points), order)


def interpolate(field: Field, points: np.ndarray, order: int = 1) -> np.ndarray:
    if isinstance(field, ScalarField):
        return interpolate_array(field.values, field.grid, points, order)
    return interpolate_array(field.components, field.grid, points, order)


def interpolate_displaced(field: Field, displacement: np.ndarray, order: int = 1) -> np.ndarray:
    """
    Sample field at x + displacement(x) for every node x. Node positions are taken in index
    units, so a zero displacement lands exactly on the nodes and returns the stored values.
    """
    grid = field.grid
    displacement = np.asarray(displacement, dtype=np.float64)
    if displacement.shape != (grid.dim,) + grid.shape:
        raise InvalidField(f"Displacement has shape {displacement.shape}")
    if not np.all(np.isfinite(displacement)):
        raise InvalidField("Displacement must be finite")
    index = np.stack(np.meshgrid(*([np.arange(grid.n_points, dtype=np.float64)] * grid.dim), indexing="ij"))
    coords = np.mod(index + displacement / grid.spacing, grid.n_points)
    data = field.values if isinstance(field, ScalarField) else field.components
    return _sample(data, grid, coords, order)


def field_components(field: Field) -> np.ndarray:
    """Component-major array view used by the dump format: (C, N...)."""
    if isinstance(field, ScalarField):
        return field.values[None]
    return field.components


def check_same_grid(*fields: Field) -> TorusGrid:
    first = fields[0]
    for other in fields[1:]:
        _check_same_grid(first, other)
    return first.grid
