# Inertia operator A = (1 - alpha*Laplacian)^k on vector fields of the torus, applied and
# inverted through its Fourier symbol. <A u, w> is the right-invariant metric at the identity.

from dataclasses import dataclass

import numpy as np

from errors import ConfigError, InvalidField
from torus_fields import TorusGrid, VectorField, l2_inner_vector, squared_wavenumber

# Fault hook for the self-check: shifts the exponent used by invert_A
SYMBOL_ORDER_SHIFT = 0


@dataclass(frozen=True)
class InertiaSpec:
    alpha: float
    order_k: int = 2

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if int(self.order_k) != self.order_k or self.order_k < 2:
            raise ConfigError(f"order_k must be an integer >= 2, got {self.order_k}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "order_k", int(self.order_k))

    @classmethod
    def default_for(cls, grid: TorusGrid) -> "InertiaSpec":
        """alpha = 0.05 L^2, k = 2."""
        return cls(alpha=0.05 * grid.side_length ** 2, order_k=2)

    def symbol(self, grid: TorusGrid, order_shift: int = 0) -> np.ndarray:
        return (1.0 + self.alpha * squared_wavenumber(grid)) ** (self.order_k + order_shift)


def _multiply_symbol(v: VectorField, symbol: np.ndarray) -> VectorField:
    grid = v.grid
    if not np.all(np.isfinite(v.components)):
        raise InvalidField("Inertia operator applied to non-finite field")
    axes = tuple(range(-grid.dim, 0))
    spectrum = np.fft.rfftn(v.components, axes=axes)
    spectrum *= symbol
    return VectorField(grid, np.fft.irfftn(spectrum, s=grid.shape, axes=axes))


def apply_A(spec: InertiaSpec, v: VectorField) -> VectorField:
    return _multiply_symbol(v, spec.symbol(v.grid))


def invert_A(spec: InertiaSpec, m: VectorField) -> VectorField:
    """Solve A v = m; exact inverse of apply_A on the grid."""
    return _multiply_symbol(m, 1.0 / spec.symbol(m.grid, SYMBOL_ORDER_SHIFT))


def a_inner(spec: InertiaSpec, u: VectorField, w: VectorField) -> float:
    return l2_inner_vector(apply_A(spec, u), w)


def a_norm(spec: InertiaSpec, u: VectorField) -> float:
    return float(np.sqrt(max(a_inner(spec, u, u), 0.0)))
