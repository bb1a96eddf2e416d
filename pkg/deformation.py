# Coupled forward/inverse deformation (phi, psi = phi^-1) stored as periodic displacement grids,
# advanced under a velocity field, with the pulled-back image and pushed-forward metric.

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from errors import InvalidField, NonDiffeomorphic
from torus_fields import (MetricField, ScalarField, TorusGrid, VectorField, check_same_grid,
                          interpolate_displaced, spectral_jacobian, wrap_offset)

DEFAULT_JAC_FLOOR = 1e-3


@dataclass(frozen=True, eq=False)
class DiffeoPair:
    """phi(x) = x + phi_displacement(x), psi(x) = x + psi_displacement(x), both mod L."""

    grid: TorusGrid
    phi_displacement: VectorField
    psi_displacement: VectorField

    def __post_init__(self):
        if self.phi_displacement.grid != self.grid or self.psi_displacement.grid != self.grid:
            raise InvalidField("DiffeoPair displacements must live on the pair's grid")

    def phi_positions(self) -> np.ndarray:
        return self.grid.node_coordinates() + self.phi_displacement.components

    def psi_positions(self) -> np.ndarray:
        return self.grid.node_coordinates() + self.psi_displacement.components


@dataclass(frozen=True)
class StepReport:
    dt_used: float
    min_jac_det: float
    inverse_defect: float  # grid-cell units


def identity_pair(grid: TorusGrid) -> DiffeoPair:
    return DiffeoPair(grid, VectorField.zeros(grid), VectorField.zeros(grid))


def translation_pair(grid: TorusGrid, shift) -> DiffeoPair:
    """phi(x) = x + shift, psi(x) = x - shift."""
    shift = np.asarray(shift, dtype=np.float64)
    return DiffeoPair(grid, VectorField.constant(grid, shift), VectorField.constant(grid, -shift))


def _jacobian_matrix(displacement: VectorField) -> np.ndarray:
    jac = spectral_jacobian(displacement)
    for a in range(displacement.grid.dim):
        jac[a, a] += 1.0
    return jac


def _determinant(matrix: np.ndarray) -> np.ndarray:
    if matrix.shape[0] == 1:
        return matrix[0, 0]
    return matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0]


def jacobian_determinant(pair: DiffeoPair) -> np.ndarray:
    """det(D phi) at every node."""
    return _determinant(_jacobian_matrix(pair.phi_displacement))


def jacobian_min_det(pair: DiffeoPair) -> float:
    return float(np.min(jacobian_determinant(pair)))


def inverse_defect(pair: DiffeoPair, order: int = 1) -> float:
    """max_x |phi(psi(x)) - x| as a torus distance, in grid cells."""
    grid = pair.grid
    d_psi = pair.psi_displacement.components
    # phi(psi(x)) - x = d_psi(x) + d_phi(psi(x))
    offset = d_psi + interpolate_displaced(pair.phi_displacement, d_psi, order)
    offset = wrap_offset(offset, grid.side_length)
    return float(np.max(np.sqrt(np.sum(offset ** 2, axis=0))) / grid.spacing)


def advance(pair: DiffeoPair, u: VectorField, dt: float, jac_floor: float = DEFAULT_JAC_FLOOR,
            order: int = 1) -> Tuple[DiffeoPair, StepReport]:
    """
    One explicit step of phi' = u o phi with the coupled inverse:
    phi_new(x) = phi(x) + dt u(phi(x))   (Lagrangian, u sampled at phi(x))
    psi_new(x) = psi(x - dt u(x))        (semi-Lagrangian, psi sampled at the departure point)
    """
    if not dt > 0:
        raise InvalidField(f"Step size must be positive, got {dt}")
    grid = check_same_grid(pair.phi_displacement, u)
    step = dt * u.components

    d_phi = pair.phi_displacement.components + dt * interpolate_displaced(u, pair.phi_displacement.components, order)
    d_psi = -step + interpolate_displaced(pair.psi_displacement, -step, order)
    new_pair = DiffeoPair(grid, VectorField(grid, d_phi), VectorField(grid, d_psi))

    min_det = jacobian_min_det(new_pair)
    if not min_det > jac_floor:
        raise NonDiffeomorphic(f"min det(D phi) = {min_det:.3e} <= floor {jac_floor:.1e} after step dt={dt:.3e}")
    return new_pair, StepReport(dt_used=float(dt), min_jac_det=min_det, inverse_defect=inverse_defect(new_pair, order))


def pullback_image(I0: ScalarField, pair: DiffeoPair, order: int = 1) -> ScalarField:
    """I = I0 o psi, the template deformed by phi."""
    check_same_grid(I0, pair.psi_displacement)
    return ScalarField(I0.grid, interpolate_displaced(I0, pair.psi_displacement.components, order))


def pushforward_metric(pair: DiffeoPair) -> MetricField:
    """h = phi_* g = psi^* g, h_ij = sum_a d_i psi^a d_j psi^a for the flat g."""
    grid = pair.grid
    jac = _jacobian_matrix(pair.psi_displacement)
    full = np.einsum("ai...,aj...->ij...", jac, jac)
    det = _determinant(full)
    if not np.all(det > 0):
        raise NonDiffeomorphic(f"Push-forward metric degenerates: min det(h) = {float(np.min(det)):.3e}")
    return MetricField.from_full(grid, full)
