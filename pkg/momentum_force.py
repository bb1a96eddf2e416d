# Eulerian force F = J1(I, P) + J2(h, p), the momentum maps of the cotangent-lifted actions on
# images and on metrics. The descent velocity is -A^{-1} F.

from dataclasses import dataclass

import numpy as np

from errors import MetricNotPositive
from torus_fields import (MetricField, ScalarField, VectorField, check_same_grid, spectral_gradient,
                          spectral_jacobian, spectral_tensor_derivative)

# Fault hook for the self-check: multiplies j1
J1_SIGN = 1.0


@dataclass(frozen=True, eq=False)
class ForceBreakdown:
    j1_term: VectorField
    j2_term: VectorField
    total: VectorField


def j1(I: ScalarField, P: ScalarField) -> VectorField:
    """J1(I, P) = -P grad I."""
    grid = check_same_grid(I, P)
    grad = spectral_gradient(I).components
    return VectorField(grid, -J1_SIGN * P.values * grad)


def j2(h: MetricField, p: MetricField) -> VectorField:
    """
    J2(h, p)_j = 2 (d_i p^im) h_jm + 2 p^im (d_i h_jm) - p^im (d_j h_im)

    Indices are raised with the flat background metric, so p^im = p_im numerically and the
    covariant derivative is the coordinate partial derivative.
    """
    grid = check_same_grid(h, p)
    if not h.is_positive_definite():
        raise MetricNotPositive("j2 needs a positive-definite metric h")
    h_full = h.full()
    p_full = p.full()
    dh = spectral_tensor_derivative(h)  # dh[i, j, m] = d_i h_jm
    dp = spectral_tensor_derivative(p)

    div_p = np.einsum("iim...->m...", dp)
    term_div = 2.0 * np.einsum("m...,jm...->j...", div_p, h_full)
    term_transport = 2.0 * np.einsum("im...,ijm...->j...", p_full, dh)
    term_stretch = -np.einsum("im...,jim...->j...", p_full, dh)
    return VectorField(grid, term_div + term_transport + term_stretch)


def lie_derivative_metric(V: VectorField, h: MetricField) -> MetricField:
    """(L_V h)_ij = V^m d_m h_ij + (d_i V^m) h_mj + (d_j V^m) h_im on the flat torus."""
    grid = check_same_grid(V, h)
    h_full = h.full()
    dh = spectral_tensor_derivative(h)
    dV = spectral_jacobian(V)  # dV[m, i] = d_i V^m
    transport = np.einsum("m...,mij...->ij...", V.components, dh)
    stretch = np.einsum("mi...,mj...->ij...", dV, h_full)
    return MetricField.from_full(grid, transport + stretch + np.swapaxes(stretch, 0, 1))


def assemble_force(I: ScalarField, I1: ScalarField, h: MetricField, g_ref: MetricField,
                   sigma: float) -> ForceBreakdown:
    """F = J1(I, I - I1) + J2(h, sigma (h - g_ref)), evaluated in Eulerian coordinates."""
    check_same_grid(I, I1, h, g_ref)
    j1_term = j1(I, I - I1)
    if sigma == 0:
        j2_term = VectorField.zeros(I.grid)
    else:
        j2_term = j2(h, (h - g_ref) * sigma)
    return ForceBreakdown(j1_term=j1_term, j2_term=j2_term, total=j1_term + j2_term)
