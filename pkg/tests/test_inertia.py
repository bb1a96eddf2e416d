import numpy as np
import pytest

from errors import ConfigError
from inertia import InertiaSpec, a_inner, a_norm, apply_A, invert_A
from synth import random_vector_field
from torus_fields import TorusGrid, VectorField, spectral_laplacian


def test_round_trip_on_random_fields():
    grid = TorusGrid(2, 64)
    spec = InertiaSpec.default_for(grid)
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = random_vector_field(grid, rng, max_mode=grid.n_points // 8)
        back = invert_A(spec, apply_A(spec, v))
        assert np.max(np.abs(back.components - v.components)) <= 1e-12 * v.sup_norm()


def test_round_trip_full_band_is_close():
    grid = TorusGrid(2, 32)
    spec = InertiaSpec.default_for(grid)
    v = VectorField(grid, np.random.default_rng(1).standard_normal((2,) + grid.shape))
    back = invert_A(spec, apply_A(spec, v))
    assert np.max(np.abs(back.components - v.components)) <= 1e-8 * v.sup_norm()


def test_constant_field_is_fixed():
    grid = TorusGrid(2, 16)
    v = VectorField.constant(grid, [0.3, -1.2])
    spec = InertiaSpec(alpha=0.05, order_k=3)
    assert np.allclose(apply_A(spec, v).components, v.components, atol=1e-14)
    assert a_norm(spec, v) == pytest.approx(np.hypot(0.3, 1.2), rel=1e-12)


def test_single_mode_is_scaled_by_symbol():
    grid = TorusGrid(2, 32)
    x = grid.node_coordinates()
    m = 3
    wave = np.sin(2 * np.pi * m * x[0])
    v = VectorField(grid, np.stack([wave, np.zeros(grid.shape)]))
    spec = InertiaSpec(alpha=0.05, order_k=2)
    factor = (1 + 0.05 * (2 * np.pi * m) ** 2) ** 2
    assert np.allclose(apply_A(spec, v).components[0], factor * wave, atol=1e-10)
    assert np.allclose(invert_A(spec, v).components[0], wave / factor, atol=1e-14)


def test_a_inner_is_symmetric_and_positive():
    grid = TorusGrid(2, 32)
    spec = InertiaSpec.default_for(grid)
    rng = np.random.default_rng(4)
    u = random_vector_field(grid, rng)
    w = random_vector_field(grid, rng)
    assert a_inner(spec, u, w) == pytest.approx(a_inner(spec, w, u), rel=1e-12)
    assert a_inner(spec, u, u) > 0
    assert a_norm(spec, VectorField.zeros(grid)) == 0.0


def test_default_alpha_scales_with_side_length():
    spec = InertiaSpec.default_for(TorusGrid(1, 16, side_length=2.0))
    assert spec.alpha == pytest.approx(0.2)
    assert spec.order_k == 2


def test_invalid_inertia_spec():
    with pytest.raises(ConfigError):
        InertiaSpec(alpha=0.0)
    with pytest.raises(ConfigError):
        InertiaSpec(alpha=-1.0)
    with pytest.raises(ConfigError):
        InertiaSpec(alpha=0.05, order_k=1)
    with pytest.raises(ConfigError):
        InertiaSpec(alpha=0.05, order_k=2.5)


def test_unit_wavenumber_on_two_pi_torus():
    grid = TorusGrid(1, 8, side_length=2 * np.pi)
    x = grid.node_coordinates()
    v = VectorField(grid, np.sin(x))
    spec = InertiaSpec(alpha=1.0, order_k=2)
    assert np.allclose(apply_A(spec, v).components, 4 * v.components, atol=1e-12)
    assert np.allclose(invert_A(spec, v * 4.0).components, v.components, atol=1e-12)


@pytest.mark.parametrize("order_k", [2, 3, 4])
def test_apply_matches_repeated_laplacian(order_k):
    grid = TorusGrid(2, 32, side_length=2.0)
    v = random_vector_field(grid, np.random.default_rng(11), max_mode=8)
    spec = InertiaSpec(alpha=0.02, order_k=order_k)
    w = v.components
    for _ in range(order_k):
        w = w - spec.alpha * spectral_laplacian(w, grid)
    expected = apply_A(spec, v).components
    assert np.linalg.norm(expected - w) <= 1e-10 * np.linalg.norm(w)


@pytest.mark.parametrize("mode", [1, 4, 9, 15])
def test_inverse_shrinks_pure_modes_by_the_symbol(mode):
    grid = TorusGrid(2, 32)
    x = grid.node_coordinates()
    wave = np.cos(2 * np.pi * mode * x[1])
    m = VectorField(grid, np.stack([np.zeros(grid.shape), wave]))
    spec = InertiaSpec(alpha=0.01, order_k=2)
    bound = (1 + 0.01 * (2 * np.pi * mode) ** 2) ** -2
    smoothed = invert_A(spec, m).sup_norm()
    assert smoothed == pytest.approx(bound * m.sup_norm(), rel=1e-12)
    assert smoothed < m.sup_norm()
