import csv

import numpy as np
import pytest

from errors import ConfigError, InvalidField
from so3_toy import (SO3_TRACE_COLUMNS, Rotation, So3Inertia, hat, orthogonality_drift, rodrigues,
                     so3_directional_derivative, so3_energy, so3_flow, so3_gradient, so3_momentum, vee,
                     write_so3_trace_csv)


def test_hat_and_vee():
    w = np.array([0.3, -1.2, 2.0])
    q = np.array([1.0, 0.5, -0.7])
    assert np.allclose(hat(w) @ q, np.cross(w, q))
    assert np.array_equal(vee(hat(w)), w)
    with pytest.raises(InvalidField):
        vee(np.eye(3))


@pytest.mark.parametrize("angle", [0.0, 1e-6, 1e-4, 0.5, 3.0])
def test_rodrigues_is_a_rotation(angle):
    axis = np.array([1.0, 2.0, -2.0]) / 3.0
    R = rodrigues(angle * axis)
    assert orthogonality_drift(R) < 1e-14
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(R @ axis, axis, atol=1e-14)


def test_rodrigues_quarter_turn():
    R = rodrigues([0.0, 0.0, np.pi / 2])
    assert np.allclose(R @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)


def test_rotation_validation():
    with pytest.raises(InvalidField):
        Rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidField):
        Rotation(np.eye(3) * 1.01)
    with pytest.raises(InvalidField):
        Rotation(np.eye(2))


def test_inertia_validation():
    with pytest.raises(ConfigError):
        So3Inertia.diagonal([1.0, 0.0, 1.0])
    with pytest.raises(ConfigError):
        So3Inertia(np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    A = So3Inertia.diagonal([1.0, 2.0, 4.0])
    assert np.allclose(A.solve([1.0, 2.0, 4.0]), 1.0)
    assert A.norm([0.0, 0.0, 1.0]) == pytest.approx(2.0)


def test_momentum_pairing():
    rng = np.random.default_rng(0)
    for _ in range(10):
        q, p, w = rng.standard_normal((3, 3))
        assert so3_momentum(q, p) @ w == pytest.approx(p @ np.cross(w, q), abs=1e-14)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    A = So3Inertia.diagonal([1.0, 1.0, 2.0])
    R = Rotation(rodrigues(rng.standard_normal(3)))
    x0, x1 = rng.standard_normal(3), rng.standard_normal(3)
    omega = so3_gradient(R, x0, x1, A)
    for _ in range(5):
        eta = rng.standard_normal(3)
        eta /= np.linalg.norm(eta)
        fd = so3_directional_derivative(R, x0, x1, eta, 1e-4)
        assert fd == pytest.approx(A.inner(omega, eta), rel=1e-6, abs=1e-10)


def test_flow_aligns_unit_vectors():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    result = so3_flow(e1, e2, So3Inertia(), dt=0.05, steps=10_000)
    assert result.reason == "converged"
    assert result.residual < 1e-8
    assert orthogonality_drift(result.rotation.matrix) < 1e-10
    assert np.linalg.det(result.rotation.matrix) == pytest.approx(1.0, abs=1e-10)
    energies = [row["E"] for row in result.trace]
    assert all(b < a for a, b in zip(energies, energies[1:]))
    e0 = energies[0]
    for row in result.trace[1:]:
        assert row["path_length_A"] <= np.sqrt(row["t"] * e0) * (1 + 1e-12)


def test_flow_with_different_lengths_settles_on_the_orbit():
    x0 = np.array([2.0, 0.0, 0.0])
    x1 = np.array([0.0, 0.0, 1.0])
    result = so3_flow(x0, x1, So3Inertia.diagonal([1.0, 2.0, 3.0]), tol=1e-6)
    assert result.reason == "converged"
    assert np.allclose(result.rotation.apply(x0), [0.0, 0.0, 2.0], atol=1e-6)
    assert result.residual == pytest.approx(1.0, abs=1e-8)


def test_flow_from_the_optimum_stops_at_once():
    x = np.array([0.0, 1.0, 0.0])
    result = so3_flow(x, x, So3Inertia())
    assert result.reason == "converged"
    assert len(result.trace) == 1
    assert so3_energy(result.rotation, x, x) == 0.0


def test_flow_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        so3_flow(np.ones(3), np.ones(3), So3Inertia(), dt=-0.1)
    with pytest.raises(ConfigError):
        so3_flow(np.ones(3), np.ones(3), So3Inertia(), tol=0.0)


def test_trace_csv(tmp_path):
    result = so3_flow(np.eye(3)[0], np.eye(3)[2], So3Inertia(), steps=20)
    path = tmp_path / "so3_trace.csv"
    write_so3_trace_csv(result.trace, path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == SO3_TRACE_COLUMNS
    assert len(rows) == len(result.trace) + 1
    assert result.reason == "max_steps"


@pytest.mark.parametrize("diagonal, expected", [
    ([1.0, 1.0, 1.0], [0.0, 0.0, -2.0]),
    ([1.0, 1.0, 2.0], [0.0, 0.0, -1.0]),
])
def test_gradient_at_identity_in_closed_form(diagonal, expected):
    x0, x1 = np.eye(3)[0], np.eye(3)[1]
    omega = so3_gradient(Rotation.identity(), x0, x1, So3Inertia.diagonal(diagonal))
    assert np.allclose(omega, expected, atol=1e-15)
