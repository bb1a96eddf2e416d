import csv
import math

import numpy as np
import pytest

from deformation import advance, identity_pair
from errors import ConfigError, LineSearchFailed
from flow_driver import (TRACE_COLUMNS, FlowConfig, continuous_dependence, descent_velocity, dissipation_ratios,
                         energy, fd_gradient_check, holder_report, initial_state, monotone_violations, run, step,
                         write_trace_csv)
from inertia import InertiaSpec, a_norm, invert_A
from synth import BUMP_WIDTH, SHIFT, random_scalar_field, random_vector_field, translate_bump
from torus_fields import MetricField, ScalarField, TorusGrid, VectorField, spectral_gradient


def _config(grid, **kwargs):
    return FlowConfig(inertia=InertiaSpec.default_for(grid), **kwargs)


def _smooth_images(grid, rng):
    max_mode = grid.n_points // 32 + 1
    return random_scalar_field(grid, rng, max_mode) * 0.5, random_scalar_field(grid, rng, max_mode) * 0.5


def test_energy_of_constant_difference():
    grid = TorusGrid(2, 16)
    g = MetricField.identity(grid)
    total, match, reg = energy(ScalarField.constant(grid, 0.3), ScalarField.constant(grid, 0.0), g, g, 1e-3)
    assert match == pytest.approx(0.045, rel=1e-14)
    assert reg == 0.0
    assert total == match


def test_energy_of_metric_excess():
    grid = TorusGrid(2, 16)
    g = MetricField.identity(grid)
    h = g * 2.0
    c = ScalarField.constant(grid, 1.0)
    total, match, reg = energy(c, c, h, g, 0.5)
    # |h - g|^2 = 2 for the doubled identity
    assert match == 0.0
    assert reg == pytest.approx(0.5, rel=1e-14)
    assert total == reg


def test_energy_of_translated_gaussians():
    grid = TorusGrid(2, 64)
    I0, I1 = translate_bump(grid)
    g = MetricField.identity(grid)
    _, match, _ = energy(I0, I1, g, g, 0.0)
    w, s = BUMP_WIDTH, SHIFT
    expected = math.pi * w ** 2 * (1 - math.exp(-s ** 2 / (4 * w ** 2)))
    assert match == pytest.approx(expected, rel=1e-8)


def test_matched_state_has_zero_velocity():
    grid = TorusGrid(2, 32)
    I = random_scalar_field(grid, np.random.default_rng(0))
    u, breakdown = descent_velocity(_config(grid), I, I, identity_pair(grid))
    assert u.sup_norm() == 0.0
    assert breakdown.total.sup_norm() == 0.0


def test_greedy_velocity_is_smoothed_image_force():
    grid = TorusGrid(2, 32)
    rng = np.random.default_rng(1)
    I, I1 = random_scalar_field(grid, rng), random_scalar_field(grid, rng)
    cfg = _config(grid, sigma=0.0)
    u, _ = descent_velocity(cfg, I, I1, identity_pair(grid))
    force = VectorField(grid, (I - I1).values * spectral_gradient(I).components)
    assert np.allclose(u.components, invert_A(cfg.inertia, force).components, atol=1e-13)


def test_gradient_at_matched_state_is_zero():
    grid = TorusGrid(2, 32)
    I = random_scalar_field(grid, np.random.default_rng(2))
    xi = random_vector_field(grid, np.random.default_rng(3))
    check = fd_gradient_check(_config(grid), I, I, identity_pair(grid), xi, 1e-4)
    assert check.analytic == 0.0


GRADIENT_EPS = (1e-3, 1e-4, 1e-5)


def _worst_gradient_error(cfg, I0, I1, pair, rng, directions=10):
    worst = 0.0
    for _ in range(directions):
        xi = random_vector_field(pair.grid, rng)
        worst = max(worst, min(fd_gradient_check(cfg, I0, I1, pair, xi, eps).rel_err for eps in GRADIENT_EPS))
    return worst


def test_gradient_matches_finite_differences_at_identity():
    grid = TorusGrid(2, 64)
    rng = np.random.default_rng(4)
    cfg = _config(grid, sigma=1e-3, interp_order=3)
    I0, I1 = _smooth_images(grid, rng)
    assert _worst_gradient_error(cfg, I0, I1, identity_pair(grid), rng) <= 1e-4


def test_gradient_matches_finite_differences_off_identity():
    grid = TorusGrid(2, 64)
    rng = np.random.default_rng(5)
    cfg = _config(grid, sigma=1e-3, interp_order=3)
    I0, I1 = _smooth_images(grid, rng)
    pair, _ = advance(identity_pair(grid), random_vector_field(grid, rng, max_mode=3) * 0.03, 1.0, order=3)
    assert _worst_gradient_error(cfg, I0, I1, pair, rng) <= 1e-4


def test_moving_towards_the_target_lowers_energy():
    grid = TorusGrid(2, 32)
    I0, I1 = translate_bump(grid)
    check = fd_gradient_check(_config(grid, interp_order=3), I0, I1, identity_pair(grid),
                              VectorField.constant(grid, [1.0, 0.0]), 1e-4)
    assert check.analytic < 0
    assert check.numeric < 0


def test_step_decreases_energy_and_extends_path():
    grid = TorusGrid(2, 32)
    I0, I1 = translate_bump(grid)
    cfg = _config(grid)
    state = initial_state(cfg, I0, I1, identity_pair(grid))
    u, _ = descent_velocity(cfg, state.image, I1, state.pair)
    moved, report = step(cfg, state, I0, I1)
    assert moved.energy < state.energy
    assert moved.step == 1
    assert moved.t == report.dt_used
    assert report.dt_used <= cfg.dt_init
    assert moved.path_length_A == pytest.approx(a_norm(cfg.inertia, u) * report.dt_used, rel=1e-12)
    assert report.min_jac_det > cfg.jac_floor


def test_step_without_descent_fails_line_search():
    grid = TorusGrid(2, 16)
    I = random_scalar_field(grid, np.random.default_rng(6))
    cfg = _config(grid, dt_min=1e-3)
    state = initial_state(cfg, I, I, identity_pair(grid))
    with pytest.raises(LineSearchFailed):
        step(cfg, state, I, I)


def test_run_from_matched_state_converges_immediately():
    grid = TorusGrid(2, 16)
    I = random_scalar_field(grid, np.random.default_rng(7))
    result = run(_config(grid), I, I)
    assert result.reason == "converged"
    assert not result.failed
    assert len(result.trace) == 1
    assert result.trace[0]["E"] == 0.0
    assert result.trace[0]["v_norm_A"] == 0.0


def test_reference_registration():
    grid = TorusGrid(2, 64)
    I0, I1 = translate_bump(grid)
    cfg = _config(grid, sigma=1e-3, max_steps=500)
    result = run(cfg, I0, I1)
    trace = result.trace

    assert not result.failed
    assert result.state.energy_match <= 0.1 * trace[0]["E_match"]
    assert monotone_violations(trace) == 0
    assert holder_report(trace, result.initial_energy)["ok"]
    assert min(row["min_det_jac"] for row in trace) > 0
    assert max(row["inverse_defect"] for row in trace) <= cfg.defect_bound
    assert [row["step"] for row in trace] == list(range(len(trace)))


def test_run_stops_at_max_steps():
    grid = TorusGrid(2, 32)
    I0, I1 = translate_bump(grid)
    result = run(_config(grid, max_steps=3), I0, I1)
    assert result.reason == "max_steps"
    assert not result.failed
    assert len(result.trace) == 4
    assert result.state.step == 3


def test_tiny_defect_bound_ends_the_run():
    grid = TorusGrid(2, 32)
    I0, I1 = translate_bump(grid)
    result = run(_config(grid, defect_bound=1e-9), I0, I1)
    assert result.reason == "defect_bound_exceeded"
    assert result.failed
    assert len(result.trace) == 1
    assert result.message


def test_on_step_callback_sees_every_accepted_step():
    grid = TorusGrid(2, 32)
    I0, I1 = translate_bump(grid)
    seen = []
    run(_config(grid, max_steps=4), I0, I1, on_step=lambda state, report: seen.append(state.step))
    assert seen == [1, 2, 3, 4]


def test_dissipation_residual_is_first_order():
    grid = TorusGrid(2, 32)
    cfg = _config(grid, interp_order=3)
    I0, I1 = _smooth_images(grid, np.random.default_rng(8))
    for ratio in dissipation_ratios(cfg, I0, I1, identity_pair(grid)):
        assert ratio == pytest.approx(2.0, abs=0.5)


def test_flow_map_depends_continuously_on_the_start():
    grid = TorusGrid(2, 32)
    rng = np.random.default_rng(9)
    cfg = _config(grid, interp_order=3)
    I0, I1 = _smooth_images(grid, rng)
    xi = random_vector_field(grid, rng, max_mode=3) * 0.1
    distances = continuous_dependence(cfg, I0, I1, xi, (1e-2, 1e-3, 1e-4), steps=5, dt=0.1)
    assert distances[0] > distances[1] > distances[2] > 0
    for a, b in zip(distances, distances[1:]):
        assert a / b == pytest.approx(10.0, abs=2.0)


def test_holder_report_flags_long_paths():
    good = [{"t": 0.0, "E": 1.0, "path_length_A": 0.0}, {"t": 1.0, "E": 0.5, "path_length_A": 0.5}]
    report = holder_report(good, 1.0)
    assert report["ok"]
    assert report["worst_ratio"] == pytest.approx(0.5)
    assert report["sharp_violations"] == 0

    bad = good + [{"t": 4.0, "E": 0.4, "path_length_A": 2.5}]
    report = holder_report(bad, 1.0)
    assert not report["ok"]
    assert report["violations"] == 1
    assert report["worst_ratio"] == pytest.approx(1.25)


def test_monotone_violations():
    assert monotone_violations([{"E": 3.0}, {"E": 2.0}, {"E": 1.0}]) == 0
    assert monotone_violations([{"E": 3.0}, {"E": 3.0}, {"E": 4.0}]) == 2


def test_trace_csv_is_deterministic(tmp_path):
    grid = TorusGrid(2, 32)
    I0, I1 = translate_bump(grid)
    paths = []
    for name in ("a.csv", "b.csv"):
        result = run(_config(grid, max_steps=5), I0, I1)
        write_trace_csv(result.trace, tmp_path / name)
        paths.append(tmp_path / name)
    assert paths[0].read_bytes() == paths[1].read_bytes()

    with open(paths[0], newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == TRACE_COLUMNS
    assert len(rows) == 7
    assert float(rows[1][TRACE_COLUMNS.index("E")]) == result.trace[0]["E"]


@pytest.mark.parametrize("kwargs", [
    {"sigma": -1.0},
    {"dt_init": 0.0},
    {"dt_min": 1.0, "dt_init": 0.1},
    {"max_steps": -1},
    {"max_steps": 2.5},
    {"grad_tol": 0.0},
    {"interp_order": 2},
    {"jac_floor": 0.0},
    {"defect_bound": -2.0},
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        FlowConfig(inertia=InertiaSpec(alpha=0.05), **kwargs)


def test_config_needs_an_inertia_for_the_grid():
    with pytest.raises(TypeError):
        FlowConfig()
    with pytest.raises(ConfigError):
        FlowConfig(inertia=0.05)
    cfg = _config(TorusGrid(2, 16, side_length=2.0))
    assert cfg.inertia.alpha == pytest.approx(0.2)
