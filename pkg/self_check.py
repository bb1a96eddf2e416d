# Invariant battery run by `main.py self-check`: operator identities, momentum-map pairings,
# gradient and dissipation consistency, path bounds, and the SO(3) toy, on 32^2 and 64^2 grids.

from contextlib import contextmanager
from typing import Iterator, List, NamedTuple, Sequence

import numpy as np

import inertia
import momentum_force
from deformation import identity_pair, pullback_image, pushforward_metric, translation_pair
from errors import ConfigError
from flow_driver import (FlowConfig, continuous_dependence, dissipation_ratios, fd_gradient_check, holder_report,
                         monotone_violations, run)
from inertia import InertiaSpec, apply_A, invert_A
from logger import print_error, print_info
from momentum_force import j1, j2, lie_derivative_metric
from so3_toy import (Rotation, So3Inertia, orthogonality_drift, rodrigues, so3_directional_derivative,
                     so3_flow, so3_gradient, so3_momentum)
from synth import (random_metric_field, random_scalar_field, random_symmetric_field, random_vector_field,
                   translate_bump)
from torus_fields import (MetricField, ScalarField, TorusGrid, l2_inner_scalar, l2_inner_tensor, l2_inner_vector,
                          spectral_gradient)

FAULTS = ("j1-sign", "a-symbol")
SIZES = (32, 64)
EPS_SWEEP = (1e-3, 1e-4, 1e-5)
DELTAS = (1e-2, 1e-3, 1e-4)


class CheckResult(NamedTuple):
    name: str
    n_points: int  # 0 for grid-free checks
    value: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        where = f"N={self.n_points}" if self.n_points else "SO(3)"
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<24} {where:<6} value={self.value:.3e}  tol={self.tolerance:.1e}"


def _at_most(name, n, value, tolerance) -> CheckResult:
    return CheckResult(name, n, float(value), tolerance, bool(value <= tolerance))


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


@contextmanager
def injected_fault(name: str) -> Iterator[None]:
    """Temporarily break one kernel so the battery can prove it notices."""
    if name not in FAULTS:
        raise ConfigError(f"Unknown fault '{name}', expected one of {', '.join(FAULTS)}")
    saved = momentum_force.J1_SIGN, inertia.SYMBOL_ORDER_SHIFT
    try:
        if name == "j1-sign":
            momentum_force.J1_SIGN = -1.0
        else:
            inertia.SYMBOL_ORDER_SHIFT = 1
        yield
    finally:
        momentum_force.J1_SIGN, inertia.SYMBOL_ORDER_SHIFT = saved


def _smooth_images(grid: TorusGrid, rng):
    # modes below N/32 + 1 keep the cubic-spline derivative within 1e-5 of the spectral one
    max_mode = grid.n_points // 32 + 1
    return (random_scalar_field(grid, rng, max_mode) * 0.5, random_scalar_field(grid, rng, max_mode) * 0.5)


def check_operators(grid: TorusGrid, rng) -> List[CheckResult]:
    spec = InertiaSpec.default_for(grid)
    worst_round_trip, worst_symmetry = 0.0, 0.0
    for _ in range(10):
        v = random_vector_field(grid, rng, max_mode=grid.n_points // 8)
        w = random_vector_field(grid, rng, max_mode=grid.n_points // 8)
        back = invert_A(spec, apply_A(spec, v))
        worst_round_trip = max(worst_round_trip, float(np.max(np.abs(back.components - v.components))) / v.sup_norm())
        worst_symmetry = max(worst_symmetry, _rel(l2_inner_vector(apply_A(spec, v), w),
                                                   l2_inner_vector(v, apply_A(spec, w))))
    return [_at_most("A round trip", grid.n_points, worst_round_trip, 1e-12),
            _at_most("A self-adjoint", grid.n_points, worst_symmetry, 1e-12)]


def check_pairings(grid: TorusGrid, rng) -> List[CheckResult]:
    I = random_scalar_field(grid, rng)
    P = random_scalar_field(grid, rng)
    V = random_vector_field(grid, rng)
    transport = ScalarField(grid, -np.sum(V.components * spectral_gradient(I).components, axis=0))
    j1_err = _rel(l2_inner_vector(j1(I, P), V), l2_inner_scalar(P, transport))

    h = random_metric_field(grid, rng)
    p = random_symmetric_field(grid, rng)
    j2_err = _rel(l2_inner_vector(j2(h, p), V), -l2_inner_tensor(p, lie_derivative_metric(V, h)))
    return [_at_most("J1 pairing", grid.n_points, j1_err, 1e-12),
            _at_most("J2 pairing", grid.n_points, j2_err, 1e-6)]


def check_identity_pair(grid: TorusGrid, rng) -> List[CheckResult]:
    pair = identity_pair(grid)
    I0 = random_scalar_field(grid, rng)
    image_err = float(np.max(np.abs(pullback_image(I0, pair).values - I0.values)))
    metric_err = float(np.max(np.abs(pushforward_metric(pair).components - MetricField.identity(grid).components)))
    shifted = translation_pair(grid, [3 * grid.spacing, -2 * grid.spacing])
    roll_err = float(np.max(np.abs(pullback_image(I0, shifted).values - np.roll(I0.values, (3, -2), axis=(0, 1)))))
    flat_err = float(np.max(np.abs(pushforward_metric(shifted).components - MetricField.identity(grid).components)))
    return [_at_most("identity pullback", grid.n_points, image_err, 1e-15),
            _at_most("identity pushforward", grid.n_points, metric_err, 1e-15),
            _at_most("translation pullback", grid.n_points, roll_err, 1e-14),
            _at_most("translation pushforward", grid.n_points, flat_err, 1e-12)]


def check_gradient(grid: TorusGrid, rng) -> List[CheckResult]:
    cfg = FlowConfig(sigma=1e-3, inertia=InertiaSpec.default_for(grid), interp_order=3)
    I0, I1 = _smooth_images(grid, rng)
    pair = identity_pair(grid)
    worst = 0.0
    for _ in range(3):
        xi = random_vector_field(grid, rng)
        best = min(fd_gradient_check(cfg, I0, I1, pair, xi, eps * grid.side_length).rel_err for eps in EPS_SWEEP)
        worst = max(worst, best)
    return [_at_most("gradient consistency", grid.n_points, worst, 1e-4)]


def check_dissipation(grid: TorusGrid, rng) -> List[CheckResult]:
    cfg = FlowConfig(sigma=1e-3, inertia=InertiaSpec.default_for(grid), interp_order=3)
    I0, I1 = _smooth_images(grid, rng)
    ratios = dissipation_ratios(cfg, I0, I1, identity_pair(grid))
    worst = max(abs(r - 2.0) for r in ratios)
    return [_at_most("dissipation rate", grid.n_points, worst, 0.5)]


def check_reference_run(grid: TorusGrid, steps: int = 100) -> List[CheckResult]:
    cfg = FlowConfig(sigma=1e-3, inertia=InertiaSpec.default_for(grid), max_steps=steps)
    I0, I1 = translate_bump(grid)
    result = run(cfg, I0, I1)
    holder = holder_report(result.trace, result.initial_energy)
    worst_det = min(row["min_det_jac"] for row in result.trace)
    worst_defect = max(row["inverse_defect"] for row in result.trace)
    return [_at_most("monotone energy", grid.n_points, monotone_violations(result.trace), 0),
            _at_most("path bound ratio", grid.n_points, holder["worst_ratio"], 1.0 + 1e-6),
            CheckResult("min det(D phi)", grid.n_points, worst_det, 0.0, worst_det > 0.0),
            _at_most("inverse defect", grid.n_points, worst_defect, cfg.defect_bound),
            CheckResult("run not failed", grid.n_points, float(result.failed), 0.0, not result.failed)]


def check_continuous_dependence(grid: TorusGrid, rng) -> List[CheckResult]:
    cfg = FlowConfig(sigma=1e-3, inertia=InertiaSpec.default_for(grid), interp_order=3)
    I0, I1 = _smooth_images(grid, rng)
    xi = random_vector_field(grid, rng, max_mode=3) * (0.1 * grid.side_length)
    distances = continuous_dependence(cfg, I0, I1, xi, DELTAS, steps=5, dt=0.1)
    ratios = [a / b for a, b in zip(distances, distances[1:])]
    return [_at_most("continuous dependence", grid.n_points, max(abs(r - 10.0) for r in ratios), 2.0)]


def check_so3(rng) -> List[CheckResult]:
    pairing = 0.0
    for _ in range(10):
        q, p, w = rng.standard_normal((3, 3))
        pairing = max(pairing, abs(so3_momentum(q, p) @ w - p @ np.cross(w, q)))

    A = So3Inertia.diagonal([1.0, 1.0, 2.0])
    R = Rotation(rodrigues(rng.standard_normal(3)))
    x0, x1 = rng.standard_normal(3), rng.standard_normal(3)
    omega = so3_gradient(R, x0, x1, A)
    gradient = 0.0
    for _ in range(5):
        eta = rng.standard_normal(3)
        eta /= np.linalg.norm(eta)
        fd = min((_rel(so3_directional_derivative(R, x0, x1, eta, eps), A.inner(omega, eta)) for eps in EPS_SWEEP))
        gradient = max(gradient, fd)

    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    result = so3_flow(e1, e2, So3Inertia(), dt=0.05, steps=10_000)
    drift = orthogonality_drift(result.rotation.matrix)
    e0 = result.trace[0]["E"]
    path_ratio = max((row["path_length_A"] / np.sqrt(row["t"] * e0) for row in result.trace if row["t"] > 0),
                     default=0.0)
    return [_at_most("SO(3) momentum pairing", 0, pairing, 1e-14),
            _at_most("SO(3) gradient", 0, gradient, 1e-6),
            _at_most("SO(3) residual", 0, result.residual, 1e-8),
            _at_most("SO(3) orthogonality", 0, drift, 1e-10),
            _at_most("SO(3) path bound ratio", 0, path_ratio, 1.0 + 1e-12)]


def run_battery(sizes: Sequence[int] = SIZES, seed: int = 0) -> List[CheckResult]:
    results = []
    for n in sizes:
        grid = TorusGrid(2, n)
        rng = np.random.default_rng(seed + n)
        for check in (check_operators, check_pairings, check_identity_pair, check_gradient, check_dissipation,
                      check_continuous_dependence):
            results += check(grid, rng)
        results += check_reference_run(grid)
    results += check_so3(np.random.default_rng(seed))
    return results


def report(results: Sequence[CheckResult]) -> bool:
    for result in results:
        (print_info if result.passed else print_error)(result.line())
    failed = sum(1 for r in results if not r.passed)
    (print_info if not failed else print_error)(f"{len(results) - failed}/{len(results)} checks passed")
    return failed == 0
