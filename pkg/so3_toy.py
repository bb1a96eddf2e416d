# Gradient flow on SO(3) for E(R) = |R x0 - x1|^2 through the momentum map J(q, p) = q x p.
# Right-invariant convention: xi.R = hat(xi) R, metric <A xi, eta> on so(3) = R^3.

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, TypedDict

import numpy as np

from errors import ConfigError, InvalidField

TAYLOR_EPS = 1e-3  # angle below which the Rodrigues coefficients use their series
ORTHOGONALITY_TOL = 1e-10
SO3_TRACE_COLUMNS = ["step", "t", "E", "omega_norm_A", "path_length_A"]


@dataclass(frozen=True, eq=False)
class Rotation:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise InvalidField(f"Rotation needs a finite 3x3 matrix, got shape {m.shape}")
        drift = orthogonality_drift(m)
        if drift > ORTHOGONALITY_TOL or np.linalg.det(m) <= 0:
            raise InvalidField(f"Matrix is not a rotation (|R^T R - I| = {drift:.2e}, det = {np.linalg.det(m):.3f})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    def apply(self, q) -> np.ndarray:
        return self.matrix @ np.asarray(q, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class So3Inertia:
    """Symmetric positive-definite A acting on so(3) through the hat isomorphism."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ConfigError(f"Inertia must be a finite 3x3 matrix, got shape {m.shape}")
        if np.max(np.abs(m - m.T)) > 1e-14:
            raise ConfigError("Inertia matrix is not symmetric")
        if np.min(np.linalg.eigvalsh(m)) <= 0:
            raise ConfigError("Inertia matrix is not positive definite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def diagonal(cls, values) -> "So3Inertia":
        return cls(np.diag(np.asarray(values, dtype=np.float64)))

    def solve(self, m) -> np.ndarray:
        return np.linalg.solve(self.matrix, np.asarray(m, dtype=np.float64))

    def inner(self, a, b) -> float:
        return float(np.asarray(b) @ self.matrix @ np.asarray(a))

    def norm(self, w) -> float:
        return math.sqrt(max(self.inner(w, w), 0.0))


def orthogonality_drift(m: np.ndarray) -> float:
    return float(np.max(np.abs(m.T @ m - np.eye(3))))


def hat(w) -> np.ndarray:
    """Skew matrix with hat(w) q = w x q."""
    w = np.asarray(w, dtype=np.float64)
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def vee(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (3, 3) or np.max(np.abs(X + X.T)) > 1e-12:
        raise InvalidField("vee expects a skew-symmetric 3x3 matrix")
    return np.array([X[2, 1], X[0, 2], X[1, 0]])


def rodrigues(w) -> np.ndarray:
    """exp(hat(w)) = I + (sin t / t) W + ((1 - cos t) / t^2) W^2 with t = |w|."""
    W = hat(w)
    theta = float(np.linalg.norm(w))
    if theta < TAYLOR_EPS:
        a = 1.0 - theta ** 2 / 6 + theta ** 4 / 120
        b = 0.5 - theta ** 2 / 24 + theta ** 4 / 720
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta ** 2
    return np.eye(3) + a * W + b * (W @ W)


def so3_momentum(q, p) -> np.ndarray:
    """J(q, p) = q x p, so that <J(q, p), w> = <p, w x q>."""
    return np.cross(np.asarray(q, dtype=np.float64), np.asarray(p, dtype=np.float64))


def so3_energy(R: Rotation, x0, x1) -> float:
    r = R.apply(x0) - np.asarray(x1, dtype=np.float64)
    return float(r @ r)


def so3_gradient(R: Rotation, x0, x1, A: So3Inertia) -> np.ndarray:
    """omega with grad E(R) = hat(omega) R: omega = A^{-1} J(R x0, 2 (R x0 - x1))."""
    q = R.apply(x0)
    return A.solve(so3_momentum(q, 2.0 * (q - np.asarray(x1, dtype=np.float64))))


def so3_directional_derivative(R: Rotation, x0, x1, eta, eps: float) -> float:
    """Central difference of E along exp(eps hat(eta)) R."""
    eta = np.asarray(eta, dtype=np.float64)
    plus = Rotation(rodrigues(eps * eta) @ R.matrix)
    minus = Rotation(rodrigues(-eps * eta) @ R.matrix)
    return (so3_energy(plus, x0, x1) - so3_energy(minus, x0, x1)) / (2.0 * eps)


class So3TraceRecord(TypedDict):
    step: int
    t: float
    E: float
    omega_norm_A: float
    path_length_A: float


@dataclass(eq=False)
class So3Result:
    rotation: Rotation
    trace: List[So3TraceRecord]
    reason: str  # converged | max_steps | line_search_failed

    @property
    def residual(self) -> float:
        return math.sqrt(self.trace[-1]["E"])


def so3_flow(x0, x1, A: So3Inertia, R0: Optional[Rotation] = None, dt: float = 0.05, steps: int = 10_000,
             tol: float = 1e-10, dt_min: float = 1e-12) -> So3Result:
    """
    R_{n+1} = exp(-dt hat(omega_n)) R_n with dt halved until E strictly decreases. Stops when
    |omega|_A < tol. When |x0| != |x1| the flow settles on the orbit-optimal rotation.
    """
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if not tol > 0:
        raise ConfigError(f"tol must be positive, got {tol}")
    R = R0 if R0 is not None else Rotation.identity()
    energy = so3_energy(R, x0, x1)
    omega = so3_gradient(R, x0, x1, A)
    omega_norm = A.norm(omega)
    t, path = 0.0, 0.0
    trace = [So3TraceRecord(step=0, t=t, E=energy, omega_norm_A=omega_norm, path_length_A=path)]

    reason = "max_steps"
    for n in range(1, steps + 1):
        if omega_norm == 0.0 or omega_norm < tol:
            reason = "converged"
            break
        trial_dt = dt
        while trial_dt >= dt_min:
            trial = Rotation(rodrigues(-trial_dt * omega) @ R.matrix)
            trial_energy = so3_energy(trial, x0, x1)
            if trial_energy < energy:
                break
            trial_dt *= 0.5
        else:
            reason = "line_search_failed"
            break
        R, energy = trial, trial_energy
        t += trial_dt
        path += omega_norm * trial_dt
        trace.append(So3TraceRecord(step=n, t=t, E=energy, omega_norm_A=omega_norm, path_length_A=path))
        omega = so3_gradient(R, x0, x1, A)
        omega_norm = A.norm(omega)
    else:
        if omega_norm == 0.0 or omega_norm < tol:
            reason = "converged"
    return So3Result(rotation=R, trace=trace, reason=reason)


def write_so3_trace_csv(trace: List[So3TraceRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SO3_TRACE_COLUMNS)
        for row in trace:
            writer.writerow([repr(row[name]) if isinstance(row[name], float) else row[name]
                             for name in SO3_TRACE_COLUMNS])
