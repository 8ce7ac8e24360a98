"""Continuous-time system models and a 6-DOF underwater-vehicle plant.

State convention for the vehicle (12 states):
    x = [x, y, z, phi, theta, psi, u, v, w, p, q, r]
position/attitude in the world frame (NED, z down), body velocities nu in
the body frame.  Inputs are body-frame forces and torques
    u = [F_x, F_y, F_z, T_phi, T_theta, T_psi].

Dynamics are Fossen-form with diagonal inertia (rigid body + added mass),
diagonal linear and quadratic damping, and a hydrostatic restoring term
from the center of buoyancy sitting above the center of gravity:

    eta_dot = J(eta) * nu
    nu_dot  = M^-1 (u - D_l nu - D_q nu|nu| - g(eta))

Integration is fixed-step classical RK4; the inner kernels are numba-jitted
because tuning benchmarks run thousands of closed-loop episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "NumericDomainError",
    "KinematicSingularityError",
    "SystemModel",
    "AuvPlant",
    "IntegratorConfig",
    "THETA_GUARD",
]

# Pitch magnitude at which the Euler-angle transform is treated as singular.
THETA_GUARD = math.pi / 2 - 1e-6


class NumericDomainError(ValueError):
    """Raised when a state or input contains non-finite values."""


class KinematicSingularityError(ValueError):
    """Raised when |theta| reaches the Euler-angle singularity."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings: ``substeps`` integrator steps per control period."""

    substeps: int = 10
    method: str = "rk4"

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.method != "rk4":
            raise ValueError("only the classical RK4 integrator is supported")


class SystemModel:
    """Deterministic continuous-time system with a binary selection measurement.

    Subclasses provide ``n_x``, ``n_u``, a measurement matrix ``C`` (exactly
    one 1 per row, at most one per column) and ``derivative``.  Instances are
    immutable after construction and safe to share across episodes.
    """

    n_x: int
    n_u: int
    C: np.ndarray
    # Per-input saturation bounds applied by the controller before the input
    # reaches the plant.  +-inf disables saturation.
    input_lo: np.ndarray
    input_hi: np.ndarray

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def _check_measurement_matrix(self):
        C = self.C
        if C.ndim != 2 or C.shape[1] != self.n_x:
            raise ValueError("C must be n_y x n_x")
        if C.shape[0] > self.n_x:
            raise ValueError("n_y must be <= n_x")
        ok = np.all((C == 0) | (C == 1))
        ok &= np.all(C.sum(axis=1) == 1)
        ok &= np.all(C.sum(axis=0) <= 1)
        if not ok:
            raise ValueError("C must select each measured state exactly once")

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_ok(self, x: np.ndarray) -> bool:
        """Whether the state is inside the model's numeric domain."""
        return bool(np.all(np.isfinite(x)))

    def measure(self, x: np.ndarray) -> np.ndarray:
        """y = C x.  Noise-free selection of the measured state components."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise NumericDomainError("non-finite state in measure()")
        return self.C @ x

    def step(self, x: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
        """One classical RK4 step of size ``h``."""
        if h <= 0:
            raise ValueError("step size must be positive")
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        k1 = self.derivative(x, u)
        k2 = self.derivative(x + 0.5 * h * k1, u)
        k3 = self.derivative(x + 0.5 * h * k2, u)
        k4 = self.derivative(x + h * k3, u)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def advance_sample(self, x: np.ndarray, u: np.ndarray, h: float, substeps: int) -> np.ndarray:
        """Integrate one control period (``substeps`` RK4 steps, input held)."""
        for _ in range(substeps):
            x = self.step(x, u, h)
        return x


@njit(cache=True)
def _auv_derivative_kernel(x, u, m_diag, d_lin, d_quad, weight, buoyancy, b_offset, out):
    phi = x[3]
    theta = x[4]
    psi = x[5]
    cph = math.cos(phi)
    sph = math.sin(phi)
    cth = math.cos(theta)
    sth = math.sin(theta)
    cps = math.cos(psi)
    sps = math.sin(psi)
    tth = sth / cth

    su = x[6]
    sv = x[7]
    sw = x[8]
    sp = x[9]
    sq = x[10]
    sr = x[11]

    # Kinematics: world-frame position/attitude rates from body velocities.
    out[0] = (cps * cth) * su + (-sps * cph + cps * sth * sph) * sv + (sps * sph + cps * cph * sth) * sw
    out[1] = (sps * cth) * su + (cps * cph + sph * sth * sps) * sv + (-cps * sph + sth * sps * cph) * sw
    out[2] = (-sth) * su + (cth * sph) * sv + (cth * cph) * sw
    out[3] = sp + sph * tth * sq + cph * tth * sr
    out[4] = cph * sq - sph * sr
    out[5] = (sph * sq + cph * sr) / cth

    # Hydrostatics: net force if not neutrally buoyant, plus the righting
    # moment of the buoyancy center sitting b_offset above the gravity center.
    wb = weight - buoyancy
    g0 = wb * sth
    g1 = -wb * cth * sph
    g2 = -wb * cth * cph
    g3 = buoyancy * b_offset * cth * sph
    g4 = buoyancy * b_offset * sth

    out[6] = (u[0] - d_lin[0] * su - d_quad[0] * su * abs(su) - g0) / m_diag[0]
    out[7] = (u[1] - d_lin[1] * sv - d_quad[1] * sv * abs(sv) - g1) / m_diag[1]
    out[8] = (u[2] - d_lin[2] * sw - d_quad[2] * sw * abs(sw) - g2) / m_diag[2]
    out[9] = (u[3] - d_lin[3] * sp - d_quad[3] * sp * abs(sp) - g3) / m_diag[3]
    out[10] = (u[4] - d_lin[4] * sq - d_quad[4] * sq * abs(sq) - g4) / m_diag[4]
    out[11] = (u[5] - d_lin[5] * sr - d_quad[5] * sr * abs(sr)) / m_diag[5]
    return out


@njit(cache=True)
def _auv_advance_kernel(x, u, h, substeps, m_diag, d_lin, d_quad, weight, buoyancy, b_offset):
    state = x.copy()
    k1 = np.empty(12)
    k2 = np.empty(12)
    k3 = np.empty(12)
    k4 = np.empty(12)
    tmp = np.empty(12)
    for _ in range(substeps):
        _auv_derivative_kernel(state, u, m_diag, d_lin, d_quad, weight, buoyancy, b_offset, k1)
        for i in range(12):
            tmp[i] = state[i] + 0.5 * h * k1[i]
        _auv_derivative_kernel(tmp, u, m_diag, d_lin, d_quad, weight, buoyancy, b_offset, k2)
        for i in range(12):
            tmp[i] = state[i] + 0.5 * h * k2[i]
        _auv_derivative_kernel(tmp, u, m_diag, d_lin, d_quad, weight, buoyancy, b_offset, k3)
        for i in range(12):
            tmp[i] = state[i] + h * k3[i]
        _auv_derivative_kernel(tmp, u, m_diag, d_lin, d_quad, weight, buoyancy, b_offset, k4)
        for i in range(12):
            state[i] = state[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return state


def _measurement_matrix_12_to_6() -> np.ndarray:
    # Selects [x, y, z, phi, theta, psi] out of the 12-dim state.
    C = np.zeros((6, 12))
    for row in range(6):
        C[row, row] = 1.0
    return C


@dataclass(frozen=True)
class AuvPlant(SystemModel):
    """6-DOF underwater vehicle with diagonal inertia and damping.

    Parameters
    ----------
    inertia : diagonal of the combined rigid-body + added-mass matrix,
        strictly positive (kg for surge/sway/heave, kg m^2 for the rest).
    linear_damping, quadratic_damping : diagonal damping coefficients, >= 0.
    weight_n, buoyancy_n : gravity/buoyancy magnitudes (N).  Equal values
        give a neutrally buoyant vehicle.
    buoyancy_offset_m : distance of the buoyancy center above the gravity
        center; produces restoring moments on roll and pitch.
    force_limit_n, torque_limit_nm : actuator saturation applied to the
        control output before it enters the plant.
    """

    inertia: np.ndarray = field(default_factory=lambda: np.array([30.0, 30.0, 30.0, 5.0, 5.0, 5.0]))
    linear_damping: np.ndarray = field(default_factory=lambda: np.array([20.0, 20.0, 30.0, 3.0, 3.0, 3.0]))
    quadratic_damping: np.ndarray = field(default_factory=lambda: np.array([15.0, 15.0, 20.0, 2.0, 2.0, 2.0]))
    weight_n: float = 294.3
    buoyancy_n: float = 294.3
    buoyancy_offset_m: float = 0.02
    force_limit_n: float = 200.0
    torque_limit_nm: float = 50.0

    n_x: int = field(default=12, init=False)
    n_u: int = field(default=6, init=False)

    def __post_init__(self):
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float))
        object.__setattr__(self, "linear_damping", np.asarray(self.linear_damping, dtype=float))
        object.__setattr__(self, "quadratic_damping", np.asarray(self.quadratic_damping, dtype=float))
        if self.inertia.shape != (6,) or np.any(self.inertia <= 0):
            raise ValueError("inertia must be 6 strictly positive diagonal entries")
        for name in ("linear_damping", "quadratic_damping"):
            arr = getattr(self, name)
            if arr.shape != (6,) or np.any(arr < 0):
                raise ValueError(f"{name} must be 6 non-negative diagonal entries")
        if self.weight_n < 0 or self.buoyancy_n < 0:
            raise ValueError("weight and buoyancy magnitudes must be non-negative")
        if self.force_limit_n <= 0 or self.torque_limit_nm <= 0:
            raise ValueError("saturation limits must be positive")
        object.__setattr__(self, "C", _measurement_matrix_12_to_6())
        lim = np.array([self.force_limit_n] * 3 + [self.torque_limit_nm] * 3)
        object.__setattr__(self, "input_lo", -lim)
        object.__setattr__(self, "input_hi", lim)
        self._check_measurement_matrix()

    def state_ok(self, x: np.ndarray) -> bool:
        return bool(np.all(np.isfinite(x)) and abs(x[4]) < THETA_GUARD)

    def _check_xu(self, x: np.ndarray, u: np.ndarray):
        if x.shape != (12,) or u.shape != (6,):
            raise ValueError("state must have 12 components and input 6")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise NumericDomainError("non-finite state or input")
        if abs(x[4]) >= THETA_GUARD:
            raise KinematicSingularityError(f"|theta| = {abs(x[4]):.6f} at the Euler-angle singularity")

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        self._check_xu(x, u)
        out = np.empty(12)
        return _auv_derivative_kernel(
            x, u, self.inertia, self.linear_damping, self.quadratic_damping,
            self.weight_n, self.buoyancy_n, self.buoyancy_offset_m, out,
        )

    def step(self, x: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
        return self.advance_sample(x, u, h, 1)

    def advance_sample(self, x: np.ndarray, u: np.ndarray, h: float, substeps: int) -> np.ndarray:
        if h <= 0:
            raise ValueError("step size must be positive")
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        self._check_xu(x, u)
        return _auv_advance_kernel(
            x, u, h, substeps, self.inertia, self.linear_damping, self.quadratic_damping,
            self.weight_n, self.buoyancy_n, self.buoyancy_offset_m,
        )

    def kinetic_energy(self, x: np.ndarray) -> float:
        """0.5 nu^T M nu for the body-velocity part of the state."""
        nu = np.asarray(x, dtype=float)[6:]
        return float(0.5 * np.sum(self.inertia * nu * nu))
