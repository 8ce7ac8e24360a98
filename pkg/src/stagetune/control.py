"""Decentralized control law: six independent PID loops.

The 18-entry parameter vector is ordered as (K_p, K_i, K_d) triples for the
roll, pitch, yaw, x, y and z loops, in that order.  Every consumer of a
full parameter vector uses this ordering.  Measurement channels follow the
plant convention [x, y, z, phi, theta, psi]; the loop for channel ``c``
writes plant input ``c`` (forces for position channels, torques for
attitude channels).

Realization: parallel-form PID with trapezoidal integral, derivative on the
measurement (backward difference), angle-wrapped errors on the attitude
loops, and integral clamping so the integral term alone never exceeds the
actuator saturation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plant import NumericDomainError

__all__ = [
    "LOOP_NAMES",
    "LOOP_CHANNEL",
    "ANGLE_CHANNELS",
    "N_PARAMS",
    "param_slice",
    "wrap_angle",
    "ParamVector",
    "PidState",
    "make_pid_states",
    "reset",
    "control_step",
]

# Parameter-block order (fixed): attitude loops first, then position loops.
LOOP_NAMES = ("roll", "pitch", "yaw", "x", "y", "z")
# Measurement/input channel driven by each loop, in LOOP_NAMES order.
LOOP_CHANNEL = {"roll": 3, "pitch": 4, "yaw": 5, "x": 0, "y": 1, "z": 2}
ANGLE_CHANNELS = (3, 4, 5)
N_PARAMS = 18

# Parameter block (kp, ki, kd base index) that drives measurement channel c.
_BLOCK_OF_CHANNEL = {channel: LOOP_NAMES.index(name) for name, channel in LOOP_CHANNEL.items()}


def param_slice(loop: str) -> slice:
    """Indices of the (K_p, K_i, K_d) triple for the named loop."""
    block = LOOP_NAMES.index(loop)
    return slice(3 * block, 3 * block + 3)


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class ParamVector:
    """Full control-parameter vector with its box bounds.

    ``values`` uses the fixed (K_p, K_i, K_d) x (roll, pitch, yaw, x, y, z)
    ordering.  ``validate`` enforces lo <= values <= hi componentwise.
    """

    values: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        for name in ("values", "lo", "hi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_PARAMS,):
                raise ValueError(f"{name} must have {N_PARAMS} entries")
            object.__setattr__(self, name, arr)
        if np.any(self.lo > self.hi):
            raise ValueError("lower bounds exceed upper bounds")

    def validate(self):
        bad = np.where((self.values < self.lo) | (self.values > self.hi))[0]
        if bad.size:
            detail = ", ".join(
                f"[{i}] {LOOP_NAMES[i // 3]}.{'kp ki kd'.split()[i % 3]}={self.values[i]:g} "
                f"outside [{self.lo[i]:g}, {self.hi[i]:g}]"
                for i in bad
            )
            raise ValueError(f"parameters out of bounds: {detail}")
        return self


@dataclass
class PidState:
    """Mutable per-episode state of one PID loop."""

    period: float
    integral: float = 0.0
    prev_error: float | None = None
    prev_meas: float | None = None

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("sample period must be positive")


def make_pid_states(period: float) -> list[PidState]:
    """One PidState per measurement channel (index = channel)."""
    return [PidState(period) for _ in range(6)]


def reset(states: list[PidState], y0: np.ndarray | None = None) -> list[PidState]:
    """Zero the integrators and seed the previous measurement from ``y0``.

    With the previous measurement seeded, the first derivative term of the
    episode is exactly zero.  Idempotent.
    """
    for channel, st in enumerate(states):
        st.integral = 0.0
        st.prev_error = None
        st.prev_meas = None if y0 is None else float(y0[channel])
    return states


def control_step(
    params: np.ndarray,
    states: list[PidState],
    y: np.ndarray,
    y_ref: np.ndarray,
    input_lo: np.ndarray,
    input_hi: np.ndarray,
) -> np.ndarray:
    """One synchronous update of all six loops; returns the saturated input.

    For each loop: e = ref - y (wrapped for attitude channels),
    u = K_p e + K_i * trapezoid(e) - K_d * d(y)/dt, then clipped to the
    actuator bounds.  The integral is clamped so |K_i * integral| stays
    within the saturation bound (anti-windup).
    """
    params = np.asarray(params, dtype=float)
    y = np.asarray(y, dtype=float)
    y_ref = np.asarray(y_ref, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_ref)) and np.all(np.isfinite(params))):
        raise NumericDomainError("non-finite controller input")

    u = np.zeros(6)
    for channel in range(6):
        st = states[channel]
        base = 3 * _BLOCK_OF_CHANNEL[channel]
        kp, ki, kd = params[base], params[base + 1], params[base + 2]
        angular = channel in ANGLE_CHANNELS

        err = y_ref[channel] - y[channel]
        if angular:
            err = wrap_angle(err)

        if st.prev_error is not None:
            st.integral += 0.5 * st.period * (err + st.prev_error)
            if ki > 0.0:
                bound = max(abs(input_lo[channel]), abs(input_hi[channel])) / ki
                if math.isfinite(bound):
                    st.integral = min(max(st.integral, -bound), bound)
        st.prev_error = err

        if st.prev_meas is None:
            dmeas = 0.0
        else:
            dy = y[channel] - st.prev_meas
            if angular:
                dy = wrap_angle(dy)
            dmeas = dy / st.period
        st.prev_meas = float(y[channel])

        raw = kp * err + ki * st.integral - kd * dmeas
        u[channel] = min(max(raw, input_lo[channel]), input_hi[channel])
    return u
