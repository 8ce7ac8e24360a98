"""Closed-loop trajectory-tracking episodes.

An episode samples measurements, control outputs and references at a fixed
period T for at most K_max samples, producing a trail.  The controller runs
once per sample with zero-order hold; the plant is integrated with RK4 at
h = T / substeps between samples.  Step-reference episodes always run the
full horizon; waypoint episodes terminate as soon as the final waypoint is
reached.  A plant singularity or non-finite state aborts the episode and
returns the partial trail flagged as diverged.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import control
from .plant import SystemModel

__all__ = [
    "StepReference",
    "WaypointReference",
    "EpisodeSpec",
    "Trail",
    "step_signal",
    "advance_waypoint",
    "run_episode",
    "trail_to_csv",
]


@dataclass(frozen=True)
class StepReference:
    """Step on one channel: baseline everywhere, baseline + amplitude on the
    stimulated channel from ``step_time`` on (boundary included)."""

    baseline: np.ndarray
    amplitude: float
    channel: int
    step_time: float = 0.0

    def __post_init__(self):
        base = np.asarray(self.baseline, dtype=float)
        if base.shape != (6,):
            raise ValueError("baseline must have 6 entries")
        object.__setattr__(self, "baseline", base)
        if not 0 <= self.channel < 6:
            raise ValueError("channel must be in 0..5")
        if self.step_time < 0:
            raise ValueError("step_time must be >= 0")

    def value(self, t: float) -> np.ndarray:
        ref = self.baseline.copy()
        ref[self.channel] = step_signal(self, t)
        return ref


def step_signal(ref: StepReference, t: float) -> float:
    """Scalar step evaluation on the stimulated channel."""
    if t < 0:
        raise ValueError("t must be >= 0")
    base = float(ref.baseline[ref.channel])
    return base + ref.amplitude if t >= ref.step_time else base


@dataclass(frozen=True)
class WaypointReference:
    """Sequence of full 6-DOF reference rows traversed in order.

    A waypoint counts as reached when the measured (x, y, z) position is
    strictly within ``radius`` of the waypoint position (attitude excluded
    from the gate).  Reaching the last row completes the trajectory.
    """

    waypoints: np.ndarray
    radius: float = 0.25
    metric: str = "position"

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[0] < 1 or wp.shape[1] != 6:
            raise ValueError("waypoints must be an n_w x 6 matrix with n_w >= 1")
        object.__setattr__(self, "waypoints", wp)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.metric != "position":
            raise ValueError("only the xyz-position distance gate is supported")

    @property
    def count(self) -> int:
        return self.waypoints.shape[0]

    def distance(self, y: np.ndarray, index: int) -> float:
        diff = np.asarray(y, dtype=float)[:3] - self.waypoints[index, :3]
        return float(np.linalg.norm(diff))


def advance_waypoint(ref: WaypointReference, y: np.ndarray, current_index: int) -> int:
    """Advance by at most one waypoint per sample; strict-inequality gate.

    Returns ``current_index + 1`` when the current waypoint is reached; a
    result equal to ``ref.count`` means the trajectory is complete.
    """
    if not 0 <= current_index < ref.count:
        raise IndexError("current_index out of range")
    if ref.distance(y, current_index) < ref.radius:
        return current_index + 1
    return current_index


@dataclass(frozen=True)
class EpisodeSpec:
    """One episode: sampling period, horizon, initial state, reference, gains."""

    period: float
    max_samples: int
    x0: np.ndarray
    reference: StepReference | WaypointReference
    params: np.ndarray
    substeps: int = 10

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.max_samples < 1:
            raise ValueError("max_samples must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        x0 = np.asarray(self.x0, dtype=float)
        params = np.asarray(self.params, dtype=float)
        if params.shape != (control.N_PARAMS,):
            raise ValueError("params must have 18 entries")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "params", params)


@dataclass
class Trail:
    """Temporally indexed (y, u, y_ref) samples of one episode."""

    t: np.ndarray
    y: np.ndarray
    u: np.ndarray
    y_ref: np.ndarray
    completed: bool
    completion_time: float
    diverged: bool = False

    def __post_init__(self):
        n = len(self.t)
        if not (self.y.shape[0] == self.u.shape[0] == self.y_ref.shape[0] == n):
            raise ValueError("trail arrays must share their length")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        """Simulated seconds covered by the recorded samples."""
        return float(self.t[-1]) if len(self.t) else 0.0


def run_episode(spec: EpisodeSpec, plant: SystemModel) -> Trail:
    """Simulate the closed loop and record the trail.

    Deterministic: identical (spec, plant) produce bit-identical trails.
    Waypoint episodes end at the first sample whose final-waypoint test
    passes; step episodes run exactly ``max_samples`` samples.
    """
    if plant.n_y != 6 or plant.n_u != 6:
        raise ValueError("episodes require a plant with 6 measurements and 6 inputs")
    T = spec.period
    h = T / spec.substeps
    k_max = spec.max_samples

    reference = spec.reference
    is_step = isinstance(reference, StepReference)
    if is_step:
        y0 = plant.measure(spec.x0)
        if not np.allclose(y0, reference.baseline, atol=1e-9):
            raise ValueError("step episodes require the initial measurement to match the baseline")

    n_rows = k_max + 1
    ts = np.empty(n_rows)
    ys = np.empty((n_rows, 6))
    us = np.empty((n_rows, 6))
    refs = np.empty((n_rows, 6))

    states = control.make_pid_states(T)
    x = spec.x0.copy()
    control.reset(states, plant.measure(x))

    wp_index = 0
    rows = 0
    completed = False
    completion_time = k_max * T
    diverged = False

    for k in range(n_rows):
        t = k * T
        if not plant.state_ok(x):
            diverged = True
            break
        y = plant.C @ x

        if is_step:
            ref_row = reference.value(t)
        else:
            new_index = advance_waypoint(reference, y, wp_index)
            if new_index >= reference.count:
                completed = True
                completion_time = t
                wp_index = reference.count - 1
            else:
                wp_index = new_index
            ref_row = reference.waypoints[wp_index].copy()

        u = control.control_step(spec.params, states, y, ref_row, plant.input_lo, plant.input_hi)

        ts[rows] = t
        ys[rows] = y
        us[rows] = u
        refs[rows] = ref_row
        rows += 1

        if completed:
            break
        if k < k_max:
            x = plant.advance_sample(x, u, h, spec.substeps)

    if is_step and not diverged:
        completed = True
        completion_time = k_max * T
    if diverged:
        completed = False
        completion_time = k_max * T

    return Trail(
        t=ts[:rows].copy(),
        y=ys[:rows].copy(),
        u=us[:rows].copy(),
        y_ref=refs[:rows].copy(),
        completed=completed,
        completion_time=completion_time,
        diverged=diverged,
    )


def trail_to_csv(trail: Trail) -> str:
    """CSV text with the fixed column order t, y1..y6, u1..u6, ref1..ref6."""
    buf = io.StringIO()
    header = ["t"]
    header += [f"y{i}" for i in range(1, 7)]
    header += [f"u{i}" for i in range(1, 7)]
    header += [f"ref{i}" for i in range(1, 7)]
    buf.write(",".join(header) + "\n")
    for k in range(len(trail)):
        row = [repr(float(trail.t[k]))]
        row += [repr(float(v)) for v in trail.y[k]]
        row += [repr(float(v)) for v in trail.u[k]]
        row += [repr(float(v)) for v in trail.y_ref[k]]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
