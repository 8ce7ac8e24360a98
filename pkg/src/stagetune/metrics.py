"""Scalar tracking-cost objectives computed from trails.

Two integral-error metrics: plain IAE on one channel (step tasks) and the
exponentially-time-weighted IAE (trajectory tasks), both approximated by
the trapezoid rule on the trail's native sampling.  The exponential weight
makes episode length dominate the cost, so early-completed episodes (whose
trails are truncated at the completion time) score far below timed-out
ones.  ``compress`` is the monotone log transform used to condition
surrogate-model targets without moving the argmin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .episode import Trail

__all__ = ["ObjectiveSpec", "iae", "etx_iae", "compress", "MAX_ETX_HORIZON_S"]

# exp(t) overflows double precision just past t = 709.
MAX_ETX_HORIZON_S = 700.0


@dataclass(frozen=True)
class ObjectiveSpec:
    """Metric choice for one tuning task: which metric, over which channels."""

    metric: str
    channels: tuple[int, ...]
    log_compress: bool = True

    def __post_init__(self):
        if self.metric not in ("iae", "etx_iae"):
            raise ValueError("metric must be 'iae' or 'etx_iae'")
        channels = tuple(int(c) for c in self.channels)
        if not channels:
            raise ValueError("channel subset must be non-empty")
        if any(not 0 <= c < 6 for c in channels):
            raise ValueError("channels must be in 0..5")
        object.__setattr__(self, "channels", channels)

    def evaluate(self, trail: Trail) -> float:
        if self.metric == "iae":
            if len(self.channels) != 1:
                raise ValueError("iae is a single-channel metric")
            return iae(trail, self.channels[0])
        return etx_iae(trail, self.channels)


def _check_trail(trail: Trail):
    if len(trail) == 0:
        raise ValueError("trail is empty")


def iae(trail: Trail, channel: int) -> float:
    """Trapezoidal integral of |y_c - ref_c| over the trail."""
    _check_trail(trail)
    if not 0 <= channel < trail.y.shape[1]:
        raise IndexError("channel out of range")
    err = np.abs(trail.y[:, channel] - trail.y_ref[:, channel])
    return float(np.trapezoid(err, trail.t))


def etx_iae(trail: Trail, channels) -> float:
    """Trapezoidal integral of exp(t) * sum_c |y_c - ref_c| over the trail.

    The L1 norm over the selected channels is used for the vector error.
    Integration runs only to the recorded horizon, so truncated
    (early-completed) episodes integrate only to their completion time.
    """
    _check_trail(trail)
    channels = tuple(int(c) for c in channels)
    if not channels:
        raise ValueError("channel subset must be non-empty")
    if float(trail.t[-1]) > MAX_ETX_HORIZON_S:
        raise OverflowError(
            f"horizon {trail.t[-1]:g} s exceeds {MAX_ETX_HORIZON_S:g} s; exp(t) would overflow"
        )
    err = np.abs(trail.y[:, channels] - trail.y_ref[:, channels]).sum(axis=1)
    return float(np.trapezoid(np.exp(trail.t) * err, trail.t))


def compress(cost: float) -> float:
    """log(1 + cost): strictly monotone, so the argmin is preserved."""
    if cost < 0:
        raise ValueError("costs must be non-negative")
    return float(np.log1p(cost))
