"""Reference velocity scheduling and its decentralized propagation.

Only the current leader receives the planner's velocity command; every
other agent runs a linear neighbor-averaging estimator of it.  The command
is sample-and-hold: constant between consecutive sending instants.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .graphs import GroundedSpectrum
from .stacked import laplacian_apply, replicate, with_block


@dataclass(frozen=True)
class ReferenceSignal:
    """Piecewise-constant velocity command with known activation times."""

    times: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not self.times or self.times[0] != 0.0:
            raise ValueError("schedule must start at t=0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("activation times must be strictly increasing")
        if len(self.times) != len(self.values):
            raise ValueError("times and values must pair up")

    @property
    def dimension(self) -> int:
        return len(self.values[0])

    @classmethod
    def constant(cls, value) -> "ReferenceSignal":
        return cls(times=(0.0,), values=(tuple(float(v) for v in np.atleast_1d(value)),))

    @classmethod
    def from_schedule(cls, pairs) -> "ReferenceSignal":
        times, values = zip(*((float(t), tuple(map(float, v))) for t, v in pairs))
        return cls(times=times, values=values)

    @classmethod
    def random_piecewise(
        cls, period: float, duration: float, dimension: int, seed: int,
        low: float = -1.0, high: float = 1.0,
    ) -> "ReferenceSignal":
        """Fresh uniform draw per component at every multiple of the period."""
        rng = np.random.default_rng(seed)
        times = []
        values = []
        t = 0.0
        while t <= duration + 1e-12:
            times.append(round(t, 12))
            values.append(tuple(rng.uniform(low, high, dimension)))
            t += period
        return cls(times=tuple(times), values=tuple(values))

    def value_at(self, t: float) -> np.ndarray:
        idx = bisect.bisect_right(self.times, t + 1e-12) - 1
        return np.array(self.values[max(idx, 0)], dtype=float)


@dataclass(frozen=True)
class EstimateField:
    """Stacked per-agent estimates of the reference velocity, plus the gain."""

    estimates: np.ndarray
    gain: float

    def __post_init__(self):
        if self.gain <= 0.0:
            raise ValueError("estimator gain must be positive")


def estimator_rate(field: EstimateField, spectrum: GroundedSpectrum, dim: int) -> np.ndarray:
    """Time derivative of the stacked estimates under the grounded diffusion.

    The leader's component of the returned vector is exactly zero because
    the grounded Laplacian's leader row is zero.
    """
    if field.estimates.size != spectrum.n_agents * dim:
        raise ValueError("estimate vector does not match graph size and dimension")
    return -field.gain * laplacian_apply(spectrum.grounded_laplacian, field.estimates, dim)


def clamp_leader(field: EstimateField, leader: int, u_r) -> EstimateField:
    """Overwrite the leader's estimate block with the true command.

    This is the reset action at a selection tick; follower blocks are
    untouched and re-clamping an already-clamped leader is a no-op.
    """
    u_r = np.atleast_1d(np.asarray(u_r, dtype=float))
    return EstimateField(
        estimates=with_block(field.estimates, leader, u_r.size, u_r),
        gain=field.gain,
    )


def estimation_error(field: EstimateField, u_r) -> np.ndarray:
    """Stacked estimate-minus-command error."""
    u_r = np.atleast_1d(np.asarray(u_r, dtype=float))
    n = field.estimates.size // u_r.size
    return field.estimates - replicate(u_r, n)


def rk4_step(f, y: np.ndarray, dt: float) -> np.ndarray:
    """One fixed-step explicit Runge-Kutta-4 step of y' = f(y)."""
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
